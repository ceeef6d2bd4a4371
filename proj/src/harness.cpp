#include "tpvae/harness.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <optional>
#include <stdexcept>

#include <omp.h>

#include "tpvae/errors.hpp"

namespace tpvae {

namespace {

double histogram_entropy(const std::vector<std::size_t>& counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) return 0.0;
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log(p);
  }
  return h;
}

struct EpisodeOutcome {
  EpisodeRecord record;
  double max_row_sum_error = 0.0;
  bool prior_intact = true;
};

EpisodeOutcome run_indexed(const EmbeddingDataset& ds, const EpisodeSpec& spec, const SolverConfig& cfg,
                           std::uint64_t seed, std::size_t index, Method method) {
  RngStream sampling(seed, make_stream_id(index, Purpose::episode_sampling));
  const Episode episode = sample_episode(ds, spec, sampling);
  RngStream solver_rng(seed, make_stream_id(index, Purpose::latent_sampling));
  const EpisodeResult result =
      method == Method::tpvae ? run_episode(episode, cfg, solver_rng) : baseline_prototype(episode, cfg.tau);
  EpisodeOutcome out;
  out.record.index = index;
  out.record.accuracy = result.accuracy;
  out.record.iters_run = result.iters_run;
  out.record.final_total_loss = result.loss_trace.empty() ? 0.0 : result.loss_trace.back().total;
  out.record.marginal_entropy = histogram_entropy(result.predicted_counts);
  out.record.selection_hash = episode.selection_hash();
  out.max_row_sum_error = result.max_row_sum_error;
  out.prior_intact = result.prior_intact;
  return out;
}

[[noreturn]] void rethrow_with_index(std::exception_ptr err, std::size_t index) {
  const std::string prefix = "episode " + std::to_string(index) + ": ";
  try {
    std::rethrow_exception(err);
  } catch (const SamplingError& e) {
    throw SamplingError(prefix + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(prefix + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(prefix + e.what());
  } catch (const std::exception& e) {
    throw std::runtime_error(prefix + e.what());
  }
}

}  // namespace

std::pair<double, double> mean_ci95(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double sum = 0.0;
  for (double v : values) sum += v;
  const double n = static_cast<double>(values.size());
  const double mean = sum / n;
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, 1.96 * sd / std::sqrt(n)};
}

EvalSummary evaluate(const EmbeddingDataset& ds, const EpisodeSpec& spec, const SolverConfig& cfg,
                     std::size_t episodes, std::uint64_t seed, const HarnessOptions& opts) {
  spec.validate();
  cfg.validate();
  if (episodes == 0) throw std::invalid_argument("evaluate: episodes must be positive");
  const auto start = std::chrono::steady_clock::now();

  std::vector<EpisodeOutcome> outcomes(episodes);
  std::vector<std::exception_ptr> errors(episodes);
  const auto n = static_cast<std::int64_t>(episodes);

  if (opts.execution == Execution::serial) {
    for (std::int64_t i = 0; i < n; ++i) {
      try {
        outcomes[i] = run_indexed(ds, spec, cfg, seed, static_cast<std::size_t>(i), opts.method);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    const int workers = opts.workers > 0 ? opts.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
    for (std::int64_t i = 0; i < n; ++i) {
      try {
        outcomes[i] = run_indexed(ds, spec, cfg, seed, static_cast<std::size_t>(i), opts.method);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  }
  for (std::size_t i = 0; i < episodes; ++i) {
    if (errors[i]) rethrow_with_index(errors[i], i);
  }

  EvalSummary s;
  s.episodes = episodes;
  s.method = opts.method;
  s.solver = cfg;
  s.spec = spec;
  s.dataset_fingerprint = ds.fingerprint();
  s.seed = seed;
  s.accuracies.reserve(episodes);
  s.records.reserve(episodes);
  s.curve.reserve(episodes);
  double running = 0.0;
  double entropy = 0.0;
  std::uint64_t pairing = 0xcbf29ce484222325ULL;
  for (const auto& o : outcomes) {
    s.records.push_back(o.record);
    s.accuracies.push_back(o.record.accuracy);
    running += o.record.accuracy;
    s.curve.push_back(running / static_cast<double>(s.curve.size() + 1));
    entropy += o.record.marginal_entropy;
    s.max_row_sum_error = std::max(s.max_row_sum_error, o.max_row_sum_error);
    s.prior_intact = s.prior_intact && o.prior_intact;
    unsigned char buf[8];
    for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>(o.record.selection_hash >> (8 * b));
    pairing = fnv1a64(buf, pairing);
  }
  std::tie(s.mean, s.ci95) = mean_ci95(s.accuracies);
  s.mean_marginal_entropy = entropy / static_cast<double>(episodes);
  s.pairing_hash = pairing;
  s.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  return s;
}

AblationTable ablate(const EmbeddingDataset& ds, const EpisodeSpec& spec, const SolverConfig& cfg,
                     std::size_t episodes, std::uint64_t seed, const HarnessOptions& opts) {
  AblationTable table;
  for (LossWeights w : {LossWeights::ce_only(), LossWeights::ce_re(), LossWeights::ce_tp(), LossWeights::full()}) {
    w.tp_form = cfg.weights.tp_form;
    w.reduction = cfg.weights.reduction;
    SolverConfig arm = cfg;
    arm.weights = w;
    table.rows.push_back({w.name(), w, evaluate(ds, spec, arm, episodes, seed, opts)});
  }
  return table;
}

std::vector<TauPoint> sweep_tau(const EmbeddingDataset& ds, const EpisodeSpec& spec, const SolverConfig& cfg,
                                const std::vector<double>& taus, std::size_t episodes, std::uint64_t seed,
                                const HarnessOptions& opts) {
  if (taus.empty()) throw std::invalid_argument("sweep_tau: empty tau list");
  for (double t : taus) {
    if (!(t > 0.0)) throw std::invalid_argument("sweep_tau: every tau must be positive");
  }
  std::vector<TauPoint> out;
  out.reserve(taus.size());
  for (double t : taus) {
    SolverConfig arm = cfg;
    arm.tau = t;
    out.push_back({t, evaluate(ds, spec, arm, episodes, seed, opts)});
  }
  return out;
}

std::vector<Scenario> scenario_specs(Preprocess preprocess) {
  std::vector<Scenario> out;
  for (std::size_t shot : {1u, 5u}) {
    const std::string suffix = "-" + std::to_string(shot) + "shot";
    out.push_back({"uniform" + suffix, {5, shot, kUniformProfile, preprocess}});
    out.push_back({"slight" + suffix, {5, shot, kSlightProfile, preprocess}});
    out.push_back({"extreme" + suffix, {5, shot, kExtremeProfile, preprocess}});
  }
  return out;
}

std::vector<ScenarioResult> scenario_battery(const EmbeddingDataset& ds, const SolverConfig& cfg,
                                             std::size_t episodes, std::uint64_t seed, Preprocess preprocess,
                                             const HarnessOptions& opts) {
  std::vector<ScenarioResult> out;
  for (auto& sc : scenario_specs(preprocess)) {
    EvalSummary s = evaluate(ds, sc.spec, cfg, episodes, seed, opts);
    out.push_back({std::move(sc), std::move(s)});
  }
  return out;
}

}  // namespace tpvae
