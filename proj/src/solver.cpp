#include "tpvae/solver.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "tpvae/errors.hpp"

namespace tpvae {

namespace {

std::vector<std::span<double>> parameter_views(TPVAEState& state) {
  auto& dec = state.decoder;
  return {state.prototypes.psi.data, dec.w1.data, dec.b1, dec.w2.data, dec.b2};
}

std::vector<std::span<const double>> gradient_views(const Gradients& g) {
  const auto& dec = g.d_decoder;
  return {g.d_psi.data, dec.w1.data, dec.b1, dec.w2.data, dec.b2};
}

double row_sum_error(const Matrix& m) {
  double worst = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    double sum = 0.0;
    for (double p : m.row(i)) sum += p;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

void finalize(const Episode& episode, const Prototypes& protos, const PriorMatrix& prior, EpisodeResult& out) {
  out.predicted = predict(episode, protos);
  out.accuracy = accuracy_of(episode, out.predicted);
  out.predicted_counts.assign(protos.way(), 0);
  for (auto k : out.predicted) ++out.predicted_counts[k];
  std::vector<Vec64> features;
  features.reserve(episode.query.size());
  for (const auto& q : episode.query) features.push_back(q.feature);
  out.max_row_sum_error = std::max(row_sum_error(prior.probs()), row_sum_error(posterior_rows(features, protos)));
}

}  // namespace

void SolverConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("solver: lr must be positive");
  if (!(momentum >= 0.0) || !std::isfinite(momentum)) throw std::invalid_argument("solver: momentum must be >= 0");
  if (!(tol >= 0.0)) throw std::invalid_argument("solver: tol must be >= 0");
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("solver: tau must be positive");
  if (!(sigma_enc >= 0.0) || !std::isfinite(sigma_enc)) throw std::invalid_argument("solver: sigma_enc must be >= 0");
  if (mc_samples < 1) throw std::invalid_argument("solver: mc_samples must be >= 1");
  weights.validate();
}

void sgd_step(std::span<double> params, std::span<const double> grads, double lr, double momentum,
              std::span<double> velocity) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw DimensionError("sgd_step: parameter, gradient and velocity lengths differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i];
    params[i] -= lr * velocity[i];
  }
}

double accuracy_of(const Episode& episode, const std::vector<std::size_t>& predicted) {
  if (predicted.size() != episode.query.size()) throw DimensionError("accuracy: prediction count mismatch");
  if (predicted.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == episode.query[i].label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

TPVAEState init_state(const Episode& episode, const SolverConfig& cfg, RngStream& rng) {
  const std::size_t dim = episode.dim();
  const std::size_t hidden = cfg.d_hidden == 0 ? dim : cfg.d_hidden;
  TPVAEState state;
  state.decoder = init_decoder(dim, hidden, dim, rng);
  state.prototypes = init_prototypes(episode, cfg.tau);
  state.prior = snapshot_prior(episode, state.prototypes);
  state.sigma_enc = cfg.sigma_enc;
  state.mc_samples = cfg.mc_samples;
  return state;
}

EpisodeResult run_episode(const Episode& episode, const SolverConfig& cfg, RngStream& rng) {
  cfg.validate();
  TPVAEState state = init_state(episode, cfg, rng);
  const std::vector<double> prior_bytes = state.prior.probs().data;

  auto params = parameter_views(state);
  std::vector<std::vector<double>> velocity;
  for (const auto& p : params) velocity.emplace_back(p.size(), 0.0);

  EpisodeResult out;
  out.loss_trace.reserve(cfg.max_iters);
  Gradients grads;
  for (std::size_t t = 0; t < cfg.max_iters; ++t) {
    const auto latents = sample_latents(episode, state.sigma_enc, state.mc_samples, rng);
    const LossBreakdown loss = loss_and_grad(state, episode, cfg.weights, latents, &grads);
    out.loss_trace.push_back(loss);
    if (t > 0 && std::abs(loss.total - out.loss_trace[t - 1].total) < cfg.tol) break;
    const auto g = gradient_views(grads);
    for (std::size_t b = 0; b < params.size(); ++b) sgd_step(params[b], g[b], cfg.lr, cfg.momentum, velocity[b]);
    ++out.iters_run;
    for (double v : state.prototypes.psi.data) {
      if (!std::isfinite(v)) throw NumericalError("prototypes became non-finite at iteration " + std::to_string(t));
    }
  }

  out.prior_intact = prior_bytes.size() == state.prior.probs().data.size() &&
                     std::memcmp(prior_bytes.data(), state.prior.probs().data.data(),
                                 prior_bytes.size() * sizeof(double)) == 0;
  finalize(episode, state.prototypes, state.prior, out);
  return out;
}

EpisodeResult baseline_prototype(const Episode& episode, double tau) {
  const Prototypes protos = init_prototypes(episode, tau);
  const PriorMatrix prior = snapshot_prior(episode, protos);
  EpisodeResult out;
  finalize(episode, protos, prior, out);
  return out;
}

}  // namespace tpvae
