// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
// Tolerances are fixed here; do not loosen them to make a line go green.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "oracles.hpp"

using namespace tpvae;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Row-sum and immutability diagnostics accumulated over every harness run below.
struct Hygiene {
  double worst_row_error = 0.0;
  bool prior_intact = true;
  std::size_t runs = 0;

  const EvalSummary& track(const EvalSummary& s) {
    worst_row_error = std::max(worst_row_error, s.max_row_sum_error);
    prior_intact = prior_intact && s.prior_intact;
    ++runs;
    return s;
  }
} hygiene;

void gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  RngStream rng(1001, 0);
  const LossWeights configs[] = {LossWeights::ce_only(), LossWeights::ce_re(), LossWeights::ce_tp(),
                                 LossWeights::full()};
  double worst = 0.0;
  std::size_t coords = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t way = 3 + trial % 3;
    const std::size_t nq = 1 + rng.uniform_index(15);
    auto inst = oracle::random_instance(rng, way, 8, nq, 0.5 + 4.0 * rng.uniform());
    const auto res = oracle::check_gradients(inst.state, inst.episode, configs[trial % 4], inst.latents, 1e-5);
    worst = std::max(worst, res.max_rel_err);
    coords += res.coords;
  }
  const double secs = seconds_since(t0);
  report(1, "gradient fidelity", worst < 1e-4 && secs < 30.0,
         fmt("max rel err %.3g (< 1e-4) over %zu coordinates, 50 instances, %.1f s (< 30 s)", worst, coords, secs));
}

void jensen_relaxation() {
  RngStream rng(1002, 0);
  std::size_t order_violations = 0, sign_violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(6);
    const std::size_t nq = 1 + rng.uniform_index(20);
    const Matrix post = oracle::random_rows(nq, n, rng, 3.0 * rng.uniform());
    const PriorMatrix prior(oracle::random_rows(nq, n, rng, 3.0 * rng.uniform()));
    const double tp = loss_tp(post, prior, TpForm::jensen_marginal);
    if (!(loss_sample_kl(post, prior) <= tp + 1e-12)) ++order_violations;
    if (!(tp <= 0.0)) ++sign_violations;
  }

  // Equality iff the class marginals match, both directions.
  std::size_t iff_violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(4);
    const std::size_t nq = 2 + rng.uniform_index(10);
    const Matrix a = oracle::random_rows(nq, n, rng);
    const PriorMatrix pa(a);
    // Same marginals: permute rows.
    Matrix perm(nq, n);
    for (std::size_t i = 0; i < nq; ++i) {
      for (std::size_t k = 0; k < n; ++k) perm(i, k) = a((i + 1) % nq, k);
    }
    if (!(std::abs(loss_tp(perm, pa, TpForm::jensen_marginal)) < 1e-9)) ++iff_violations;
    // Different marginals: move mass between classes in one row.
    Matrix moved = a;
    const double shift = 0.5 * moved(0, 0);
    moved(0, 0) -= shift;
    moved(0, 1) += shift;
    const bool differ = shift > 1e-3;
    if (differ && !(loss_tp(moved, pa, TpForm::jensen_marginal) < -1e-9)) ++iff_violations;
  }
  report(2, "Jensen relaxation", order_violations == 0 && sign_violations == 0 && iff_violations == 0,
         fmt("sample_kl <= tp + 1e-12 violated %zu/1000, tp > 0 in %zu/1000, zero-iff-marginals violated %zu/400",
             order_violations, sign_violations, iff_violations));
}

void oracle_equivalence() {
  // 2-way, 1-D: psi = {0, 1}, tau = 1, single query at z = 0.
  const Episode ep = oracle::toy_episode({0.0});
  TPVAEState st;
  st.prototypes = Prototypes{Matrix(2, 1), 1.0};
  st.prototypes.psi(1, 0) = 1.0;
  st.prior = snapshot_prior(ep, st.prototypes);
  RngStream rng(0, 0);
  st.decoder = DecoderParams::zeros_like(init_decoder(1, 1, 1, rng));
  const std::vector<LatentSet> lat{deterministic_latents(ep)};

  double worst = 0.0;
  auto expect = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  const double p0 = 0.731058578630004879;
  expect(posterior(Vec64{0.0}, st.prototypes)[0], p0);
  expect(loss_lik(st, lat, ep), -0.268941421369995121);
  expect(loss_ce(st, ep, lat), -std::log(p0));
  expect(loss_recon(st, lat, ep), 0.0);

  Matrix post(2, 2), flat(2, 2, 0.5);
  post(0, 0) = 1.0;
  post(1, 0) = 0.5;
  post(1, 1) = 0.5;
  const PriorMatrix prior(flat);
  expect(loss_tp(post, prior, TpForm::jensen_marginal), -0.261624071882273918);
  expect(loss_tp(flat, prior, TpForm::jensen_marginal), 0.0);
  expect(loss_sample_kl(flat, prior), 0.0);

  Episode ep2;
  ep2.spec = {2, 1, {1, 0}, Preprocess::none};
  ep2.class_ids = {0, 1};
  ep2.support = {{Vec64{0, 0}, 0, {0, 0}}, {Vec64{1, 1}, 1, {1, 0}}};
  ep2.query = {{Vec64{3, 4}, 0, {0, 1}}};
  TPVAEState st2;
  st2.prototypes = init_prototypes(ep2, 1.0);
  st2.prior = snapshot_prior(ep2, st2.prototypes);
  st2.decoder = DecoderParams::zeros_like(init_decoder(2, 2, 2, rng));
  expect(loss_recon(st2, {deterministic_latents(ep2)}, ep2), -12.5);

  // Prototypes all equal: CE = log 2.
  TPVAEState same = st;
  same.prototypes.psi(1, 0) = 0.0;
  expect(loss_ce(same, ep, lat), std::log(2.0));

  // Total with unit weights, summed reduction, on the first toy.
  LossWeights w = LossWeights::full();
  w.reduction = QueryReduction::sum;
  const LossBreakdown b = total_loss(st, ep, w, lat);
  expect(b.total, -std::log(p0) - (0.0 + -0.268941421369995121 + 0.0));
  report(4, "oracle equivalence", worst < 1e-9, fmt("max abs deviation %.3g (< 1e-9) over 10 hand values", worst));
}

void separable_benchmark() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto easy = gen_synthetic({20, 64, 100, 12.0, 1});
  const auto flat = gen_synthetic({20, 64, 100, 0.0, 1});
  const EvalSummary& e = hygiene.track(evaluate(easy, EpisodeSpec{}, SolverConfig{}, 200, 0));
  const double easy_secs = seconds_since(t0);
  const EvalSummary& f = hygiene.track(evaluate(flat, EpisodeSpec{}, SolverConfig{}, 200, 0));
  report(5, "synthetic separable benchmark",
         e.mean >= 0.99 && std::abs(f.mean - 0.20) <= 0.04 && easy_secs < 120.0,
         fmt("separation 12: %.4f (>= 0.99) in %.1f s (< 120 s); separation 0: %.4f (0.20 +- 0.04)", e.mean,
             easy_secs, f.mean));
}

void transductive_experiments() {
  const auto ds = gen_synthetic({20, 8, 200, 3.0, 1});
  const EpisodeSpec uniform;
  const SolverConfig cfg;
  const std::size_t n = 500;

  HarnessOptions base_opts;
  base_opts.method = Method::baseline;
  const EvalSummary& base = hygiene.track(evaluate(ds, uniform, cfg, n, 0, base_opts));
  const AblationTable table = ablate(ds, uniform, cfg, n, 0);
  for (const auto& r : table.rows) hygiene.track(r.summary);
  const EvalSummary& ce = table.rows[0].summary;
  const EvalSummary& ce_re = table.rows[1].summary;
  const EvalSummary& ce_tp = table.rows[2].summary;
  const EvalSummary& full = table.rows[3].summary;
  const bool paired = base.pairing_hash == full.pairing_hash && ce.pairing_hash == full.pairing_hash &&
                      ce_re.pairing_hash == full.pairing_hash && ce_tp.pairing_hash == full.pairing_hash;

  // Observed on the validated build: full 0.5201, baseline 0.4769.
  constexpr double kFrozenGap = 0.0432;
  const double gap = full.mean - base.mean;
  report(6, "transductive gain", paired && full.mean >= base.mean && gap >= -0.005,
         fmt("full %.4f vs baseline %.4f, gap %+.2f points (frozen expectation %+.2f, floor -0.5), paired %s",
             full.mean, base.mean, 100 * gap, 100 * kFrozenGap, paired ? "yes" : "no"));

  constexpr double kSlack = 0.005;
  const bool leg1 = full.mean >= ce_tp.mean - kSlack;
  const bool leg2 = ce_tp.mean >= ce.mean - kSlack;
  const bool leg3 = ce.mean >= ce_re.mean - kSlack;
  const bool collapse = ce_re.mean_marginal_entropy <= full.mean_marginal_entropy;
  report(7, "ablation ordering", paired && leg1 && leg2 && leg3 && collapse,
         fmt("ce+tp+re %.4f >= ce+tp %.4f [%s]; ce+tp >= ce %.4f [%s]; ce >= ce+re %.4f [%s] (0.5-point slack); "
             "entropy ce+re %.4f <= ce+tp+re %.4f [%s]",
             full.mean, ce_tp.mean, leg1 ? "ok" : "violated", ce.mean, leg2 ? "ok" : "violated", ce_re.mean,
             leg3 ? "ok" : "violated", ce_re.mean_marginal_entropy, full.mean_marginal_entropy,
             collapse ? "ok" : "violated"));

  EpisodeSpec extreme = uniform;
  extreme.query_counts = kExtremeProfile;
  const EvalSummary& ex = hygiene.track(evaluate(ds, extreme, cfg, n, 0));
  const double drop = full.mean - ex.mean;
  report(8, "nonuniform robustness", std::abs(drop) <= 0.05,
         fmt("uniform %.4f, extreme [19,19,18,18,1] %.4f, difference %.2f points (<= 5)", full.mean, ex.mean,
             100 * drop));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void determinism() {
  const fs::path dir = fs::temp_directory_path() / "tpvae_acceptance";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string data = (dir / "d.fse").string();
  std::ostringstream sink;
  bool ok = cli::run({"gen-synth", "--classes", "20", "--dim", "8", "--per-class", "100", "--sep", "3", "--seed", "4",
                      "--out", data},
                     sink, sink) == 0;
  std::vector<std::string> hashes;
  for (const char* workers : {"1", "2", "1", "4"}) {
    const std::string out = (dir / (std::string("w") + workers + "_" + std::to_string(hashes.size()))).string();
    ok = ok && cli::run({"run", "--data", data, "--episodes", "40", "--seed", "7", "--workers", workers, "--out", out},
                        sink, sink) == 0;
    const std::string csv = slurp(fs::path(out) / "episodes.csv");
    hashes.push_back(std::to_string(fnv1a64({reinterpret_cast<const unsigned char*>(csv.data()), csv.size()})));
    ok = ok && !csv.empty();
  }
  bool same = true;
  for (const auto& h : hashes) same = same && h == hashes.front();
  report(9, "determinism", ok && same,
         fmt("episodes.csv identical across 4 runs with --workers 1,2,1,4: %s", same ? "yes" : "no"));
}

void extended_features() {
  const char* path = std::getenv("TPVAE_EXTENDED_FEATURES");
  if (!path) {
    std::printf("[SKIP] 10 extended real-feature check: set TPVAE_EXTENDED_FEATURES to an FSE1 file of extracted "
                "ResNet-18 mini-ImageNet test features to run it\n");
    return;
  }
  const auto ds = load_dataset(path, DatasetFormat::fse1);
  const EvalSummary& s = hygiene.track(evaluate(ds, EpisodeSpec{}, SolverConfig{}, 1000, 0));
  report(10, "extended real-feature check", std::abs(100 * s.mean - 76.9) <= 1.5,
         fmt("mean %.2f%% (reference 76.9 +- 1.5)", 100 * s.mean));
}

void guarded(int id, const char* name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(id, name, false, std::string("threw: ") + e.what());
  }
}

}  // namespace

int main() {
  guarded(1, "gradient fidelity", gradient_fidelity);
  guarded(2, "Jensen relaxation", jensen_relaxation);
  guarded(4, "oracle equivalence", oracle_equivalence);
  guarded(5, "synthetic separable benchmark", separable_benchmark);
  guarded(6, "transductive experiments", transductive_experiments);
  report(3, "probability hygiene", hygiene.runs > 0 && hygiene.worst_row_error < 1e-9 && hygiene.prior_intact,
         fmt("worst row-sum error %.3g (< 1e-9), prior byte-identical after solving: %s, over %zu harness runs",
             hygiene.worst_row_error, hygiene.prior_intact ? "yes" : "no", hygiene.runs));
  guarded(9, "determinism", determinism);
  guarded(10, "extended real-feature check", extended_features);
  std::printf("%d criterion line(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
