#include <cmath>

#include "doctest.h"
#include "tpvae/errors.hpp"
#include "tpvae/harness.hpp"

using namespace tpvae;

namespace {

const EmbeddingDataset& moderate() {
  static const EmbeddingDataset ds = gen_synthetic({20, 8, 60, 3.0, 1});
  return ds;
}

SolverConfig quick() {
  SolverConfig cfg;
  cfg.max_iters = 25;
  return cfg;
}

void same_results(const EvalSummary& a, const EvalSummary& b) {
  CHECK(a.records == b.records);
  CHECK(a.accuracies == b.accuracies);
  CHECK(a.mean == b.mean);
  CHECK(a.ci95 == b.ci95);
  CHECK(a.curve == b.curve);
  CHECK(a.pairing_hash == b.pairing_hash);
  CHECK(a.mean_marginal_entropy == b.mean_marginal_entropy);
}

}  // namespace

TEST_CASE("mean_ci95") {
  const auto [m1, c1] = mean_ci95({0.7});
  CHECK(m1 == 0.7);
  CHECK(c1 == 0.0);

  const auto [m, c] = mean_ci95({0.2, 0.4, 0.6, 0.8});
  CHECK(m == doctest::Approx(0.5).epsilon(1e-15));
  // s = sqrt(0.2/3), ci = 1.96 * s / 2
  CHECK(c == doctest::Approx(1.96 * std::sqrt(0.2 / 3.0) / 2.0).epsilon(1e-14));
}

TEST_CASE("evaluate aggregates its own records") {
  const EvalSummary s = evaluate(moderate(), EpisodeSpec{}, quick(), 24, 5);
  REQUIRE(s.accuracies.size() == 24);
  double sum = 0.0;
  for (std::size_t i = 0; i < 24; ++i) {
    CHECK(s.records[i].index == i);
    CHECK(s.records[i].accuracy == s.accuracies[i]);
    sum += s.accuracies[i];
    CHECK(std::abs(s.curve[i] - sum / static_cast<double>(i + 1)) < 1e-12);
  }
  const double mean = sum / 24.0;
  double ss = 0.0;
  for (double a : s.accuracies) ss += (a - mean) * (a - mean);
  CHECK(std::abs(s.mean - mean) < 1e-12);
  CHECK(std::abs(s.ci95 - 1.96 * std::sqrt(ss / 23.0) / std::sqrt(24.0)) < 1e-12);
  CHECK(s.prior_intact);
  CHECK(s.max_row_sum_error < 1e-9);
  CHECK(s.dataset_fingerprint == moderate().fingerprint());
  CHECK(s.solver == quick());
}

TEST_CASE("single separable episode") {
  const auto easy = gen_synthetic({20, 64, 40, 12.0, 1});
  const EvalSummary s = evaluate(easy, EpisodeSpec{}, SolverConfig{}, 1, 0);
  CHECK(s.mean == 1.0);
  CHECK(s.ci95 == 0.0);
}

TEST_CASE("serial and parallel execution agree bitwise") {
  HarnessOptions serial{0, Execution::serial, Method::tpvae};
  HarnessOptions two{2, Execution::parallel, Method::tpvae};
  HarnessOptions three{3, Execution::parallel, Method::tpvae};
  const auto a = evaluate(moderate(), EpisodeSpec{}, quick(), 16, 9, serial);
  const auto b = evaluate(moderate(), EpisodeSpec{}, quick(), 16, 9, two);
  const auto c = evaluate(moderate(), EpisodeSpec{}, quick(), 16, 9, three);
  same_results(a, b);
  same_results(a, c);
}

TEST_CASE("repeat runs are identical") {
  const auto a = evaluate(moderate(), EpisodeSpec{}, quick(), 12, 3);
  const auto b = evaluate(moderate(), EpisodeSpec{}, quick(), 12, 3);
  same_results(a, b);
  const auto other = evaluate(moderate(), EpisodeSpec{}, quick(), 12, 4);
  CHECK(other.pairing_hash != a.pairing_hash);
}

TEST_CASE("ablate pairs its four arms") {
  const AblationTable t = ablate(moderate(), EpisodeSpec{}, quick(), 10, 2);
  REQUIRE(t.rows.size() == 4);
  CHECK(t.rows[0].name == "ce");
  CHECK(t.rows[1].name == "ce+re");
  CHECK(t.rows[2].name == "ce+tp");
  CHECK(t.rows[3].name == "ce+tp+re");
  CHECK(t.rows[1].weights == LossWeights::ce_re());
  for (const auto& r : t.rows) {
    CHECK(r.summary.pairing_hash == t.rows[0].summary.pairing_hash);
    for (std::size_t i = 0; i < 10; ++i) CHECK(r.summary.records[i].selection_hash == t.rows[0].summary.records[i].selection_hash);
  }

  SolverConfig literal = quick();
  literal.weights.tp_form = TpForm::literal;
  const AblationTable lt = ablate(moderate(), EpisodeSpec{}, literal, 2, 2);
  for (const auto& r : lt.rows) CHECK(r.weights.tp_form == TpForm::literal);
}

TEST_CASE("ablation is uninformative on separable data") {
  const auto easy = gen_synthetic({20, 64, 40, 12.0, 1});
  const AblationTable t = ablate(easy, EpisodeSpec{}, quick(), 20, 0);
  for (const auto& r : t.rows) CHECK(r.summary.mean >= 0.99);
}

TEST_CASE("sweep_tau") {
  CHECK(std::vector<double>(kDefaultTaus.begin(), kDefaultTaus.end()) == std::vector<double>{5, 10, 25, 35, 50, 75, 100});
  const std::vector<double> taus = {5, 25, 50};
  const auto pts = sweep_tau(moderate(), EpisodeSpec{}, quick(), taus, 6, 1);
  REQUIRE(pts.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(pts[i].tau == taus[i]);
    CHECK(pts[i].summary.solver.tau == taus[i]);
    CHECK(pts[i].summary.pairing_hash == pts[0].summary.pairing_hash);
  }
  SolverConfig at25 = quick();
  at25.tau = 25;
  same_results(pts[1].summary, evaluate(moderate(), EpisodeSpec{}, at25, 6, 1));
  CHECK_THROWS(sweep_tau(moderate(), EpisodeSpec{}, quick(), {}, 6, 1));
  CHECK_THROWS(sweep_tau(moderate(), EpisodeSpec{}, quick(), {5, 0}, 6, 1));
}

TEST_CASE("scenario battery") {
  const auto specs = scenario_specs(Preprocess::l2);
  REQUIRE(specs.size() == 6);
  CHECK(specs[0].name == "uniform-1shot");
  CHECK(specs[1].spec.query_counts == std::vector<std::size_t>{20, 20, 10, 10, 15});
  CHECK(specs[2].spec.query_counts == std::vector<std::size_t>{19, 19, 18, 18, 1});
  CHECK(specs[5].name == "extreme-5shot");
  CHECK(specs[5].spec.shot == 5);
  for (const auto& sc : specs) CHECK(sc.spec.preprocess == Preprocess::l2);

  const auto results = scenario_battery(moderate(), quick(), 3, 0, Preprocess::none);
  REQUIRE(results.size() == 6);
  for (const auto& r : results) CHECK(r.summary.spec == r.scenario.spec);
}

TEST_CASE("sampling errors carry the episode index") {
  const auto tiny = gen_synthetic({4, 3, 40, 1.0, 1});
  try {
    evaluate(tiny, EpisodeSpec{}, quick(), 3, 0);
    FAIL("expected SamplingError");
  } catch (const SamplingError& e) {
    CHECK(std::string(e.what()).rfind("episode 0: ", 0) == 0);
  }
  CHECK_THROWS(evaluate(moderate(), EpisodeSpec{}, quick(), 0, 0));
}

TEST_CASE("baseline method") {
  HarnessOptions opts;
  opts.method = Method::baseline;
  const auto s = evaluate(moderate(), EpisodeSpec{}, quick(), 8, 0, opts);
  CHECK(s.method == Method::baseline);
  for (const auto& r : s.records) {
    CHECK(r.iters_run == 0);
    CHECK(r.final_total_loss == 0.0);
  }
  SolverConfig none = quick();
  none.max_iters = 0;
  same_results(s, evaluate(moderate(), EpisodeSpec{}, none, 8, 0));
}
