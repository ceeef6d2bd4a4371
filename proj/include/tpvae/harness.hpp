#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tpvae/episodes.hpp"
#include "tpvae/solver.hpp"

namespace tpvae {

enum class Method { tpvae, baseline };

enum class Execution {
  parallel,  // OpenMP over episodes
  serial,    // reference loop, kept for equivalence tests and benchmarks
};

struct HarnessOptions {
  int workers = 0;  // 0: OpenMP default
  Execution execution = Execution::parallel;
  Method method = Method::tpvae;
};

struct EpisodeRecord {
  std::size_t index = 0;
  double accuracy = 0.0;
  std::size_t iters_run = 0;
  double final_total_loss = 0.0;  // 0 when no iteration ran
  double marginal_entropy = 0.0;  // entropy of the predicted class histogram
  std::uint64_t selection_hash = 0;

  bool operator==(const EpisodeRecord&) const = default;
};

struct EvalSummary {
  std::size_t episodes = 0;
  std::vector<double> accuracies;
  std::vector<EpisodeRecord> records;
  double mean = 0.0;
  double ci95 = 0.0;
  std::vector<double> curve;  // running mean accuracy by episode index

  double mean_marginal_entropy = 0.0;
  double max_row_sum_error = 0.0;
  bool prior_intact = true;
  std::uint64_t pairing_hash = 0;  // combined selection hashes, equal across paired arms

  // Configuration echo.
  Method method = Method::tpvae;
  SolverConfig solver;
  EpisodeSpec spec;
  std::uint64_t dataset_fingerprint = 0;
  std::uint64_t seed = 0;
  std::int64_t wall_time_ms = 0;
};

/// Mean and normal-approximation 95% half-width 1.96 * s / sqrt(n); n = 1 gives 0.
std::pair<double, double> mean_ci95(const std::vector<double>& values);

/// Runs `episodes` independent episodes; episode i uses streams keyed by
/// (seed, i), so results do not depend on scheduling.
EvalSummary evaluate(const EmbeddingDataset& ds, const EpisodeSpec& spec, const SolverConfig& cfg,
                     std::size_t episodes, std::uint64_t seed, const HarnessOptions& opts = {});

struct AblationRow {
  std::string name;
  LossWeights weights;
  EvalSummary summary;
};

struct AblationTable {
  std::vector<AblationRow> rows;  // ce, ce+re, ce+tp, ce+tp+re
};

/// The four loss configurations on identical episodes.
AblationTable ablate(const EmbeddingDataset& ds, const EpisodeSpec& spec, const SolverConfig& cfg,
                     std::size_t episodes, std::uint64_t seed, const HarnessOptions& opts = {});

inline constexpr std::array<double, 7> kDefaultTaus = {5, 10, 25, 35, 50, 75, 100};

struct TauPoint {
  double tau = 0.0;
  EvalSummary summary;
};

std::vector<TauPoint> sweep_tau(const EmbeddingDataset& ds, const EpisodeSpec& spec, const SolverConfig& cfg,
                                const std::vector<double>& taus, std::size_t episodes, std::uint64_t seed,
                                const HarnessOptions& opts = {});

struct Scenario {
  std::string name;
  EpisodeSpec spec;
};

inline const std::vector<std::size_t> kUniformProfile = {15, 15, 15, 15, 15};
inline const std::vector<std::size_t> kSlightProfile = {20, 20, 10, 10, 15};
inline const std::vector<std::size_t> kExtremeProfile = {19, 19, 18, 18, 1};

/// uniform / slight / extreme query profiles, 5-way, for 1 and 5 shots.
std::vector<Scenario> scenario_specs(Preprocess preprocess);

struct ScenarioResult {
  Scenario scenario;
  EvalSummary summary;
};

std::vector<ScenarioResult> scenario_battery(const EmbeddingDataset& ds, const SolverConfig& cfg,
                                             std::size_t episodes, std::uint64_t seed, Preprocess preprocess,
                                             const HarnessOptions& opts = {});

}  // namespace tpvae
