#pragma once

// Result files written by the CLI: episodes.csv, summary.json, manifest.json
// and the plot-ready tau sweep table.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tpvae/harness.hpp"

namespace tpvae::report {

inline constexpr std::string_view kEpisodesCsvHeader =
    "episode_index,scenario,config,accuracy,iters_run,final_total_loss";

/// Top-level keys of summary.json, in emission order.
inline constexpr std::string_view kSummaryKeys[] = {"command", "dataset_hash", "spec", "solver", "episodes",
                                                    "mean_accuracy", "ci95", "arms", "curves"};
/// Keys of every entry of summary.json "arms".
inline constexpr std::string_view kArmKeys[] = {"name", "method", "mean_accuracy", "ci95", "episodes",
                                                "marginal_entropy", "pairing_hash", "wall_time_ms", "spec",
                                                "solver"};

/// Shortest representation that parses back to the same double.
std::string format_double(double v);
std::string hex64(std::uint64_t v);

/// FNV-1a of the file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

std::string_view method_name(Method m) noexcept;

/// "uniform-1shot" style name when the spec matches a battery scenario, else "custom".
std::string scenario_name(const EpisodeSpec& spec);

/// "baseline" for the prototype baseline, else the loss preset name.
std::string config_name(const EvalSummary& s);

void append_episode_rows(std::string& csv, const EvalSummary& s, std::string_view scenario, std::string_view config);

nlohmann::ordered_json spec_json(const EpisodeSpec& spec);
nlohmann::ordered_json solver_json(const SolverConfig& cfg);
nlohmann::ordered_json arm_json(std::string_view name, const EvalSummary& s);

struct Summary {
  std::string command;
  std::string dataset_hash;
  const EvalSummary* headline = nullptr;  // supplies spec, solver, episodes, mean and ci95
  std::vector<nlohmann::ordered_json> arms;
  std::optional<nlohmann::ordered_json> curves;
};

nlohmann::ordered_json summary_json(const Summary& summary);

/// "tau,mean,ci95" rows.
std::string tau_sweep_csv(const std::vector<TauPoint>& points);

void write_text(const std::filesystem::path& path, std::string_view text);

/// UTC, e.g. 2026-01-31T12:00:00Z.
std::string utc_timestamp();

}  // namespace tpvae::report
