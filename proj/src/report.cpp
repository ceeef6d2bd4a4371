#include "tpvae/report.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

namespace tpvae::report {

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::vector<char> chunk(1 << 16);
  while (in) {
    in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    const auto got = static_cast<std::size_t>(in.gcount());
    h = fnv1a64({reinterpret_cast<const unsigned char*>(chunk.data()), got}, h);
  }
  return hex64(h);
}

std::string_view method_name(Method m) noexcept { return m == Method::baseline ? "baseline" : "tpvae"; }

std::string scenario_name(const EpisodeSpec& spec) {
  for (const auto& sc : scenario_specs(spec.preprocess)) {
    if (sc.spec == spec) return sc.name;
  }
  return "custom";
}

std::string config_name(const EvalSummary& s) {
  return s.method == Method::baseline ? "baseline" : s.solver.weights.name();
}

void append_episode_rows(std::string& csv, const EvalSummary& s, std::string_view scenario, std::string_view config) {
  for (const auto& r : s.records) {
    csv += std::to_string(r.index);
    csv += ',';
    csv += scenario;
    csv += ',';
    csv += config;
    csv += ',';
    csv += format_double(r.accuracy);
    csv += ',';
    csv += std::to_string(r.iters_run);
    csv += ',';
    csv += format_double(r.final_total_loss);
    csv += '\n';
  }
}

nlohmann::ordered_json spec_json(const EpisodeSpec& spec) {
  return {{"way", spec.way},
          {"shot", spec.shot},
          {"query_counts", spec.query_counts},
          {"preprocess", std::string(to_string(spec.preprocess))}};
}

nlohmann::ordered_json solver_json(const SolverConfig& cfg) {
  return {{"lr", cfg.lr},
          {"momentum", cfg.momentum},
          {"max_iters", cfg.max_iters},
          {"tol", cfg.tol},
          {"tau", cfg.tau},
          {"sigma_enc", cfg.sigma_enc},
          {"mc_samples", cfg.mc_samples},
          {"d_hidden", cfg.d_hidden},
          {"weights",
           {{"ce", cfg.weights.ce},
            {"recon", cfg.weights.recon},
            {"lik", cfg.weights.lik},
            {"tp", cfg.weights.tp},
            {"tp_form", std::string(to_string(cfg.weights.tp_form))},
            {"query_reduction", std::string(to_string(cfg.weights.reduction))}}}};
}

nlohmann::ordered_json arm_json(std::string_view name, const EvalSummary& s) {
  return {{"name", std::string(name)},
          {"method", std::string(method_name(s.method))},
          {"mean_accuracy", s.mean},
          {"ci95", s.ci95},
          {"episodes", s.episodes},
          {"marginal_entropy", s.mean_marginal_entropy},
          {"pairing_hash", hex64(s.pairing_hash)},
          {"wall_time_ms", s.wall_time_ms},
          {"spec", spec_json(s.spec)},
          {"solver", solver_json(s.solver)}};
}

nlohmann::ordered_json summary_json(const Summary& summary) {
  if (!summary.headline) throw std::invalid_argument("summary_json: missing headline arm");
  const EvalSummary& h = *summary.headline;
  nlohmann::ordered_json doc;
  doc["command"] = summary.command;
  doc["dataset_hash"] = summary.dataset_hash;
  doc["spec"] = spec_json(h.spec);
  doc["solver"] = solver_json(h.solver);
  doc["episodes"] = h.episodes;
  doc["mean_accuracy"] = h.mean;
  doc["ci95"] = h.ci95;
  if (!summary.arms.empty()) doc["arms"] = summary.arms;
  if (summary.curves) doc["curves"] = *summary.curves;
  return doc;
}

std::string tau_sweep_csv(const std::vector<TauPoint>& points) {
  std::string out = "tau,mean,ci95\n";
  for (const auto& p : points) {
    out += format_double(p.tau) + ',' + format_double(p.summary.mean) + ',' + format_double(p.summary.ci95) + '\n';
  }
  return out;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace tpvae::report
