#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "tpvae/errors.hpp"
#include "tpvae/harness.hpp"
#include "tpvae/report.hpp"

#ifndef TPVAE_VERSION
#define TPVAE_VERSION "0.0.0"
#endif

namespace tpvae::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Raised for flag combinations CLI11 cannot check on its own.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SynthFlags {
  SynthSpec spec;
  std::string out;
  std::string format;  // empty: from extension
};

struct EvalFlags {
  std::string data;
  std::string format;  // empty: from extension
  std::size_t way = 5;
  std::size_t shot = 1;
  std::vector<std::size_t> query;
  std::size_t episodes = 1000;
  std::uint64_t seed = 0;
  SolverConfig solver;
  std::string preprocess = "none";
  std::string tp_form = "jensen";
  std::string reduction = "mean";
  std::string method = "tpvae";
  int workers = 0;
  std::string out = "results";
  std::vector<double> taus{kDefaultTaus.begin(), kDefaultTaus.end()};
};

void add_eval_flags(CLI::App* cmd, EvalFlags& f) {
  cmd->add_option("--data", f.data, "Dataset file (FSE1 or CSV)")->required();
  cmd->add_option("--format", f.format, "Dataset format; default from extension")->check(CLI::IsMember({"fse1", "csv"}));
  cmd->add_option("--way", f.way, "Classes per episode")->check(CLI::Range(2, 1 << 20));
  cmd->add_option("--shot", f.shot, "Support shots per class")->check(CLI::PositiveNumber);
  cmd->add_option("--query", f.query, "Comma-separated query counts per class (default 15 each)")->delimiter(',');
  cmd->add_option("--episodes", f.episodes, "Number of episodes")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", f.seed, "Seed for episode and solver streams");
  cmd->add_option("--tau", f.solver.tau, "Temperature (inverse class variance)")->check(CLI::PositiveNumber);
  cmd->add_option("--lr", f.solver.lr, "SGD learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--momentum", f.solver.momentum, "SGD momentum")->check(CLI::NonNegativeNumber);
  cmd->add_option("--iters", f.solver.max_iters, "Maximum SGD steps per episode")->check(CLI::NonNegativeNumber);
  cmd->add_option("--tol", f.solver.tol, "Early stop when |total change| < tol")->check(CLI::NonNegativeNumber);
  cmd->add_option("--sigma-enc", f.solver.sigma_enc, "Encoder sampling std")->check(CLI::NonNegativeNumber);
  cmd->add_option("--mc-samples", f.solver.mc_samples, "Monte Carlo samples per step")->check(CLI::PositiveNumber);
  cmd->add_option("--preprocess", f.preprocess, "Feature preprocessing")
      ->check(CLI::IsMember({"none", "l2", "center_l2"}));
  cmd->add_option("--tp-form", f.tp_form, "Task-prior term form")->check(CLI::IsMember({"jensen", "literal"}));
  cmd->add_option("--query-reduction", f.reduction, "Reduction of query-side terms")
      ->check(CLI::IsMember({"mean", "sum"}));
  cmd->add_option("--w-ce", f.solver.weights.ce, "Weight of support cross-entropy")->check(CLI::NonNegativeNumber);
  cmd->add_option("--w-recon", f.solver.weights.recon, "Weight of reconstruction term")->check(CLI::NonNegativeNumber);
  cmd->add_option("--w-lik", f.solver.weights.lik, "Weight of class-likelihood term")->check(CLI::NonNegativeNumber);
  cmd->add_option("--w-tp", f.solver.weights.tp, "Weight of task-prior term")->check(CLI::NonNegativeNumber);
  cmd->add_option("--d-hidden", f.solver.d_hidden, "Decoder hidden width (0: feature dim)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--workers", f.workers, "Worker threads (0: all available)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", f.out, "Results directory");
}

// Resolves string flags into typed config; throws UsageError.
EpisodeSpec resolve(EvalFlags& f) {
  try {
    f.solver.weights.tp_form = parse_tp_form(f.tp_form);
    f.solver.weights.reduction = parse_query_reduction(f.reduction);
    EpisodeSpec spec{f.way, f.shot, f.query.empty() ? std::vector<std::size_t>(f.way, 15) : f.query,
                     parse_preprocess(f.preprocess)};
    spec.validate();
    f.solver.validate();
    return spec;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

HarnessOptions harness_options(const EvalFlags& f) {
  HarnessOptions opts;
  opts.workers = f.workers;
  opts.method = f.method == "baseline" ? Method::baseline : Method::tpvae;
  return opts;
}

EmbeddingDataset load(const EvalFlags& f) {
  const DatasetFormat fmt = f.format.empty() ? format_from_path(f.data) : parse_format(f.format);
  return load_dataset(f.data, fmt);
}

json manifest(std::string_view command, const std::vector<std::string>& args, const EvalFlags& f,
              const EpisodeSpec& spec, const std::string& data_hash) {
  json m;
  m["command"] = std::string(command);
  m["argv"] = args;
  m["tool_version"] = TPVAE_VERSION;
  m["dataset"] = {{"path", f.data}, {"content_hash", data_hash}};
  m["seed"] = f.seed;
  m["episodes"] = f.episodes;
  m["method"] = f.method;
  m["workers"] = f.workers;
  m["spec"] = report::spec_json(spec);
  m["solver"] = report::solver_json(f.solver);
  if (command == "sweep-tau") m["taus"] = f.taus;
  m["timestamp"] = report::utc_timestamp();
  return m;
}

void write_outputs(const EvalFlags& f, const std::string& csv, const json& summary, const json& manifest_doc) {
  const fs::path dir(f.out);
  fs::create_directories(dir);
  report::write_text(dir / "episodes.csv", csv);
  report::write_text(dir / "summary.json", summary.dump(2) + "\n");
  report::write_text(dir / "manifest.json", manifest_doc.dump(2) + "\n");
}

int cmd_gen_synth(const SynthFlags& f, std::ostream& out) {
  try {
    f.spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const EmbeddingDataset ds = gen_synthetic(f.spec);
  save_dataset(ds, f.out, f.format.empty() ? format_from_path(f.out) : parse_format(f.format));
  out << report::file_hash(f.out) << "  " << f.out << "\n";
  return kExitOk;
}

int cmd_run(EvalFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  const EpisodeSpec spec = resolve(f);
  const EmbeddingDataset ds = load(f);
  const std::string data_hash = report::file_hash(f.data);
  const EvalSummary s = evaluate(ds, spec, f.solver, f.episodes, f.seed, harness_options(f));

  std::string csv(report::kEpisodesCsvHeader);
  csv += '\n';
  const std::string config = report::config_name(s);
  report::append_episode_rows(csv, s, report::scenario_name(spec), config);

  report::Summary doc{"run", data_hash, &s, {}, json{{config, s.curve}}};
  write_outputs(f, csv, report::summary_json(doc), manifest("run", args, f, spec, data_hash));
  out << config << ": mean " << s.mean << " ci95 " << s.ci95 << " (" << s.episodes << " episodes, "
      << s.wall_time_ms << " ms)\n";
  return kExitOk;
}

int cmd_ablate(EvalFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  const EpisodeSpec spec = resolve(f);
  const EmbeddingDataset ds = load(f);
  const std::string data_hash = report::file_hash(f.data);
  const AblationTable table = ablate(ds, spec, f.solver, f.episodes, f.seed, harness_options(f));

  std::string csv(report::kEpisodesCsvHeader);
  csv += '\n';
  report::Summary doc{"ablate", data_hash, &table.rows.back().summary, {}, json::object()};
  for (const auto& row : table.rows) {
    report::append_episode_rows(csv, row.summary, report::scenario_name(spec), row.name);
    doc.arms.push_back(report::arm_json(row.name, row.summary));
    (*doc.curves)[row.name] = row.summary.curve;
    out << row.name << ": mean " << row.summary.mean << " ci95 " << row.summary.ci95 << " marginal entropy "
        << row.summary.mean_marginal_entropy << "\n";
  }
  write_outputs(f, csv, report::summary_json(doc), manifest("ablate", args, f, spec, data_hash));
  return kExitOk;
}

int cmd_sweep_tau(EvalFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  const EpisodeSpec spec = resolve(f);
  if (f.taus.empty()) throw UsageError("--taus must list at least one value");
  for (double t : f.taus) {
    if (!(t > 0.0)) throw UsageError("--taus values must be positive");
  }
  const EmbeddingDataset ds = load(f);
  const std::string data_hash = report::file_hash(f.data);
  const auto points = sweep_tau(ds, spec, f.solver, f.taus, f.episodes, f.seed, harness_options(f));

  std::string csv(report::kEpisodesCsvHeader);
  csv += '\n';
  const auto best = std::max_element(points.begin(), points.end(),
                                     [](const TauPoint& a, const TauPoint& b) { return a.summary.mean < b.summary.mean; });
  report::Summary doc{"sweep-tau", data_hash, &best->summary, {}, json::object()};
  for (const auto& p : points) {
    const std::string name = "tau=" + report::format_double(p.tau);
    report::append_episode_rows(csv, p.summary, report::scenario_name(spec), name);
    doc.arms.push_back(report::arm_json(name, p.summary));
    (*doc.curves)[name] = p.summary.curve;
    out << name << ": mean " << p.summary.mean << " ci95 " << p.summary.ci95 << "\n";
  }
  write_outputs(f, csv, report::summary_json(doc), manifest("sweep-tau", args, f, spec, data_hash));
  report::write_text(fs::path(f.out) / "sweep_tau.csv", report::tau_sweep_csv(points));
  return kExitOk;
}

int cmd_scenarios(EvalFlags& f, const std::vector<std::string>& args, std::ostream& out) {
  resolve(f);
  const EmbeddingDataset ds = load(f);
  const std::string data_hash = report::file_hash(f.data);
  const auto results = scenario_battery(ds, f.solver, f.episodes, f.seed, parse_preprocess(f.preprocess),
                                        harness_options(f));

  std::string csv(report::kEpisodesCsvHeader);
  csv += '\n';
  report::Summary doc{"scenarios", data_hash, &results.front().summary, {}, json::object()};
  for (const auto& r : results) {
    const std::string config = report::config_name(r.summary);
    report::append_episode_rows(csv, r.summary, r.scenario.name, config);
    doc.arms.push_back(report::arm_json(r.scenario.name, r.summary));
    (*doc.curves)[r.scenario.name] = r.summary.curve;
    out << r.scenario.name << ": mean " << r.summary.mean << " ci95 " << r.summary.ci95 << "\n";
  }
  write_outputs(f, csv, report::summary_json(doc), manifest("scenarios", args, f, results.front().scenario.spec, data_hash));
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transductive few-shot inference with a task-prior conditional VAE objective", "tpvae"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TPVAE_VERSION);

  SynthFlags synth;
  auto* gen = app.add_subcommand("gen-synth", "Generate a synthetic Gaussian-mixture embedding dataset");
  gen->add_option("--classes", synth.spec.num_classes, "Number of classes")->check(CLI::Range(2, 1 << 24));
  gen->add_option("--dim", synth.spec.dim, "Feature dimension")->check(CLI::PositiveNumber);
  gen->add_option("--per-class", synth.spec.per_class, "Samples per class")->check(CLI::PositiveNumber);
  gen->add_option("--sep", synth.spec.separation, "Mean separation in noise standard deviations")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", synth.spec.seed, "Generator seed");
  gen->add_option("--out", synth.out, "Output file")->required();
  gen->add_option("--format", synth.format, "Output format; default from extension")->check(CLI::IsMember({"fse1", "csv"}));

  EvalFlags eval;
  auto* run_cmd = app.add_subcommand("run", "Evaluate over many episodes");
  add_eval_flags(run_cmd, eval);
  run_cmd->add_option("--method", eval.method, "tpvae or the prototype baseline")
      ->check(CLI::IsMember({"tpvae", "baseline"}));
  auto* ablate_cmd = app.add_subcommand("ablate", "Compare the four loss configurations on paired episodes");
  add_eval_flags(ablate_cmd, eval);
  auto* sweep_cmd = app.add_subcommand("sweep-tau", "Evaluate a list of temperatures on paired episodes");
  add_eval_flags(sweep_cmd, eval);
  sweep_cmd->add_option("--taus", eval.taus, "Comma-separated temperatures")->delimiter(',');
  auto* scen_cmd = app.add_subcommand("scenarios", "Uniform and nonuniform query profiles, 1 and 5 shots");
  add_eval_flags(scen_cmd, eval);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << TPVAE_VERSION << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_synth(synth, out);
    if (*run_cmd) return cmd_run(eval, args, out);
    if (*ablate_cmd) return cmd_ablate(eval, args, out);
    if (*sweep_cmd) return cmd_sweep_tau(eval, args, out);
    if (*scen_cmd) return cmd_scenarios(eval, args, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace tpvae::cli
