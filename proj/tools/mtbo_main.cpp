#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mtbo/config_file.hpp"
#include "mtbo/errors.hpp"
#include "mtbo/report.hpp"
#include "mtbo/rng.hpp"
#include "mtbo/tuner.hpp"

namespace fs = std::filesystem;

namespace {

struct TuneArgs {
  std::string config_path;
  std::string strategy = "clustered-mt";
  int budget = 100;
  int repeats = 5;
  std::uint64_t seed = 0;
  std::string objective = "synthetic";
  std::string out_dir = "out";
  bool resume = false;
};

fs::path log_path_for(const fs::path& out_dir, const std::string& strategy, std::uint64_t seed) {
  return out_dir / ("trial_log_" + strategy + "_seed" + std::to_string(seed) + ".jsonl");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw mtbo::ConfigError("cannot write " + path.string());
  out << text;
}

int do_tune(const TuneArgs& args) {
  mtbo::FileConfig file;
  if (!args.config_path.empty()) file = mtbo::FileConfig::load(args.config_path);

  mtbo::TunerConfig config;
  config.strategy = mtbo::strategy_from_name(args.strategy);
  config.budget = args.budget;
  config.space = file.space;
  config.tasks = file.tasks;
  config.acquisition = file.acquisition;
  if (config.strategy == mtbo::Strategy::clustered_mt) {
    if (!file.clusters) {
      throw mtbo::ConfigError(
          "strategy clustered-mt needs a clusters section in the config file");
    }
    config.clusters = file.clusters;
  }

  mtbo::ObjectiveFn objective;
  if (args.objective == "synthetic") {
    objective = mtbo::make_synthetic_objective(file.space, file.tasks, file.synthetic);
  } else if (args.objective == "benchmark") {
    if (!file.objective) {
      throw mtbo::ConfigError("objective benchmark needs an objective section in the config file");
    }
    objective = mtbo::make_benchmark_objective(*file.objective, file.space, file.tasks);
  } else {
    throw mtbo::ConfigError("unknown objective: " + args.objective +
                            " (expected synthetic or benchmark)");
  }

  fs::create_directories(args.out_dir);

  // One default-config measurement per run set (step 0, never part of the
  // optimizer history); reports use it as the improvement denominator.
  const mtbo::Configuration defaults = mtbo::default_config(file.space);
  const mtbo::ObjectiveResult default_result =
      objective(defaults, mtbo::mix_seed({args.seed, 0xdef0u}));
  nlohmann::json default_doc = {{"config", mtbo::config_to_json(file.space, defaults)},
                                {"status", default_result.ok ? "ok" : "failed"},
                                {"values", default_result.values},
                                {"wall_time_s", default_result.wall_time_s}};
  if (!default_result.ok) default_doc["error"] = default_result.error;
  write_text(fs::path(args.out_dir) / "default_eval.json", default_doc.dump(2) + "\n");

  for (int r = 0; r < args.repeats; ++r) {
    config.seed = args.seed + static_cast<std::uint64_t>(r);
    const fs::path log = log_path_for(args.out_dir, args.strategy, config.seed);
    const mtbo::History history = args.resume
                                      ? mtbo::resume(config, objective, log)
                                      : mtbo::run(config, objective, log);
    const auto& primary = config.tasks.primary().name;
    try {
      const auto& best = mtbo::best_so_far(history);
      std::cout << args.strategy << " seed " << config.seed << ": best " << primary << " "
                << best.values.at(primary) << " at step " << best.step << " -> " << log.string()
                << "\n";
    } catch (const mtbo::NotFoundError&) {
      std::cout << args.strategy << " seed " << config.seed << ": no ok trial -> "
                << log.string() << "\n";
    }
  }
  return 0;
}

int do_report(const std::string& out_dir) {
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(out_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      logs.push_back(entry.path());
    }
  }
  std::sort(logs.begin(), logs.end());
  if (logs.empty()) throw mtbo::ConfigError("no trial logs (*.jsonl) under " + out_dir);

  std::map<std::string, mtbo::StrategyRunSet> sets;
  for (const auto& log : logs) {
    mtbo::History history = mtbo::read_trial_log(log);
    const std::string name = mtbo::strategy_name(history.config().strategy);
    sets[name].strategy = name;
    sets[name].runs.push_back(std::move(history));
  }
  std::vector<mtbo::StrategyRunSet> ordered;
  for (auto& [name, set] : sets) ordered.push_back(std::move(set));

  std::optional<double> default_value;
  const fs::path default_path = fs::path(out_dir) / "default_eval.json";
  if (fs::exists(default_path)) {
    std::ifstream in(default_path);
    const auto doc = nlohmann::json::parse(in, nullptr, false);
    if (!doc.is_discarded() && doc.value("status", "") == "ok") {
      const auto& primary = ordered.front().runs.front().config().tasks.primary().name;
      if (doc.at("values").contains(primary)) {
        default_value = doc.at("values").at(primary).get<double>();
      }
    }
  }

  const std::string csv = mtbo::convergence_csv(ordered);
  const nlohmann::json summary = mtbo::summary_json(ordered, default_value);
  write_text(fs::path(out_dir) / "convergence.csv", csv);
  write_text(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int do_replay(const std::string& log_path) {
  const mtbo::History history = mtbo::read_trial_log(log_path);
  std::cout << mtbo::replay_report(history);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task Bayesian optimization tuner for discrete system configurations"};
  app.require_subcommand(1);

  TuneArgs tune_args;
  auto* tune = app.add_subcommand("tune", "Run the optimization loop and write trial logs");
  tune->add_option("--config", tune_args.config_path, "JSON config file");
  tune->add_option("--strategy", tune_args.strategy,
                   "random | gp | multitask | clustered-mt (default clustered-mt)");
  tune->add_option("--budget", tune_args.budget, "Total evaluations per run (default 100)");
  tune->add_option("--repeats", tune_args.repeats, "Number of runs, seeds seed, seed+1, ...");
  tune->add_option("--seed", tune_args.seed, "Base seed (default 0)");
  tune->add_option("--objective", tune_args.objective, "synthetic | benchmark");
  tune->add_option("--out", tune_args.out_dir, "Output directory (default out)");
  tune->add_flag("--resume", tune_args.resume, "Continue runs from existing trial logs");

  std::string report_dir = "out";
  auto* report = app.add_subcommand("report", "Aggregate trial logs into CSV/JSON reports");
  report->add_option("--out", report_dir, "Directory holding the trial logs");

  std::string replay_log;
  auto* replay = app.add_subcommand("replay", "Refit a surrogate from a log and print diagnostics");
  replay->add_option("log", replay_log, "Trial log path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*tune) return do_tune(tune_args);
    if (*report) return do_report(report_dir);
    if (*replay) return do_replay(replay_log);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
