#include "mtbo/report.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "mtbo/errors.hpp"
#include "mtbo/gp.hpp"
#include "mtbo/rng.hpp"

namespace mtbo {
namespace {

// Shortest round-trip decimal form, identical to the JSON serialization.
std::string dump_number(double v) { return nlohmann::json(v).dump(); }

double median_of(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Best-so-far per run at each step 1..max_steps; runs with no ok trial yet
// at a step contribute nothing there.
std::vector<std::vector<double>> values_by_step(const StrategyRunSet& set,
                                                std::size_t max_steps) {
  std::vector<std::vector<double>> by_step(max_steps);
  for (const auto& run : set.runs) {
    const auto trace = convergence_trace(run);
    for (const auto& [step, best] : trace) {
      if (step >= 1 && static_cast<std::size_t>(step) <= max_steps) {
        by_step[static_cast<std::size_t>(step) - 1].push_back(best);
      }
    }
  }
  return by_step;
}

std::size_t max_recorded_steps(const StrategyRunSet& set) {
  std::size_t max_steps = 0;
  for (const auto& run : set.runs) max_steps = std::max(max_steps, run.records().size());
  return max_steps;
}

}  // namespace

std::string convergence_csv(const std::vector<StrategyRunSet>& sets) {
  std::string out = "strategy,step,median_best,min_best,max_best\n";
  for (const auto& set : sets) {
    const auto by_step = values_by_step(set, max_recorded_steps(set));
    for (std::size_t s = 0; s < by_step.size(); ++s) {
      const auto& values = by_step[s];
      if (values.empty()) continue;
      const double lo = *std::min_element(values.begin(), values.end());
      const double hi = *std::max_element(values.begin(), values.end());
      out += set.strategy + "," + std::to_string(s + 1) + "," + dump_number(median_of(values)) +
             "," + dump_number(lo) + "," + dump_number(hi) + "\n";
    }
  }
  return out;
}

nlohmann::json summary_json(const std::vector<StrategyRunSet>& sets,
                            std::optional<double> default_value) {
  nlohmann::json out;
  out["default_value"] = default_value ? nlohmann::json(*default_value) : nlohmann::json(nullptr);

  nlohmann::json strategies = nlohmann::json::object();
  struct Overall {
    double value = 0.0;
    std::string strategy;
    nlohmann::json config;
    int step = 0;
    bool found = false;
  } overall;

  for (const auto& set : sets) {
    nlohmann::json entry;
    entry["runs"] = set.runs.size();

    const TrialRecord* best = nullptr;
    const History* best_run = nullptr;
    for (const auto& run : set.runs) {
      if (!std::any_of(run.records().begin(), run.records().end(),
                       [](const TrialRecord& r) { return r.ok; })) {
        continue;
      }
      const auto& candidate = best_so_far(run);
      const auto& primary = run.config().tasks.primary().name;
      if (!best || candidate.values.at(primary) > best->values.at(best_run->config().tasks.primary().name)) {
        best = &candidate;
        best_run = &run;
      }
    }

    if (best) {
      const auto& primary = best_run->config().tasks.primary().name;
      const double value = best->values.at(primary);
      entry["best_value"] = value;
      entry["best_step"] = best->step;
      entry["best_config"] = config_to_json(best_run->config().space, best->config);
      entry["improvement_ratio"] =
          default_value && *default_value != 0.0 ? nlohmann::json(value / *default_value)
                                                 : nlohmann::json(nullptr);
      if (!overall.found || value > overall.value) {
        overall = {value, set.strategy, entry["best_config"], best->step, true};
      }
    } else {
      entry["best_value"] = nullptr;
      entry["best_step"] = nullptr;
      entry["best_config"] = nullptr;
      entry["improvement_ratio"] = nullptr;
    }

    entry["steps_to_1.3x"] = nullptr;
    if (default_value) {
      const double threshold = 1.3 * *default_value;
      const auto by_step = values_by_step(set, max_recorded_steps(set));
      for (std::size_t s = 0; s < by_step.size(); ++s) {
        if (!by_step[s].empty() && median_of(by_step[s]) >= threshold) {
          entry["steps_to_1.3x"] = s + 1;
          break;
        }
      }
    }
    strategies[set.strategy] = std::move(entry);
  }
  out["strategies"] = std::move(strategies);
  out["best"] = overall.found ? nlohmann::json{{"strategy", overall.strategy},
                                               {"value", overall.value},
                                               {"step", overall.step},
                                               {"config", overall.config}}
                              : nlohmann::json(nullptr);
  return out;
}

std::string replay_report(const History& history) {
  const auto& config = history.config();
  std::vector<TaskObservation> obs;
  for (const auto& record : history.records()) {
    if (record.ok) obs.push_back({record.config, record.values});
  }
  if (obs.empty()) throw NotFoundError("replay: history has no ok trial");

  const bool multi =
      config.strategy == Strategy::multitask || config.strategy == Strategy::clustered_mt;
  const auto& primary = config.tasks.primary();
  const TaskRegistry registry =
      multi ? config.tasks : TaskRegistry({{primary.name, primary.direction, true}});

  const MultiTaskDataset dataset = build_dataset(obs, config.space, registry);
  FitOptions fit_options;
  fit_options.seed = mix_seed({config.seed, 0x2e91u});
  const GPModel model = fit_multitask(dataset, fit_options);

  std::ostringstream out;
  out << "replay: " << strategy_name(config.strategy) << " log, " << history.records().size()
      << " trials (" << obs.size() << " ok), " << registry.size() << " task(s)\n";
  out << "fit: log marginal likelihood " << model.log_marginal_likelihood() << ", mean "
      << model.mean() << ", signal variance " << model.kernel().signal_variance
      << ", noise variance " << model.kernel().noise_variance << "\n";
  out << "lengthscales:";
  for (std::size_t d = 0; d < config.space.dimension(); ++d) {
    out << " " << config.space.param(d).name << "=" << model.kernel().lengthscales[d];
  }
  out << "\n";

  for (int t = 0; t < registry.size(); ++t) {
    double max_abs = 0.0, sum_abs = 0.0;
    int count = 0;
    for (Eigen::Index r = 0; r < dataset.training.size(); ++r) {
      if (dataset.training.task_ids[static_cast<std::size_t>(r)] != t) continue;
      const auto row = dataset.training.x.row(r);
      const std::vector<double> coords(row.begin(), row.end());
      const double mean = model.posterior(std::span<const double>(coords), t).mean;
      const double res = std::abs(mean - dataset.training.y(r));
      max_abs = std::max(max_abs, res);
      sum_abs += res;
      count += 1;
    }
    out << "task " << registry.task(t).name << ": n=" << count
        << " max|residual|=" << max_abs << " mean|residual|=" << sum_abs / std::max(count, 1)
        << " (standardized units)\n";
    if (dataset.stats.per_task[static_cast<std::size_t>(t)].sigma_fallback) {
      out << "  note: observations of " << registry.task(t).name
          << " are constant; sigma fallback = 1 was applied\n";
    }
  }

  if (model.task_kernel()) {
    out << "task similarity B (rows/cols in task order):\n";
    const auto b = model.task_kernel()->matrix();
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
      out << " ";
      for (Eigen::Index j = 0; j < b.cols(); ++j) out << " " << b(i, j);
      out << "\n";
    }
  } else {
    out << "single-task model: no task similarity matrix\n";
  }
  return out.str();
}

}  // namespace mtbo
