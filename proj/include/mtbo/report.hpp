#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtbo/tuner.hpp"

namespace mtbo {

struct StrategyRunSet {
  std::string strategy;
  std::vector<History> runs;
};

// CSV with header strategy,step,median_best,min_best,max_best; one row per
// strategy and step, aggregating best-so-far across the set's runs. Runs
// that have no ok trial yet at a step are left out of that row; numbers
// round-trip exactly. Pure function of its inputs.
std::string convergence_csv(const std::vector<StrategyRunSet>& sets);

// Best value/config/step per strategy and overall, plus improvement ratio
// against the default-config measurement and steps_to_1.3x (the first step
// whose median best-so-far reaches 1.3x the default; null when never, or
// when no default measurement exists).
nlohmann::json summary_json(const std::vector<StrategyRunSet>& sets,
                            std::optional<double> default_value);

// Refits the surrogate recorded in the history (single-task for random/gp
// logs, full ICM otherwise) and renders fit diagnostics: kernel summary,
// per-task residuals over the training points, the task-similarity matrix
// B for ICM fits, and sigma-fallback notes for degenerate tasks.
std::string replay_report(const History& history);

}  // namespace mtbo
