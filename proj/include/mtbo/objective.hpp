#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtbo/multitask.hpp"
#include "mtbo/param_space.hpp"

namespace mtbo {

struct ObjectiveResult {
  bool ok = false;
  std::map<std::string, double> values;  // task name -> raw measurement
  double wall_time_s = 0.0;
  std::string error;  // non-empty iff !ok, carries the captured output tail
};

// draw_seed is derived per step by the tuner so resumed runs replay
// identically without replaying the RNG stream.
using ObjectiveFn = std::function<ObjectiveResult(const Configuration&, std::uint64_t draw_seed)>;

// Decomposable stand-in objective: each cluster contributes
// loss_c = mean_d (x_d - o_d)^2 over its normalized parameters; every
// non-primary task in cluster c reports 100 * loss_c (minimized) and the
// primary reports 100000 * (1 - mean_c loss_c) plus optional Gaussian noise.
struct SyntheticSurrogateSpec {
  ClusterSpec clusters;
  std::map<std::string, double> optima;  // param name -> coordinate in [0, 1]
  double noise_std = 0.0;

  // Default RocksDB clustering with an on-grid optimum away from both the
  // space center and the vendor defaults.
  static SyntheticSurrogateSpec defaults();

  // {optima, noise_std, clusters?}; omitted fields keep the defaults().
  static SyntheticSurrogateSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  void validate(const ParamSpace& space, const TaskRegistry& tasks) const;
};

// The exact integer configuration whose normalization equals spec.optima
// coordinates, when one exists (defaults() guarantees it).
Configuration synthetic_optimum_config(const SyntheticSurrogateSpec& spec, const ParamSpace& space);

std::map<std::string, double> synthetic_values(const Configuration& config,
                                               const ParamSpace& space,
                                               const TaskRegistry& tasks,
                                               const SyntheticSurrogateSpec& spec,
                                               std::uint64_t seed);

ObjectiveFn make_synthetic_objective(ParamSpace space, TaskRegistry tasks,
                                     SyntheticSurrogateSpec spec);

struct MetricExtraction {
  enum class Source { stdout_text, stats_file };
  enum class Reducer { last, max, mean };

  std::string task;
  std::string pattern;  // exactly one numeric capture group
  Source source = Source::stdout_text;
  Reducer reducer = Reducer::last;
};

// Subprocess benchmark description. {param} placeholders in the template
// are substituted from the configuration; tuned parameters the template
// does not reference are appended as --name=value flags (spaces in order)
// unless append_unreferenced_params is off.
struct ObjectiveSpec {
  std::string command_template;
  std::string working_dir = ".";
  double timeout_s = 1200.0;
  std::string stats_path;  // required when a rule reads Source::stats_file
  bool append_unreferenced_params = true;
  std::vector<MetricExtraction> extraction;

  void validate(const ParamSpace& space, const TaskRegistry& tasks) const;
  static ObjectiveSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

std::string render_command(const ObjectiveSpec& spec, const ParamSpace& space,
                           const Configuration& config);

// nullopt when the pattern has no match in text.
std::optional<double> extract_metric(const MetricExtraction& rule, const std::string& text);

// Applies every rule to its captured source; pure. Missing metrics fail
// the result and name the task.
ObjectiveResult extract_all(const ObjectiveSpec& spec, const std::string& stdout_text,
                            const std::string& stats_text);

// Renders, launches via /bin/sh in its own process group, captures
// combined stdout/stderr, enforces timeout (SIGTERM at the deadline,
// SIGKILL five seconds later), then extracts. Nonzero exit, timeout, or a
// missing metric produce ok = false with the output tail attached.
ObjectiveResult run_benchmark(const Configuration& config, const ObjectiveSpec& spec,
                              const ParamSpace& space, const TaskRegistry& tasks);

ObjectiveFn make_benchmark_objective(ObjectiveSpec spec, ParamSpace space, TaskRegistry tasks);

}  // namespace mtbo
