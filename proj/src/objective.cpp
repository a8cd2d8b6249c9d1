#include "mtbo/objective.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mtbo/errors.hpp"
#include "mtbo/rng.hpp"

namespace mtbo {
namespace {

std::string output_tail(const std::string& text, std::size_t limit = 2000) {
  if (text.size() <= limit) return text;
  return "..." + text.substr(text.size() - limit);
}

std::string source_name(MetricExtraction::Source source) {
  return source == MetricExtraction::Source::stdout_text ? "stdout" : "stats-file";
}

struct CaptureResult {
  int exit_status = -1;
  bool exited_normally = false;
  bool timed_out = false;
  std::string output;
};

CaptureResult run_shell(const std::string& command, const std::string& working_dir,
                        double timeout_s) {
  int fds[2];
  if (pipe(fds) != 0) throw std::runtime_error("objective: pipe() failed");

  const pid_t pid = fork();
  if (pid < 0) {
    close(fds[0]);
    close(fds[1]);
    throw std::runtime_error("objective: fork() failed");
  }
  if (pid == 0) {
    setpgid(0, 0);
    if (!working_dir.empty() && chdir(working_dir.c_str()) != 0) _exit(126);
    dup2(fds[1], STDOUT_FILENO);
    dup2(fds[1], STDERR_FILENO);
    close(fds[0]);
    close(fds[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }

  close(fds[1]);
  fcntl(fds[0], F_SETFL, O_NONBLOCK);

  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + std::chrono::duration<double>(timeout_s);
  const auto hard_deadline = deadline + std::chrono::seconds(5);

  CaptureResult result;
  bool term_sent = false;
  char buf[4096];
  bool open = true;
  while (open) {
    pollfd entry{fds[0], POLLIN, 0};
    poll(&entry, 1, 200);
    while (true) {
      const ssize_t got = read(fds[0], buf, sizeof buf);
      if (got > 0) {
        result.output.append(buf, static_cast<std::size_t>(got));
        continue;
      }
      if (got == 0) open = false;
      if (got < 0 && errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR) open = false;
      break;
    }
    const auto now = Clock::now();
    if (!term_sent && now >= deadline) {
      result.timed_out = true;
      kill(-pid, SIGTERM);
      term_sent = true;
    }
    if (now >= hard_deadline) {
      kill(-pid, SIGKILL);
      break;
    }
  }
  close(fds[0]);

  int status = 0;
  waitpid(pid, &status, 0);
  if (result.timed_out) kill(-pid, SIGKILL);
  result.exited_normally = WIFEXITED(status);
  result.exit_status = result.exited_normally ? WEXITSTATUS(status) : -1;
  return result;
}

const std::regex& placeholder_pattern() {
  static const std::regex re(R"(\{([A-Za-z0-9_]+)\})");
  return re;
}

MetricExtraction::Source source_from_string(const std::string& s) {
  if (s == "stdout") return MetricExtraction::Source::stdout_text;
  if (s == "stats-file") return MetricExtraction::Source::stats_file;
  throw ConfigError("objective: extraction source must be stdout or stats-file, got " + s);
}

MetricExtraction::Reducer reducer_from_string(const std::string& s) {
  if (s == "last") return MetricExtraction::Reducer::last;
  if (s == "max") return MetricExtraction::Reducer::max;
  if (s == "mean") return MetricExtraction::Reducer::mean;
  throw ConfigError("objective: extraction reducer must be last, max or mean, got " + s);
}

std::string reducer_to_string(MetricExtraction::Reducer r) {
  switch (r) {
    case MetricExtraction::Reducer::last: return "last";
    case MetricExtraction::Reducer::max: return "max";
    case MetricExtraction::Reducer::mean: return "mean";
  }
  return "last";
}

}  // namespace

SyntheticSurrogateSpec SyntheticSurrogateSpec::defaults() {
  SyntheticSurrogateSpec spec;
  spec.clusters = default_rocksdb_clusters();
  const ParamSpace space = rocksdb_space();
  // Optima sit off-center for the multi-parameter clusters and near the
  // middle for the single-parameter one so each cluster carries a comparable
  // share of the iops variance.
  Configuration optimum;
  optimum.values = {
      225,        // max_background_compactions
      9,          // max_background_flushes
      127500000,  // write_buffer_size
      109,        // max_write_buffer_number
      27,         // min_write_buffer_number_to_merge
      14,         // max_bytes_for_level_multiplier
      250000,     // block_size
      218,        // level0_file_num_compaction_trigger
      901,        // level0_slowdown_writes_trigger
      920,        // level0_stop_writes_trigger
  };
  const UnitPoint up = normalize(space, optimum);
  for (std::size_t d = 0; d < space.dimension(); ++d) {
    spec.optima[space.param(d).name] = up.coords[d];
  }
  return spec;
}

SyntheticSurrogateSpec SyntheticSurrogateSpec::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("synthetic: expected an object");
  SyntheticSurrogateSpec spec = defaults();
  try {
    if (doc.contains("optima")) {
      spec.optima = doc.at("optima").get<std::map<std::string, double>>();
    }
    spec.noise_std = doc.value("noise_std", spec.noise_std);
    if (doc.contains("clusters")) spec.clusters = ClusterSpec::from_json(doc.at("clusters"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synthetic: ") + e.what());
  }
  return spec;
}

nlohmann::json SyntheticSurrogateSpec::to_json() const {
  return {{"optima", optima}, {"noise_std", noise_std}, {"clusters", clusters.to_json()}};
}

void SyntheticSurrogateSpec::validate(const ParamSpace& space, const TaskRegistry& tasks) const {
  clusters.validate(space, tasks);
  if (noise_std < 0.0) throw std::invalid_argument("synthetic: noise_std must be non-negative");
  for (const auto& p : space.params()) {
    const auto it = optima.find(p.name);
    if (it == optima.end()) {
      throw std::invalid_argument("synthetic: no optimum coordinate for parameter " + p.name);
    }
    if (!(it->second >= 0.0 && it->second <= 1.0)) {
      throw std::invalid_argument("synthetic: optimum for " + p.name + " outside [0, 1]");
    }
  }
}

Configuration synthetic_optimum_config(const SyntheticSurrogateSpec& spec,
                                       const ParamSpace& space) {
  UnitPoint up;
  up.coords.reserve(space.dimension());
  for (const auto& p : space.params()) up.coords.push_back(spec.optima.at(p.name));
  return denormalize(space, up);
}

std::map<std::string, double> synthetic_values(const Configuration& config,
                                               const ParamSpace& space,
                                               const TaskRegistry& tasks,
                                               const SyntheticSurrogateSpec& spec,
                                               std::uint64_t seed) {
  space.require_valid(config);
  const UnitPoint up = normalize(space, config);

  std::map<std::string, double> out;
  double loss_sum = 0.0;
  for (const auto& cluster : spec.clusters.clusters) {
    double loss = 0.0;
    for (const auto& name : cluster.params) {
      const auto idx = *space.index_of(name);
      const double d = up.coords[idx] - spec.optima.at(name);
      loss += d * d;
    }
    loss /= static_cast<double>(cluster.params.size());
    loss_sum += loss;
    for (const auto& name : cluster.tasks) {
      if (tasks.index_of(name) == tasks.primary_id()) continue;
      out[name] = 100.0 * loss;
    }
  }

  double iops = 100000.0 * (1.0 - loss_sum / static_cast<double>(spec.clusters.clusters.size()));
  if (spec.noise_std > 0.0) {
    Rng rng(seed);
    iops += spec.noise_std * rng.normal();
  }
  out[tasks.primary().name] = iops;
  return out;
}

ObjectiveFn make_synthetic_objective(ParamSpace space, TaskRegistry tasks,
                                     SyntheticSurrogateSpec spec) {
  spec.validate(space, tasks);
  return [space = std::move(space), tasks = std::move(tasks),
          spec = std::move(spec)](const Configuration& config, std::uint64_t draw_seed) {
    ObjectiveResult result;
    result.ok = true;
    result.values = synthetic_values(config, space, tasks, spec, draw_seed);
    result.wall_time_s = 0.0;
    return result;
  };
}

void ObjectiveSpec::validate(const ParamSpace& space, const TaskRegistry& tasks) const {
  if (command_template.empty()) throw std::invalid_argument("objective: empty command template");
  if (!(timeout_s > 0.0)) throw std::invalid_argument("objective: timeout must be positive");

  std::map<std::string, int> referenced;
  for (auto it = std::sregex_iterator(command_template.begin(), command_template.end(),
                                      placeholder_pattern());
       it != std::sregex_iterator(); ++it) {
    referenced[(*it)[1].str()] += 1;
  }
  for (const auto& [name, count] : referenced) {
    if (!space.index_of(name)) {
      throw std::invalid_argument("objective: template references unknown parameter " + name);
    }
    if (count > 1) {
      throw std::invalid_argument("objective: parameter " + name +
                                  " appears more than once in the template");
    }
  }

  std::set<std::string> ruled;
  bool needs_stats = false;
  for (const auto& rule : extraction) {
    tasks.index_of(rule.task);  // throws NotFoundError for unknown names
    if (!ruled.insert(rule.task).second) {
      throw std::invalid_argument("objective: task " + rule.task + " has multiple extraction rules");
    }
    std::regex re;
    try {
      re = std::regex(rule.pattern);
    } catch (const std::regex_error& e) {
      throw std::invalid_argument("objective: pattern for task " + rule.task +
                                  " does not compile: " + e.what());
    }
    if (re.mark_count() != 1) {
      throw std::invalid_argument("objective: pattern for task " + rule.task +
                                  " must have exactly one capture group");
    }
    needs_stats = needs_stats || rule.source == MetricExtraction::Source::stats_file;
  }
  for (const auto& t : tasks.tasks()) {
    if (!ruled.count(t.name)) {
      throw std::invalid_argument("objective: task " + t.name + " has no extraction rule");
    }
  }
  if (needs_stats && stats_path.empty()) {
    throw std::invalid_argument("objective: stats_path required by a stats-file extraction rule");
  }
}

ObjectiveSpec ObjectiveSpec::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("objective: expected an object");
  ObjectiveSpec spec;
  try {
    spec.command_template = doc.at("command_template").get<std::string>();
    spec.working_dir = doc.value("working_dir", spec.working_dir);
    spec.timeout_s = doc.value("timeout_s", spec.timeout_s);
    spec.stats_path = doc.value("stats_path", spec.stats_path);
    spec.append_unreferenced_params =
        doc.value("append_unreferenced_params", spec.append_unreferenced_params);
    for (const auto& entry : doc.at("extraction")) {
      MetricExtraction rule;
      rule.task = entry.at("task").get<std::string>();
      rule.pattern = entry.at("pattern").get<std::string>();
      rule.source = source_from_string(entry.value("source", "stdout"));
      rule.reducer = reducer_from_string(entry.value("reducer", "last"));
      spec.extraction.push_back(std::move(rule));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("objective: ") + e.what());
  }
  return spec;
}

nlohmann::json ObjectiveSpec::to_json() const {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& rule : extraction) {
    rules.push_back({{"task", rule.task},
                     {"pattern", rule.pattern},
                     {"source", source_name(rule.source)},
                     {"reducer", reducer_to_string(rule.reducer)}});
  }
  return {{"command_template", command_template},
          {"working_dir", working_dir},
          {"timeout_s", timeout_s},
          {"stats_path", stats_path},
          {"append_unreferenced_params", append_unreferenced_params},
          {"extraction", rules}};
}

std::string render_command(const ObjectiveSpec& spec, const ParamSpace& space,
                           const Configuration& config) {
  space.require_valid(config);

  std::string rendered;
  std::set<std::string> referenced;
  std::size_t pos = 0;
  for (auto it = std::sregex_iterator(spec.command_template.begin(), spec.command_template.end(),
                                      placeholder_pattern());
       it != std::sregex_iterator(); ++it) {
    const auto& match = *it;
    const std::string name = match[1].str();
    const auto idx = space.index_of(name);
    if (!idx) throw std::invalid_argument("objective: template references unknown parameter " + name);
    rendered.append(spec.command_template, pos, static_cast<std::size_t>(match.position()) - pos);
    rendered += std::to_string(config.values[*idx]);
    referenced.insert(name);
    pos = static_cast<std::size_t>(match.position() + match.length());
  }
  rendered.append(spec.command_template, pos, std::string::npos);

  if (spec.append_unreferenced_params) {
    for (std::size_t d = 0; d < space.dimension(); ++d) {
      const auto& name = space.param(d).name;
      if (referenced.count(name)) continue;
      rendered += " --" + name + "=" + std::to_string(config.values[d]);
    }
  }
  return rendered;
}

std::optional<double> extract_metric(const MetricExtraction& rule, const std::string& text) {
  const std::regex re(rule.pattern);
  std::vector<double> matches;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator();
       ++it) {
    try {
      matches.push_back(std::stod((*it)[1].str()));
    } catch (const std::exception&) {
      // capture group text was not numeric; skip this occurrence
    }
  }
  if (matches.empty()) return std::nullopt;
  switch (rule.reducer) {
    case MetricExtraction::Reducer::last:
      return matches.back();
    case MetricExtraction::Reducer::max:
      return *std::max_element(matches.begin(), matches.end());
    case MetricExtraction::Reducer::mean: {
      double sum = 0.0;
      for (double m : matches) sum += m;
      return sum / static_cast<double>(matches.size());
    }
  }
  return std::nullopt;
}

ObjectiveResult extract_all(const ObjectiveSpec& spec, const std::string& stdout_text,
                            const std::string& stats_text) {
  ObjectiveResult result;
  for (const auto& rule : spec.extraction) {
    const auto& text =
        rule.source == MetricExtraction::Source::stdout_text ? stdout_text : stats_text;
    const auto value = extract_metric(rule, text);
    if (!value) {
      result.ok = false;
      result.error = "no match for task " + rule.task + " in " + source_name(rule.source) +
                     "; output tail: " + output_tail(stdout_text);
      return result;
    }
    result.values[rule.task] = *value;
  }
  result.ok = true;
  return result;
}

ObjectiveResult run_benchmark(const Configuration& config, const ObjectiveSpec& spec,
                              const ParamSpace& space, const TaskRegistry& tasks) {
  spec.validate(space, tasks);
  const std::string command = render_command(spec, space, config);

  const auto start = std::chrono::steady_clock::now();
  const CaptureResult capture = run_shell(command, spec.working_dir, spec.timeout_s);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  ObjectiveResult result;
  result.wall_time_s = wall;
  if (capture.timed_out) {
    result.error = "benchmark timed out after " + std::to_string(spec.timeout_s) +
                   " s; output tail: " + output_tail(capture.output);
    return result;
  }
  if (!capture.exited_normally || capture.exit_status != 0) {
    result.error = "benchmark exited with status " + std::to_string(capture.exit_status) +
                   "; output tail: " + output_tail(capture.output);
    return result;
  }

  std::string stats_text;
  const bool needs_stats =
      std::any_of(spec.extraction.begin(), spec.extraction.end(), [](const MetricExtraction& r) {
        return r.source == MetricExtraction::Source::stats_file;
      });
  if (needs_stats) {
    std::ifstream in(spec.stats_path);
    if (!in) {
      result.error = "stats file unreadable: " + spec.stats_path;
      return result;
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    stats_text = buffer.str();
  }

  ObjectiveResult extracted = extract_all(spec, capture.output, stats_text);
  extracted.wall_time_s = wall;
  return extracted;
}

ObjectiveFn make_benchmark_objective(ObjectiveSpec spec, ParamSpace space, TaskRegistry tasks) {
  spec.validate(space, tasks);
  return [spec = std::move(spec), space = std::move(space),
          tasks = std::move(tasks)](const Configuration& config, std::uint64_t) {
    return run_benchmark(config, spec, space, tasks);
  };
}

}  // namespace mtbo
