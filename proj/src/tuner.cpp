#include "mtbo/tuner.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <limits>
#include <stdexcept>

#include "mtbo/errors.hpp"
#include "mtbo/gp.hpp"
#include "mtbo/rng.hpp"

namespace mtbo {
namespace {

constexpr std::uint64_t kSaltDraw = 0x11;
constexpr std::uint64_t kSaltEval = 0x22;
constexpr std::uint64_t kSaltFit = 0x33;
constexpr std::uint64_t kSaltPropose = 0x44;
constexpr std::uint64_t kSaltFallback = 0x55;

nlohmann::json trial_to_json(const TunerConfig& config, const TrialRecord& record) {
  nlohmann::json doc;
  doc["type"] = "trial";
  doc["step"] = record.step;
  doc["config"] = config_to_json(config.space, record.config);
  doc["values"] = record.values;
  doc["status"] = record.ok ? "ok" : "failed";
  doc["wall_time_s"] = record.wall_time_s;
  if (!record.ok) doc["error"] = record.error;
  return doc;
}

TrialRecord trial_from_json(const TunerConfig& config, const nlohmann::json& doc) {
  TrialRecord record;
  record.step = doc.at("step").get<int>();
  record.config = config_from_json(config.space, doc.at("config"));
  record.values = doc.at("values").get<std::map<std::string, double>>();
  record.ok = doc.at("status").get<std::string>() == "ok";
  record.wall_time_s = doc.at("wall_time_s").get<double>();
  record.error = doc.value("error", "");
  return record;
}

void append_line(std::ofstream& out, const nlohmann::json& doc) {
  out << doc.dump() << '\n';
  out.flush();
}

std::vector<TaskObservation> ok_observations(const History& history) {
  std::vector<TaskObservation> obs;
  for (const auto& record : history.records()) {
    if (record.ok) obs.push_back({record.config, record.values});
  }
  return obs;
}

// Incumbent f*: the best standardized primary value under the given stats.
double incumbent_best(const std::vector<TaskObservation>& obs, const StandardizationStats& stats,
                      int primary_id, const std::string& primary_name) {
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& o : obs) {
    best = std::max(best, stats.standardize(primary_id, o.values.at(primary_name)));
  }
  return best;
}

std::vector<Configuration> evaluated_configs(const History& history) {
  std::vector<Configuration> out;
  for (const auto& record : history.records()) out.push_back(record.config);
  return out;
}

Configuration model_guided_step(const TunerConfig& config, const History& history, int step) {
  const auto obs = ok_observations(history);
  const auto evaluated = evaluated_configs(history);
  const auto& primary = config.tasks.primary();

  FitOptions fit_options;
  // One fit seed per run, not per step: identical hyperparameter starts at
  // every refit keep the selected optimum continuous as the dataset grows.
  fit_options.seed = mix_seed({config.seed, kSaltFit});
  const std::uint64_t propose_seed =
      mix_seed({config.seed, static_cast<std::uint64_t>(step), kSaltPropose});

  switch (config.strategy) {
    case Strategy::gp: {
      const TaskRegistry primary_only({{primary.name, primary.direction, true}});
      const auto dataset = build_dataset(obs, config.space, primary_only);
      const GPModel model = fit_multitask(dataset, fit_options);
      const double best = incumbent_best(obs, dataset.stats, 0, primary.name);
      return propose(model, config.space, best, config.acquisition, propose_seed, 0, &evaluated)
          .config;
    }
    case Strategy::multitask: {
      const auto dataset = build_dataset(obs, config.space, config.tasks);
      const GPModel model = fit_multitask(dataset, fit_options);
      const double best =
          incumbent_best(obs, dataset.stats, config.tasks.primary_id(), primary.name);
      return propose(model, config.space, best, config.acquisition, propose_seed,
                     config.tasks.primary_id(), &evaluated)
          .config;
    }
    case Strategy::clustered_mt: {
      const auto dataset = build_dataset(obs, config.space, config.tasks);
      const auto models =
          fit_clustered(obs, config.space, config.tasks, *config.clusters, fit_options);
      const double best =
          incumbent_best(obs, dataset.stats, config.tasks.primary_id(), primary.name);
      return propose_clustered(models, config.space, best, config.acquisition, propose_seed,
                               &evaluated)
          .config;
    }
    case Strategy::random:
      break;
  }
  Rng rng(mix_seed({config.seed, static_cast<std::uint64_t>(step), kSaltDraw}));
  return sample_uniform(config.space, rng);
}

History run_steps(const TunerConfig& config, const ObjectiveFn& objective, History history,
                  std::ofstream* log) {
  for (int step = static_cast<int>(history.records().size()) + 1; step <= config.budget; ++step) {
    Configuration next;
    std::string fallback_reason;
    const bool have_ok =
        std::any_of(history.records().begin(), history.records().end(),
                    [](const TrialRecord& r) { return r.ok; });
    if (step <= config.init_random || config.strategy == Strategy::random || !have_ok) {
      Rng rng(mix_seed({config.seed, static_cast<std::uint64_t>(step), kSaltDraw}));
      next = sample_uniform(config.space, rng);
    } else {
      try {
        next = model_guided_step(config, history, step);
      } catch (const NumericalError& e) {
        fallback_reason = e.what();
        Rng rng(mix_seed({config.seed, static_cast<std::uint64_t>(step), kSaltFallback}));
        next = sample_uniform(config.space, rng);
      }
    }
    if (!fallback_reason.empty() && log) {
      append_line(*log, {{"type", "event"},
                         {"step", step},
                         {"what", "surrogate_fallback"},
                         {"message", fallback_reason}});
    }

    const ObjectiveResult result =
        objective(next, mix_seed({config.seed, static_cast<std::uint64_t>(step), kSaltEval}));

    TrialRecord record;
    record.step = step;
    record.config = std::move(next);
    record.ok = result.ok;
    record.values = result.values;
    record.wall_time_s = result.wall_time_s;
    record.error = result.ok ? "" : result.error;
    if (log) append_line(*log, trial_to_json(config, record));
    history.append(std::move(record));
  }
  return history;
}

nlohmann::json header_json(const TunerConfig& config) {
  return {{"type", "header"}, {"version", 1}, {"config", config.to_json()}};
}

}  // namespace

std::string strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::random: return "random";
    case Strategy::gp: return "gp";
    case Strategy::multitask: return "multitask";
    case Strategy::clustered_mt: return "clustered-mt";
  }
  return "random";
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "random") return Strategy::random;
  if (name == "gp") return Strategy::gp;
  if (name == "multitask") return Strategy::multitask;
  if (name == "clustered-mt") return Strategy::clustered_mt;
  throw ConfigError("unknown strategy: " + name +
                    " (expected random, gp, multitask or clustered-mt)");
}

void TunerConfig::validate() const {
  if (budget < 1) throw std::invalid_argument("tuner: budget must be positive");
  if (init_random < 1) throw std::invalid_argument("tuner: init_random must be positive");
  if (budget < init_random) throw std::invalid_argument("tuner: budget must cover init_random");
  acquisition.validate();
  if (strategy == Strategy::clustered_mt) {
    if (!clusters) throw std::invalid_argument("tuner: strategy clustered-mt requires clusters");
    clusters->validate(space, tasks);
  } else if (clusters) {
    throw std::invalid_argument("tuner: clusters given but strategy is not clustered-mt");
  }
}

nlohmann::json TunerConfig::to_json() const {
  return {{"strategy", strategy_name(strategy)},
          {"budget", budget},
          {"init_random", init_random},
          {"seed", seed},
          {"space", space_to_json(space)},
          {"tasks", tasks.to_json()},
          {"clusters", clusters ? clusters->to_json() : nlohmann::json(nullptr)},
          {"acquisition", acquisition.to_json()}};
}

TunerConfig TunerConfig::from_json(const nlohmann::json& doc) {
  try {
    TunerConfig config;
    config.strategy = strategy_from_name(doc.at("strategy").get<std::string>());
    config.budget = doc.at("budget").get<int>();
    config.init_random = doc.at("init_random").get<int>();
    config.seed = doc.at("seed").get<std::uint64_t>();
    config.space = space_from_json(doc.at("space"));
    config.tasks = TaskRegistry::from_json(doc.at("tasks"));
    if (doc.contains("clusters") && !doc.at("clusters").is_null()) {
      config.clusters = ClusterSpec::from_json(doc.at("clusters"));
    }
    if (doc.contains("acquisition")) {
      config.acquisition = AcquisitionSpec::from_json(doc.at("acquisition"));
    }
    return config;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("tuner config: ") + e.what());
  }
}

void History::append(TrialRecord record) {
  if (record.step != static_cast<int>(records_.size()) + 1) {
    throw std::invalid_argument("history: trial steps must be contiguous from 1");
  }
  records_.push_back(std::move(record));
}

History run(const TunerConfig& config, const ObjectiveFn& objective,
            const std::filesystem::path& log_path) {
  config.validate();
  History history(config);
  if (log_path.empty()) return run_steps(config, objective, std::move(history), nullptr);

  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw ConfigError("cannot open trial log for writing: " + log_path.string());
  append_line(log, header_json(config));
  return run_steps(config, objective, std::move(history), &log);
}

namespace {

struct LoadedLog {
  std::optional<History> history;
  // Bytes up to and including the last intact trial line (or the header
  // when no trial parsed). Anything past this point is a truncated tail
  // or a dangling event and gets regenerated on resume.
  std::uintmax_t intact_bytes = 0;
};

LoadedLog load_trial_log(const std::filesystem::path& log_path) {
  std::ifstream in(log_path, std::ios::binary);
  if (!in) throw ConfigError("cannot open trial log: " + log_path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.empty()) throw ConfigError("trial log is empty: " + log_path.string());

  struct Line {
    std::string body;
    std::uintmax_t end_offset;  // one past the newline
    bool complete;              // newline-terminated
  };
  std::vector<Line> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back({text.substr(start), text.size(), false});
      break;
    }
    if (nl > start) lines.push_back({text.substr(start, nl - start), nl + 1, true});
    start = nl + 1;
  }
  if (lines.empty()) throw ConfigError("trial log is empty: " + log_path.string());

  auto parse = [&](std::size_t i) -> std::optional<nlohmann::json> {
    // A final line without its newline is an interrupted write even when
    // it happens to parse; drop it so resume regenerates it.
    if (!lines[i].complete) return std::nullopt;
    auto doc = nlohmann::json::parse(lines[i].body, nullptr, false);
    if (doc.is_discarded()) {
      if (i + 1 == lines.size()) return std::nullopt;
      throw ConfigError("trial log corrupt at line " + std::to_string(i + 1));
    }
    return doc;
  };

  const auto header = parse(0);
  if (!header || !header->is_object() || header->value("type", "") != "header") {
    throw ConfigError("trial log has no header line: " + log_path.string());
  }
  TunerConfig config = TunerConfig::from_json(header->at("config"));

  LoadedLog out;
  out.intact_bytes = lines[0].end_offset;
  History history(std::move(config));
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto doc = parse(i);
    if (!doc) break;
    const auto type = doc->value("type", "");
    if (type == "event") continue;
    if (type != "trial") throw ConfigError("trial log: unexpected line type " + type);
    try {
      history.append(trial_from_json(history.config(), *doc));
    } catch (const nlohmann::json::exception& e) {
      if (i + 1 == lines.size()) break;
      throw ConfigError(std::string("trial log: ") + e.what());
    }
    out.intact_bytes = lines[i].end_offset;
  }
  out.history = std::move(history);
  return out;
}

}  // namespace

History read_trial_log(const std::filesystem::path& log_path) {
  return std::move(*load_trial_log(log_path).history);
}

History resume(const TunerConfig& config, const ObjectiveFn& objective,
               const std::filesystem::path& log_path) {
  config.validate();
  std::error_code ec;
  const bool exists = std::filesystem::exists(log_path, ec) &&
                      std::filesystem::file_size(log_path, ec) > 0;
  if (!exists) return run(config, objective, log_path);

  LoadedLog loaded = load_trial_log(log_path);
  History existing = std::move(*loaded.history);
  if (existing.config().to_json() != config.to_json()) {
    throw ConfigError("trial log header does not match the requested run: " + log_path.string());
  }

  // Cut the truncated tail, keep the intact prefix byte-for-byte, append.
  std::filesystem::resize_file(log_path, loaded.intact_bytes, ec);
  if (ec) throw ConfigError("cannot truncate trial log: " + log_path.string());
  std::ofstream log(log_path, std::ios::app);
  if (!log) throw ConfigError("cannot open trial log for writing: " + log_path.string());
  return run_steps(config, objective, std::move(existing), &log);
}

const TrialRecord& best_so_far(const History& history) {
  const auto& primary = history.config().tasks.primary().name;
  const TrialRecord* best = nullptr;
  for (const auto& record : history.records()) {
    if (!record.ok) continue;
    if (!best || record.values.at(primary) > best->values.at(primary)) best = &record;
  }
  if (!best) throw NotFoundError("history has no ok trial");
  return *best;
}

std::vector<std::pair<int, double>> convergence_trace(const History& history) {
  const auto& primary = history.config().tasks.primary().name;
  std::vector<std::pair<int, double>> trace;
  bool seen_ok = false;
  double best = 0.0;
  for (const auto& record : history.records()) {
    if (record.ok) {
      const double v = record.values.at(primary);
      best = seen_ok ? std::max(best, v) : v;
      seen_ok = true;
    }
    if (seen_ok) trace.emplace_back(record.step, best);
  }
  return trace;
}

}  // namespace mtbo
