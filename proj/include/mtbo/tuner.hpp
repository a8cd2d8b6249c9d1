#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mtbo/acquisition.hpp"
#include "mtbo/multitask.hpp"
#include "mtbo/objective.hpp"
#include "mtbo/param_space.hpp"

namespace mtbo {

enum class Strategy { random, gp, multitask, clustered_mt };

std::string strategy_name(Strategy strategy);
Strategy strategy_from_name(const std::string& name);  // throws ConfigError

// budget counts total evaluations including the init_random seeded ones.
struct TunerConfig {
  Strategy strategy = Strategy::random;
  int budget = 1;
  int init_random = 1;
  std::uint64_t seed = 0;
  ParamSpace space = rocksdb_space();
  TaskRegistry tasks = TaskRegistry::rocksdb();
  std::optional<ClusterSpec> clusters;  // present iff strategy is clustered-mt
  AcquisitionSpec acquisition;

  void validate() const;
  nlohmann::json to_json() const;
  static TunerConfig from_json(const nlohmann::json& doc);
};

struct TrialRecord {
  int step = 0;  // 1-based, contiguous
  Configuration config;
  std::map<std::string, double> values;  // empty when failed
  bool ok = false;
  double wall_time_s = 0.0;
  std::string error;  // failed trials only
};

// Ordered trial list plus the config snapshot it was produced under.
class History {
 public:
  explicit History(TunerConfig config) : config_(std::move(config)) {}

  const TunerConfig& config() const { return config_; }
  const std::vector<TrialRecord>& records() const { return records_; }

  void append(TrialRecord record);  // enforces step contiguity

 private:
  TunerConfig config_;
  std::vector<TrialRecord> records_;
};

// Runs the loop: init_random seeded uniform trials, then model-guided
// steps (rebuild dataset from ok trials, refit, propose, evaluate).
// Every trial is appended to the JSON-lines log at log_path (header line
// first) and flushed before the next step; empty log_path disables
// persistence. Surrogate numerical failures fall back to a random draw
// for that step and write an event line.
History run(const TunerConfig& config, const ObjectiveFn& objective,
            const std::filesystem::path& log_path = {});

// Re-reads a partial trial log (a truncated final line is dropped) and
// continues the run in place, appending to the same file. The log header
// must match `config`. A missing or empty log starts from scratch.
History resume(const TunerConfig& config, const ObjectiveFn& objective,
               const std::filesystem::path& log_path);

// Parses a trial log written by run(). Event lines are skipped; a
// truncated final line is dropped.
History read_trial_log(const std::filesystem::path& log_path);

// The ok trial maximizing the raw primary value; earliest step wins ties.
// Throws NotFoundError when no trial succeeded.
const TrialRecord& best_so_far(const History& history);

// Running maximum of the raw primary value over ok trials; failed steps
// after the first ok one repeat the previous best, earlier ones are skipped.
std::vector<std::pair<int, double>> convergence_trace(const History& history);

}  // namespace mtbo
