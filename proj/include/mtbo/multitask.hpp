#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mtbo/gp.hpp"
#include "mtbo/param_space.hpp"

namespace mtbo {

enum class Direction { maximize, minimize };

struct TaskSpec {
  std::string name;
  Direction direction = Direction::maximize;
  bool is_primary = false;
};

// Ordered task list with exactly one primary. Task ids are positions in
// this list and index every per-task structure downstream.
class TaskRegistry {
 public:
  explicit TaskRegistry(std::vector<TaskSpec> tasks);

  // iops (primary, maximize) plus the three adjacent minimized metrics.
  static TaskRegistry rocksdb();

  int size() const { return static_cast<int>(tasks_.size()); }
  const TaskSpec& task(int id) const { return tasks_[static_cast<std::size_t>(id)]; }
  const std::vector<TaskSpec>& tasks() const { return tasks_; }
  int index_of(const std::string& name) const;  // throws NotFoundError
  int primary_id() const { return primary_id_; }
  const TaskSpec& primary() const { return tasks_[static_cast<std::size_t>(primary_id_)]; }

  // Array of {name, direction, primary}.
  static TaskRegistry from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

 private:
  std::vector<TaskSpec> tasks_;
  int primary_id_ = 0;
};

// One complete measurement: every registered task has a raw value.
struct TaskObservation {
  Configuration config;
  std::map<std::string, double> values;
};

// Per-task affine transform fitted by build_dataset. sign is -1 for
// minimized tasks so larger standardized value always means better;
// std falls back to 1 when the sample spread is below 1e-12.
struct TaskStandardization {
  double sign = 1.0;
  double mean = 0.0;
  double std = 1.0;
  bool sigma_fallback = false;  // set when the raw spread was below 1e-12
};

struct StandardizationStats {
  std::vector<TaskStandardization> per_task;  // indexed by task id

  double standardize(int task, double raw) const {
    const auto& t = per_task[static_cast<std::size_t>(task)];
    return (t.sign * raw - t.mean) / t.std;
  }
};

// Stacked (unit point, task id, standardized value) rows, observation-major
// task-minor, ready for ICM fitting. Row count is N x T.
struct MultiTaskDataset {
  TrainingSet training;
  StandardizationStats stats;
  int num_tasks = 0;
};

MultiTaskDataset build_dataset(const std::vector<TaskObservation>& history,
                               const ParamSpace& space, const TaskRegistry& tasks);

// Fits one ICM model over all tasks (plain GP when the registry has one task).
GPModel fit_multitask(const MultiTaskDataset& dataset, const FitOptions& options = {});

// Cluster layout: each entry owns a set of tasks and a set of parameters.
struct Cluster {
  std::vector<std::string> tasks;
  std::vector<std::string> params;
};

struct ClusterSpec {
  std::vector<Cluster> clusters;

  // Unknown names, a non-primary task missing or repeated, overlapping or
  // non-covering parameter sets all raise invalid_argument. The primary
  // task is exempt from the exactly-once rule: it is implicitly added to
  // every cluster at fit time and may be listed or omitted freely.
  void validate(const ParamSpace& space, const TaskRegistry& tasks) const;

  // Array of {tasks: [names], params: [names]}.
  static ClusterSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

// The documented default assignment of the ten RocksDB parameters to the
// three adjacent tasks: level0/flush, compaction/write-amp, and read.
ClusterSpec default_rocksdb_clusters();

// One fitted per-cluster model. task_ids are registry ids in ascending
// order (primary included); local task numbering follows that order and
// primary_head is the primary's local index.
struct ClusterModel {
  std::size_t cluster_index = 0;
  std::vector<std::size_t> param_indices;  // ascending full-space indices
  std::vector<int> task_ids;
  int primary_head = 0;
  ParamSpace space;
  GPModel model;
};

std::vector<ClusterModel> fit_clustered(const std::vector<TaskObservation>& history,
                                        const ParamSpace& space, const TaskRegistry& tasks,
                                        const ClusterSpec& clusters,
                                        const FitOptions& options = {});

}  // namespace mtbo
