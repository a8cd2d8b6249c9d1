#include "mtbo/multitask.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <set>
#include <stdexcept>

#include "mtbo/errors.hpp"
#include "mtbo/rng.hpp"

namespace mtbo {

TaskRegistry::TaskRegistry(std::vector<TaskSpec> tasks) : tasks_(std::move(tasks)) {
  if (tasks_.empty()) throw std::invalid_argument("task registry: no tasks");
  std::set<std::string> names;
  int primaries = 0;
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (!names.insert(tasks_[i].name).second) {
      throw std::invalid_argument("task registry: duplicate task name " + tasks_[i].name);
    }
    if (tasks_[i].is_primary) {
      primaries += 1;
      primary_id_ = static_cast<int>(i);
    }
  }
  if (primaries != 1) {
    throw std::invalid_argument("task registry: exactly one task must be primary");
  }
}

TaskRegistry TaskRegistry::rocksdb() {
  return TaskRegistry({{"iops", Direction::maximize, true},
                       {"write_amplification", Direction::minimize, false},
                       {"read_block_get_p99", Direction::minimize, false},
                       {"level0_to_level1_p99", Direction::minimize, false}});
}

int TaskRegistry::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (tasks_[i].name == name) return static_cast<int>(i);
  }
  throw NotFoundError("unknown task: " + name);
}

TaskRegistry TaskRegistry::from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw ConfigError("tasks: expected an array of {name, direction, primary}");
  std::vector<TaskSpec> specs;
  try {
    for (const auto& entry : doc) {
      TaskSpec spec;
      spec.name = entry.at("name").get<std::string>();
      const auto dir = entry.at("direction").get<std::string>();
      if (dir == "maximize") {
        spec.direction = Direction::maximize;
      } else if (dir == "minimize") {
        spec.direction = Direction::minimize;
      } else {
        throw ConfigError("tasks: direction must be maximize or minimize, got " + dir);
      }
      spec.is_primary = entry.value("primary", false);
      specs.push_back(std::move(spec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("tasks: ") + e.what());
  }
  try {
    return TaskRegistry(std::move(specs));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

nlohmann::json TaskRegistry::to_json() const {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& t : tasks_) {
    doc.push_back({{"name", t.name},
                   {"direction", t.direction == Direction::maximize ? "maximize" : "minimize"},
                   {"primary", t.is_primary}});
  }
  return doc;
}

MultiTaskDataset build_dataset(const std::vector<TaskObservation>& history,
                               const ParamSpace& space, const TaskRegistry& tasks) {
  if (history.empty()) throw std::invalid_argument("build_dataset: empty history");
  const int t_count = tasks.size();
  const std::size_t n = history.size();

  for (const auto& obs : history) {
    space.require_valid(obs.config);
    for (const auto& spec : tasks.tasks()) {
      if (!obs.values.count(spec.name)) {
        throw std::invalid_argument("build_dataset: observation missing task " + spec.name);
      }
    }
  }

  MultiTaskDataset out;
  out.num_tasks = t_count;
  out.stats.per_task.resize(static_cast<std::size_t>(t_count));
  for (int t = 0; t < t_count; ++t) {
    const auto& spec = tasks.task(t);
    auto& st = out.stats.per_task[static_cast<std::size_t>(t)];
    st.sign = spec.direction == Direction::minimize ? -1.0 : 1.0;
    double sum = 0.0;
    for (const auto& obs : history) sum += st.sign * obs.values.at(spec.name);
    st.mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (const auto& obs : history) {
      const double d = st.sign * obs.values.at(spec.name) - st.mean;
      sq += d * d;
    }
    const double sigma = std::sqrt(sq / static_cast<double>(n));
    st.sigma_fallback = sigma < 1e-12;
    st.std = st.sigma_fallback ? 1.0 : sigma;
  }

  const auto dim = static_cast<Eigen::Index>(space.dimension());
  const auto rows = static_cast<Eigen::Index>(n) * t_count;
  out.training.x.resize(rows, dim);
  out.training.y.resize(rows);
  out.training.task_ids.resize(static_cast<std::size_t>(rows));
  Eigen::Index r = 0;
  for (const auto& obs : history) {
    const UnitPoint up = normalize(space, obs.config);
    for (int t = 0; t < t_count; ++t, ++r) {
      for (Eigen::Index d = 0; d < dim; ++d) {
        out.training.x(r, d) = up.coords[static_cast<std::size_t>(d)];
      }
      out.training.task_ids[static_cast<std::size_t>(r)] = t;
      out.training.y(r) = out.stats.standardize(t, obs.values.at(tasks.task(t).name));
    }
  }
  return out;
}

GPModel fit_multitask(const MultiTaskDataset& dataset, const FitOptions& options) {
  return GPModel::fit(dataset.training, dataset.num_tasks, options);
}

void ClusterSpec::validate(const ParamSpace& space, const TaskRegistry& tasks) const {
  if (clusters.empty()) throw std::invalid_argument("clusters: empty cluster list");

  std::vector<int> task_seen(static_cast<std::size_t>(tasks.size()), 0);
  std::vector<int> param_seen(space.dimension(), 0);
  for (const auto& cluster : clusters) {
    if (cluster.params.empty()) {
      throw std::invalid_argument("clusters: a cluster must own at least one parameter");
    }
    for (const auto& name : cluster.tasks) {
      try {
        task_seen[static_cast<std::size_t>(tasks.index_of(name))] += 1;
      } catch (const NotFoundError&) {
        throw std::invalid_argument("clusters: unknown task " + name);
      }
    }
    std::set<std::string> within;
    for (const auto& name : cluster.params) {
      if (!within.insert(name).second) {
        throw std::invalid_argument("clusters: parameter " + name + " repeated inside a cluster");
      }
      const auto idx = space.index_of(name);
      if (!idx) throw std::invalid_argument("clusters: unknown parameter " + name);
      param_seen[*idx] += 1;
    }
  }

  for (int t = 0; t < tasks.size(); ++t) {
    if (t == tasks.primary_id()) continue;  // implicitly in every cluster
    if (task_seen[static_cast<std::size_t>(t)] != 1) {
      throw std::invalid_argument("clusters: task " + tasks.task(t).name +
                                  " must appear in exactly one cluster");
    }
  }
  for (std::size_t d = 0; d < space.dimension(); ++d) {
    if (param_seen[d] > 1) {
      throw std::invalid_argument("clusters: parameter " + space.param(d).name +
                                  " assigned to more than one cluster");
    }
    if (param_seen[d] == 0) {
      throw std::invalid_argument("clusters: parameter " + space.param(d).name +
                                  " not assigned to any cluster");
    }
  }
}

ClusterSpec ClusterSpec::from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw ConfigError("clusters: expected an array of {tasks, params}");
  ClusterSpec spec;
  try {
    for (const auto& entry : doc) {
      Cluster cluster;
      cluster.tasks = entry.at("tasks").get<std::vector<std::string>>();
      cluster.params = entry.at("params").get<std::vector<std::string>>();
      spec.clusters.push_back(std::move(cluster));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("clusters: ") + e.what());
  }
  return spec;
}

nlohmann::json ClusterSpec::to_json() const {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& cluster : clusters) {
    doc.push_back({{"tasks", cluster.tasks}, {"params", cluster.params}});
  }
  return doc;
}

ClusterSpec default_rocksdb_clusters() {
  ClusterSpec spec;
  spec.clusters.push_back(
      {{"level0_to_level1_p99"},
       {"write_buffer_size", "max_write_buffer_number", "min_write_buffer_number_to_merge",
        "max_background_flushes", "level0_file_num_compaction_trigger"}});
  spec.clusters.push_back({{"write_amplification"},
                           {"max_background_compactions", "max_bytes_for_level_multiplier",
                            "level0_slowdown_writes_trigger", "level0_stop_writes_trigger"}});
  spec.clusters.push_back({{"read_block_get_p99"}, {"block_size"}});
  return spec;
}

std::vector<ClusterModel> fit_clustered(const std::vector<TaskObservation>& history,
                                        const ParamSpace& space, const TaskRegistry& tasks,
                                        const ClusterSpec& clusters, const FitOptions& options) {
  clusters.validate(space, tasks);
  const MultiTaskDataset full = build_dataset(history, space, tasks);
  const int t_count = tasks.size();
  const auto n_obs = static_cast<Eigen::Index>(history.size());
  const auto n_clusters = clusters.clusters.size();

  std::vector<std::optional<ClusterModel>> slots(n_clusters);
  std::vector<std::exception_ptr> failures(n_clusters);

  const bool run_parallel = options.parallel && parallel_enabled();
#pragma omp parallel for schedule(dynamic, 1) if (run_parallel)
  for (std::size_t c = 0; c < n_clusters; ++c) {
    try {
      const auto& cluster = clusters.clusters[c];

      std::vector<std::size_t> param_indices;
      for (const auto& name : cluster.params) param_indices.push_back(*space.index_of(name));
      std::sort(param_indices.begin(), param_indices.end());

      std::set<int> id_set{tasks.primary_id()};
      for (const auto& name : cluster.tasks) id_set.insert(tasks.index_of(name));
      std::vector<int> task_ids(id_set.begin(), id_set.end());
      const int primary_head = static_cast<int>(
          std::find(task_ids.begin(), task_ids.end(), tasks.primary_id()) - task_ids.begin());

      const auto local_t = static_cast<int>(task_ids.size());
      TrainingSet sub;
      sub.x.resize(n_obs * local_t, static_cast<Eigen::Index>(param_indices.size()));
      sub.y.resize(n_obs * local_t);
      sub.task_ids.resize(static_cast<std::size_t>(n_obs * local_t));
      Eigen::Index r = 0;
      for (Eigen::Index i = 0; i < n_obs; ++i) {
        for (int lt = 0; lt < local_t; ++lt, ++r) {
          const int global_t = task_ids[static_cast<std::size_t>(lt)];
          for (std::size_t d = 0; d < param_indices.size(); ++d) {
            sub.x(r, static_cast<Eigen::Index>(d)) =
                full.training.x(i * t_count, static_cast<Eigen::Index>(param_indices[d]));
          }
          sub.task_ids[static_cast<std::size_t>(r)] = lt;
          sub.y(r) = full.training.y(i * t_count + global_t);
        }
      }

      FitOptions sub_options = options;
      sub_options.seed = mix_seed({options.seed, static_cast<std::uint64_t>(c), 0xc1a5u});
      GPModel model = GPModel::fit(std::move(sub), local_t, sub_options);

      ParamSpace sub_space = subspace(space, param_indices);
      slots[c].emplace(ClusterModel{c, std::move(param_indices), std::move(task_ids),
                                    primary_head, std::move(sub_space), std::move(model)});
    } catch (...) {
      failures[c] = std::current_exception();
    }
  }

  for (const auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }
  std::vector<ClusterModel> out;
  out.reserve(n_clusters);
  for (auto& slot : slots) out.push_back(std::move(*slot));
  return out;
}

}  // namespace mtbo
