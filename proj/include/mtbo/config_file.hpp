#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"
#include "mtbo/acquisition.hpp"
#include "mtbo/multitask.hpp"
#include "mtbo/objective.hpp"
#include "mtbo/param_space.hpp"

namespace mtbo {

// Parsed tuner config file: one JSON document with sections
// {space, tasks, clusters, acquisition, objective, synthetic}, all
// optional. space accepts either a built-in name string or an inline
// parameter array. Missing sections keep the RocksDB defaults.
struct FileConfig {
  ParamSpace space = rocksdb_space();
  TaskRegistry tasks = TaskRegistry::rocksdb();
  std::optional<ClusterSpec> clusters;
  AcquisitionSpec acquisition;
  std::optional<ObjectiveSpec> objective;
  SyntheticSurrogateSpec synthetic = SyntheticSurrogateSpec::defaults();

  static FileConfig from_json(const nlohmann::json& doc);
  static FileConfig load(const std::filesystem::path& path);
};

}  // namespace mtbo
