#include "mtbo/param_space.hpp"

#include <cmath>
#include <set>
#include <stdexcept>

#include "mtbo/errors.hpp"

namespace mtbo {

ParamSpace::ParamSpace(std::vector<ParamSpec> params) : params_(std::move(params)) {
  if (params_.empty()) {
    throw std::invalid_argument("parameter space must have at least one parameter");
  }
  std::set<std::string> seen;
  for (const auto& p : params_) {
    if (p.name.empty()) {
      throw std::invalid_argument("parameter name must not be empty");
    }
    if (!seen.insert(p.name).second) {
      throw std::invalid_argument("duplicate parameter name: " + p.name);
    }
    if (p.lower >= p.upper) {
      throw std::invalid_argument("parameter " + p.name +
                                  ": lower must be strictly below upper (degenerate "
                                  "single-value parameters are rejected)");
    }
    if (p.default_value < p.lower || p.default_value > p.upper) {
      throw std::invalid_argument("parameter " + p.name + ": default outside [lower, upper]");
    }
  }
}

std::optional<std::size_t> ParamSpace::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  return std::nullopt;
}

bool ParamSpace::contains(const Configuration& config) const {
  if (config.values.size() != params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (config.values[i] < params_[i].lower || config.values[i] > params_[i].upper) return false;
  }
  return true;
}

void ParamSpace::require_valid(const Configuration& config) const {
  if (config.values.size() != params_.size()) {
    throw std::invalid_argument("configuration has " + std::to_string(config.values.size()) +
                                " values, space has dimension " + std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (config.values[i] < params_[i].lower || config.values[i] > params_[i].upper) {
      throw std::invalid_argument("value " + std::to_string(config.values[i]) +
                                  " outside range of parameter " + params_[i].name);
    }
  }
}

std::optional<std::uint64_t> ParamSpace::total_configurations() const {
  std::uint64_t total = 1;
  for (const auto& p : params_) {
    const std::uint64_t width = static_cast<std::uint64_t>(p.upper - p.lower) + 1;
    if (total > UINT64_MAX / width) return std::nullopt;
    total *= width;
  }
  return total;
}

UnitPoint normalize(const ParamSpace& space, const Configuration& config) {
  space.require_valid(config);
  UnitPoint point;
  point.coords.resize(space.dimension());
  for (std::size_t i = 0; i < space.dimension(); ++i) {
    const ParamSpec& p = space.param(i);
    point.coords[i] = static_cast<double>(config.values[i] - p.lower) /
                      static_cast<double>(p.upper - p.lower);
  }
  return point;
}

Configuration denormalize(const ParamSpace& space, const UnitPoint& point) {
  if (point.coords.size() != space.dimension()) {
    throw std::invalid_argument("point has " + std::to_string(point.coords.size()) +
                                " coordinates, space has dimension " +
                                std::to_string(space.dimension()));
  }
  Configuration config;
  config.values.resize(space.dimension());
  for (std::size_t i = 0; i < space.dimension(); ++i) {
    const ParamSpec& p = space.param(i);
    const double scaled = point.coords[i] * static_cast<double>(p.upper - p.lower);
    Value v = p.lower + static_cast<Value>(std::llround(scaled));
    if (v < p.lower) v = p.lower;
    if (v > p.upper) v = p.upper;
    config.values[i] = v;
  }
  return config;
}

ParamSpace rocksdb_space() {
  // RocksDB v6.17, ten discrete ordinal parameters. The published default
  // for level0_slowdown_writes_trigger (0) falls outside the declared
  // range [1, 1024]; it is stored clamped to 1 here.
  return ParamSpace({
      {"max_background_compactions", 1, 256, 1},
      {"max_background_flushes", 1, 10, 1},
      {"write_buffer_size", 1, 150000000, 67108864},
      {"max_write_buffer_number", 1, 128, 2},
      {"min_write_buffer_number_to_merge", 1, 32, 1},
      {"max_bytes_for_level_multiplier", 5, 15, 10},
      {"block_size", 1, 500000, 4096},
      {"level0_file_num_compaction_trigger", 1, 256, 4},
      {"level0_slowdown_writes_trigger", 1, 1024, 1},
      {"level0_stop_writes_trigger", 1, 1024, 36},
  });
}

Configuration default_config(const ParamSpace& space) {
  Configuration config;
  config.values.reserve(space.dimension());
  for (const auto& p : space.params()) config.values.push_back(p.default_value);
  return config;
}

Configuration sample_uniform(const ParamSpace& space, Rng& rng) {
  Configuration config;
  config.values.reserve(space.dimension());
  for (const auto& p : space.params()) config.values.push_back(rng.uniform_int(p.lower, p.upper));
  return config;
}

ParamSpace space_from_json(const nlohmann::json& doc) {
  if (!doc.is_array()) throw ConfigError("space: expected an array of parameter objects");
  std::vector<ParamSpec> params;
  for (const auto& item : doc) {
    if (!item.is_object()) throw ConfigError("space: each parameter must be an object");
    for (const char* key : {"name", "lower", "upper", "default"}) {
      if (!item.contains(key)) {
        throw ConfigError(std::string("space: parameter missing field '") + key + "'");
      }
    }
    params.push_back({item.at("name").get<std::string>(), item.at("lower").get<Value>(),
                      item.at("upper").get<Value>(), item.at("default").get<Value>()});
  }
  try {
    return ParamSpace(std::move(params));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("space: ") + e.what());
  }
}

nlohmann::json space_to_json(const ParamSpace& space) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& p : space.params()) {
    doc.push_back({{"name", p.name}, {"lower", p.lower}, {"upper", p.upper}, {"default", p.default_value}});
  }
  return doc;
}

ParamSpace subspace(const ParamSpace& space, const std::vector<std::size_t>& indices) {
  std::vector<ParamSpec> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= space.dimension()) throw std::invalid_argument("subspace: parameter index out of range");
    picked.push_back(space.param(i));
  }
  return ParamSpace(std::move(picked));
}

ParamSpace space_by_name(std::string_view name) {
  if (name == "rocksdb-v6.17-table1") return rocksdb_space();
  throw ConfigError("unknown built-in space: " + std::string(name));
}

nlohmann::json config_to_json(const ParamSpace& space, const Configuration& config) {
  space.require_valid(config);
  nlohmann::json doc = nlohmann::json::object();
  for (std::size_t i = 0; i < space.dimension(); ++i) {
    doc[space.param(i).name] = config.values[i];
  }
  return doc;
}

Configuration config_from_json(const ParamSpace& space, const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("configuration: expected an object of name -> value");
  Configuration config;
  config.values.resize(space.dimension());
  for (std::size_t i = 0; i < space.dimension(); ++i) {
    const auto& name = space.param(i).name;
    if (!doc.contains(name)) throw ConfigError("configuration: missing parameter " + name);
    config.values[i] = doc.at(name).get<Value>();
  }
  space.require_valid(config);
  return config;
}

}  // namespace mtbo
