#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mtbo/rng.hpp"

namespace mtbo {

using Value = std::int64_t;

// One discrete ordinal parameter: an inclusive integer range plus the
// vendor default. Degenerate single-value ranges are rejected.
struct ParamSpec {
  std::string name;
  Value lower = 0;
  Value upper = 0;
  Value default_value = 0;

  Value range_width() const { return upper - lower; }
};

// A concrete integer assignment, aligned index-for-index with a ParamSpace.
struct Configuration {
  std::vector<Value> values;

  bool operator==(const Configuration&) const = default;
};

// A point in [0,1]^D produced by normalize().
struct UnitPoint {
  std::vector<double> coords;

  bool operator==(const UnitPoint&) const = default;
};

// Ordered list of ordinal parameters. Immutable after construction and
// safe to share across threads.
class ParamSpace {
 public:
  explicit ParamSpace(std::vector<ParamSpec> params);

  std::size_t dimension() const { return params_.size(); }
  const ParamSpec& param(std::size_t i) const { return params_[i]; }
  const std::vector<ParamSpec>& params() const { return params_; }
  std::optional<std::size_t> index_of(std::string_view name) const;

  bool contains(const Configuration& config) const;
  void require_valid(const Configuration& config) const;

  // Total number of distinct configurations, or nullopt on overflow.
  std::optional<std::uint64_t> total_configurations() const;

 private:
  std::vector<ParamSpec> params_;
};

// Affine map onto the unit cube: coordinate i = (v_i - lower_i) / (upper_i - lower_i).
UnitPoint normalize(const ParamSpace& space, const Configuration& config);

// Inverse of normalize: round half-away-from-zero, then clamp into range.
// denormalize(normalize(c)) == c for every valid configuration.
Configuration denormalize(const ParamSpace& space, const UnitPoint& point);

// The ten-parameter RocksDB v6.17 space. Note: the published table lists
// level0_slowdown_writes_trigger with default 0 outside its own range
// [1, 1024]; this space stores the default clamped to 1.
ParamSpace rocksdb_space();

Configuration default_config(const ParamSpace& space);

Configuration sample_uniform(const ParamSpace& space, Rng& rng);

// JSON round-trip: array of {name, lower, upper, default}.
ParamSpace space_from_json(const nlohmann::json& doc);
nlohmann::json space_to_json(const ParamSpace& space);

// Built-in spaces by name. Currently "rocksdb-v6.17-table1".
ParamSpace space_by_name(std::string_view name);

// New space holding the selected parameters, in the given index order.
ParamSpace subspace(const ParamSpace& space, const std::vector<std::size_t>& indices);

nlohmann::json config_to_json(const ParamSpace& space, const Configuration& config);
Configuration config_from_json(const ParamSpace& space, const nlohmann::json& doc);

}  // namespace mtbo
