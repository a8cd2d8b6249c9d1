// Parameter space construction, the unit-cube maps and their exact
// round-trip, the RocksDB v6.17 table, and the JSON forms.

#include <cmath>
#include <set>
#include <stdexcept>

#include "doctest.h"
#include "json.hpp"
#include "mtbo/errors.hpp"
#include "mtbo/param_space.hpp"
#include "mtbo/rng.hpp"

using namespace mtbo;

namespace {

ParamSpace tiny_space() {
  return ParamSpace({{"a", 0, 10, 3}, {"b", -5, 5, 0}});
}

}  // namespace

TEST_CASE("construction rejects malformed parameter lists") {
  CHECK_THROWS_AS(ParamSpace({}), std::invalid_argument);
  CHECK_THROWS_AS(ParamSpace({{"x", 0, 10, 3}, {"x", 0, 5, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(ParamSpace({{"x", 5, 5, 5}}), std::invalid_argument);  // degenerate
  CHECK_THROWS_AS(ParamSpace({{"x", 10, 0, 5}}), std::invalid_argument);
  CHECK_THROWS_AS(ParamSpace({{"x", 0, 10, 11}}), std::invalid_argument);
  CHECK_THROWS_AS(ParamSpace({{"", 0, 10, 5}}), std::invalid_argument);
}

TEST_CASE("rocksdb space matches the published table") {
  const ParamSpace space = rocksdb_space();
  CHECK(space.dimension() == 10);

  const auto check = [&](const char* name, Value lo, Value hi, Value def) {
    const auto idx = space.index_of(name);
    REQUIRE(idx.has_value());
    const auto& p = space.param(*idx);
    CHECK(p.lower == lo);
    CHECK(p.upper == hi);
    CHECK(p.default_value == def);
  };
  check("max_background_compactions", 1, 256, 1);
  check("max_background_flushes", 1, 10, 1);
  check("write_buffer_size", 1, 150000000, 67108864);
  check("max_write_buffer_number", 1, 128, 2);
  check("min_write_buffer_number_to_merge", 1, 32, 1);
  check("max_bytes_for_level_multiplier", 5, 15, 10);
  check("block_size", 1, 500000, 4096);
  check("level0_file_num_compaction_trigger", 1, 256, 4);
  // The published default (0) sits outside the declared range; stored
  // clamped to the range floor.
  check("level0_slowdown_writes_trigger", 1, 1024, 1);
  check("level0_stop_writes_trigger", 1, 1024, 36);

  CHECK(space.index_of("no_such_param") == std::nullopt);
}

TEST_CASE("normalize maps bounds to the cube corners") {
  const ParamSpace space = tiny_space();
  Configuration lo{{0, -5}};
  Configuration hi{{10, 5}};
  CHECK(normalize(space, lo).coords == std::vector<double>{0.0, 0.0});
  CHECK(normalize(space, hi).coords == std::vector<double>{1.0, 1.0});
}

TEST_CASE("normalize evaluates the affine formula exactly") {
  const ParamSpace space = rocksdb_space();
  Configuration config = default_config(space);
  const auto up = normalize(space, config);
  const auto wb = *space.index_of("write_buffer_size");
  CHECK(up.coords[wb] == (67108864.0 - 1.0) / (150000000.0 - 1.0));
  for (double c : up.coords) {
    CHECK(c >= 0.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("normalize is monotone per coordinate") {
  const ParamSpace space = tiny_space();
  double prev = -1.0;
  for (Value v = 0; v <= 10; ++v) {
    const double c = normalize(space, {{v, 0}}).coords[0];
    CHECK(c > prev);
    prev = c;
  }
}

TEST_CASE("normalize and denormalize reject dimension mismatch") {
  const ParamSpace space = tiny_space();
  CHECK_THROWS_AS(normalize(space, Configuration{{1}}), std::invalid_argument);
  CHECK_THROWS_AS(normalize(space, Configuration{{11, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(denormalize(space, UnitPoint{{0.5}}), std::invalid_argument);
}

TEST_CASE("denormalize maps corners to bounds and clamps") {
  const ParamSpace space = tiny_space();
  CHECK(denormalize(space, {{0.0, 0.0}}).values == std::vector<Value>{0, -5});
  CHECK(denormalize(space, {{1.0, 1.0}}).values == std::vector<Value>{10, 5});
  // Coordinates slightly outside [0,1] clamp back into range.
  CHECK(denormalize(space, {{1.2, -0.2}}).values == std::vector<Value>{10, -5});
}

TEST_CASE("round-trip identity on 1000 random configurations") {
  const ParamSpace space = rocksdb_space();
  Rng rng(99);
  for (int i = 0; i < 1000; ++i) {
    const Configuration c = sample_uniform(space, rng);
    CHECK(denormalize(space, normalize(space, c)) == c);
  }
}

TEST_CASE("default_config is valid and matches the declared defaults") {
  const ParamSpace space = rocksdb_space();
  const Configuration d = default_config(space);
  CHECK(space.contains(d));
  for (std::size_t i = 0; i < space.dimension(); ++i) {
    CHECK(d.values[i] == space.param(i).default_value);
  }
  CHECK(default_config(ParamSpace({{"p", 0, 10, 3}})).values == std::vector<Value>{3});
}

TEST_CASE("sample_uniform respects ranges and is seed deterministic") {
  const ParamSpace space = rocksdb_space();
  Rng a(7), b(7);
  for (int i = 0; i < 200; ++i) {
    const Configuration c = sample_uniform(space, a);
    CHECK(space.contains(c));
    CHECK(c == sample_uniform(space, b));
  }
}

TEST_CASE("contains and require_valid agree") {
  const ParamSpace space = tiny_space();
  CHECK(space.contains(Configuration{{5, 0}}));
  CHECK_FALSE(space.contains(Configuration{{5}}));
  CHECK_FALSE(space.contains(Configuration{{5, 6}}));
  CHECK_NOTHROW(space.require_valid(Configuration{{5, 0}}));
  CHECK_THROWS_AS(space.require_valid(Configuration{{5, 6}}), std::invalid_argument);
}

TEST_CASE("total_configurations counts small spaces and flags overflow") {
  CHECK(tiny_space().total_configurations() == 11ull * 11ull);
  CHECK(ParamSpace({{"p", 0, 1, 0}}).total_configurations() == 2ull);
  // The RocksDB space exceeds 2^64 configurations.
  CHECK(rocksdb_space().total_configurations() == std::nullopt);
}

TEST_CASE("space JSON round-trip preserves every field") {
  const ParamSpace space = rocksdb_space();
  const ParamSpace loaded = space_from_json(space_to_json(space));
  REQUIRE(loaded.dimension() == space.dimension());
  for (std::size_t i = 0; i < space.dimension(); ++i) {
    CHECK(loaded.param(i).name == space.param(i).name);
    CHECK(loaded.param(i).lower == space.param(i).lower);
    CHECK(loaded.param(i).upper == space.param(i).upper);
    CHECK(loaded.param(i).default_value == space.param(i).default_value);
  }
}

TEST_CASE("space_from_json reports missing fields and bad shapes") {
  CHECK_THROWS_AS(space_from_json(nlohmann::json::object()), ConfigError);
  CHECK_THROWS_AS(space_from_json(nlohmann::json::array({nlohmann::json::array()})), ConfigError);
  CHECK_THROWS_AS(
      space_from_json(nlohmann::json::array({{{"name", "x"}, {"lower", 0}, {"upper", 5}}})),
      ConfigError);  // no default
  // Constraint violations surface as ConfigError, not invalid_argument.
  CHECK_THROWS_AS(space_from_json(nlohmann::json::array(
                      {{{"name", "x"}, {"lower", 5}, {"upper", 5}, {"default", 5}}})),
                  ConfigError);
}

TEST_CASE("space_by_name knows the built-in table") {
  CHECK(space_by_name("rocksdb-v6.17-table1").dimension() == 10);
  CHECK_THROWS_AS(space_by_name("rocksdb-v9"), ConfigError);
}

TEST_CASE("subspace picks parameters in the given order") {
  const ParamSpace space = rocksdb_space();
  const ParamSpace sub = subspace(space, {6, 0});
  REQUIRE(sub.dimension() == 2);
  CHECK(sub.param(0).name == "block_size");
  CHECK(sub.param(1).name == "max_background_compactions");
  CHECK_THROWS_AS(subspace(space, {10}), std::invalid_argument);
}

TEST_CASE("configuration JSON round-trip is exact") {
  const ParamSpace space = rocksdb_space();
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    const Configuration c = sample_uniform(space, rng);
    CHECK(config_from_json(space, config_to_json(space, c)) == c);
  }
  CHECK_THROWS_AS(config_from_json(space, nlohmann::json::array()), ConfigError);
  CHECK_THROWS_AS(config_from_json(space, nlohmann::json::object()), ConfigError);
}
