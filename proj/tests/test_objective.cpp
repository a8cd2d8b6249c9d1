// The synthetic decomposable objective and the subprocess benchmark path:
// command rendering, metric extraction, and process control. Subprocess
// cases replay recorded db_bench output through cat.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "mtbo/errors.hpp"
#include "mtbo/objective.hpp"
#include "mtbo/rng.hpp"

using namespace mtbo;

namespace {

const std::string kFixtures = MTBO_TEST_DATA_DIR;

// Three single-parameter clusters over [0, 2] ranges; every optimum value
// is 1, which normalizes to exactly 0.5.
struct TriSetup {
  ParamSpace space{{{"p0", 0, 2, 0}, {"p1", 0, 2, 0}, {"p2", 0, 2, 0}}};
  TaskRegistry tasks{{{"score", Direction::maximize, true},
                      {"ta", Direction::minimize, false},
                      {"tb", Direction::minimize, false},
                      {"tc", Direction::minimize, false}}};
  SyntheticSurrogateSpec spec;

  TriSetup() {
    spec.clusters = ClusterSpec{{{{"ta"}, {"p0"}}, {{"tb"}, {"p1"}}, {{"tc"}, {"p2"}}}};
    spec.optima = {{"p0", 0.5}, {"p1", 0.5}, {"p2", 0.5}};
  }
};

ObjectiveSpec cat_spec(const std::string& file) {
  ObjectiveSpec spec;
  spec.command_template = "cat " + kFixtures + "/" + file;
  spec.append_unreferenced_params = false;
  spec.extraction = {
      {"iops", R"(([0-9.]+) ops/sec)", MetricExtraction::Source::stdout_text,
       MetricExtraction::Reducer::last},
      {"write_amplification",
       R"(Sum\s+\S+\s+\S+\s+\S+\s+(?:[0-9.]+\s+){7}([0-9.]+))",
       MetricExtraction::Source::stats_file, MetricExtraction::Reducer::last},
      {"read_block_get_p99",
       R"(rocksdb\.read\.block\.get\.micros P50 : [0-9.]+ P95 : [0-9.]+ P99 : ([0-9.]+))",
       MetricExtraction::Source::stdout_text, MetricExtraction::Reducer::last},
      {"level0_to_level1_p99",
       R"(rocksdb\.compaction\.times\.micros P50 : [0-9.]+ P95 : [0-9.]+ P99 : ([0-9.]+))",
       MetricExtraction::Source::stdout_text, MetricExtraction::Reducer::last},
  };
  spec.stats_path = kFixtures + "/db_bench_stats.txt";
  return spec;
}

}  // namespace

TEST_CASE("synthetic defaults validate and peak exactly at the optimum") {
  const ParamSpace space = rocksdb_space();
  const TaskRegistry tasks = TaskRegistry::rocksdb();
  const SyntheticSurrogateSpec spec = SyntheticSurrogateSpec::defaults();
  CHECK_NOTHROW(spec.validate(space, tasks));

  const Configuration best = synthetic_optimum_config(spec, space);
  const UnitPoint up = normalize(space, best);
  for (std::size_t d = 0; d < space.dimension(); ++d) {
    CHECK(up.coords[d] == spec.optima.at(space.param(d).name));
  }

  const auto values = synthetic_values(best, space, tasks, spec, 0);
  CHECK(values.at("iops") == 100000.0);
  CHECK(values.at("write_amplification") == 0.0);
  CHECK(values.at("read_block_get_p99") == 0.0);
  CHECK(values.at("level0_to_level1_p99") == 0.0);
}

TEST_CASE("one wrong cluster costs exactly its mean squared distance") {
  const TriSetup t;
  CHECK_NOTHROW(t.spec.validate(t.space, t.tasks));

  // p0 sits at coordinate 0 instead of 0.5: cluster loss (0.5)^2 = 0.25.
  const auto values = synthetic_values(Configuration{{0, 1, 1}}, t.space, t.tasks, t.spec, 0);
  CHECK(values.at("score") == 100000.0 * (1.0 - 0.25 / 3.0));
  CHECK(values.at("ta") == 100.0 * 0.25);
  CHECK(values.at("tb") == 0.0);
  CHECK(values.at("tc") == 0.0);
}

TEST_CASE("cluster contributions are independent of other clusters") {
  const TriSetup t;
  const auto mixed = synthetic_values(Configuration{{0, 2, 1}}, t.space, t.tasks, t.spec, 0);
  const auto alone = synthetic_values(Configuration{{0, 1, 1}}, t.space, t.tasks, t.spec, 0);
  CHECK(mixed.at("ta") == alone.at("ta"));
  const auto other = synthetic_values(Configuration{{2, 2, 1}}, t.space, t.tasks, t.spec, 0);
  CHECK(mixed.at("tb") == other.at("tb"));
}

TEST_CASE("synthetic noise is seeded and leaves adjacent tasks exact") {
  TriSetup t;
  t.spec.noise_std = 5.0;
  const Configuration c{{0, 1, 2}};
  const auto a = synthetic_values(c, t.space, t.tasks, t.spec, 42);
  const auto b = synthetic_values(c, t.space, t.tasks, t.spec, 42);
  const auto other = synthetic_values(c, t.space, t.tasks, t.spec, 43);
  CHECK(a.at("score") == b.at("score"));
  CHECK(a.at("score") != other.at("score"));
  CHECK(a.at("ta") == other.at("ta"));
  CHECK(a.at("tc") == other.at("tc"));
}

TEST_CASE("synthetic spec validation") {
  TriSetup t;
  SUBCASE("missing optimum coordinate") {
    t.spec.optima.erase("p1");
    CHECK_THROWS_AS(t.spec.validate(t.space, t.tasks), std::invalid_argument);
  }
  SUBCASE("optimum outside the unit interval") {
    t.spec.optima["p1"] = 1.5;
    CHECK_THROWS_AS(t.spec.validate(t.space, t.tasks), std::invalid_argument);
  }
  SUBCASE("negative noise") {
    t.spec.noise_std = -1.0;
    CHECK_THROWS_AS(t.spec.validate(t.space, t.tasks), std::invalid_argument);
  }
  SUBCASE("cluster errors propagate") {
    t.spec.clusters.clusters.pop_back();
    CHECK_THROWS_AS(t.spec.validate(t.space, t.tasks), std::invalid_argument);
  }
}

TEST_CASE("synthetic spec json keeps defaults for omitted fields") {
  const SyntheticSurrogateSpec parsed =
      SyntheticSurrogateSpec::from_json(nlohmann::json::parse(R"({"noise_std": 2.5})"));
  const SyntheticSurrogateSpec defaults = SyntheticSurrogateSpec::defaults();
  CHECK(parsed.noise_std == 2.5);
  CHECK(parsed.optima == defaults.optima);
  CHECK(parsed.clusters.clusters.size() == defaults.clusters.clusters.size());

  const SyntheticSurrogateSpec round = SyntheticSurrogateSpec::from_json(defaults.to_json());
  CHECK(round.optima == defaults.optima);
  CHECK(round.noise_std == defaults.noise_std);

  CHECK_THROWS_AS(SyntheticSurrogateSpec::from_json(nlohmann::json::array()), ConfigError);
}

TEST_CASE("synthetic objective wraps the value function") {
  const TriSetup t;
  const ObjectiveFn fn = make_synthetic_objective(t.space, t.tasks, t.spec);
  const Configuration c{{1, 1, 0}};
  const ObjectiveResult result = fn(c, 7);
  CHECK(result.ok);
  CHECK(result.error.empty());
  CHECK(result.values == synthetic_values(c, t.space, t.tasks, t.spec, 7));

  TriSetup bad;
  bad.spec.optima.erase("p0");
  CHECK_THROWS_AS(make_synthetic_objective(bad.space, bad.tasks, bad.spec),
                  std::invalid_argument);

  CHECK_THROWS_AS(fn(Configuration{{1, 1}}, 0), std::invalid_argument);
}

TEST_CASE("render_command substitutes placeholders and appends the rest") {
  const ParamSpace space({{"alpha", 0, 10, 3}, {"beta", 0, 20, 5}});
  ObjectiveSpec spec;
  spec.command_template = "run --alpha={alpha} --mode=fixed";

  CHECK(render_command(spec, space, Configuration{{7, 9}}) ==
        "run --alpha=7 --mode=fixed --beta=9");

  spec.append_unreferenced_params = false;
  CHECK(render_command(spec, space, Configuration{{7, 9}}) == "run --alpha=7 --mode=fixed");

  spec.command_template = "run --alpha={alpha} --beta={beta}";
  spec.append_unreferenced_params = true;
  CHECK(render_command(spec, space, Configuration{{7, 9}}) == "run --alpha=7 --beta=9");

  spec.command_template = "run --gamma={gamma}";
  CHECK_THROWS_AS(render_command(spec, space, Configuration{{7, 9}}), std::invalid_argument);
}

TEST_CASE("objective spec validation") {
  const ParamSpace space({{"alpha", 0, 10, 3}, {"beta", 0, 20, 5}});
  const TaskRegistry tasks(
      {{"score", Direction::maximize, true}, {"cost", Direction::minimize, false}});

  ObjectiveSpec good;
  good.command_template = "bench --alpha={alpha}";
  good.extraction = {
      {"score", R"(score=([0-9.]+))", MetricExtraction::Source::stdout_text,
       MetricExtraction::Reducer::last},
      {"cost", R"(cost=([0-9.]+))", MetricExtraction::Source::stdout_text,
       MetricExtraction::Reducer::last},
  };
  CHECK_NOTHROW(good.validate(space, tasks));

  SUBCASE("empty template") {
    ObjectiveSpec spec = good;
    spec.command_template.clear();
    CHECK_THROWS_AS(spec.validate(space, tasks), std::invalid_argument);
  }
  SUBCASE("non-positive timeout") {
    ObjectiveSpec spec = good;
    spec.timeout_s = 0.0;
    CHECK_THROWS_AS(spec.validate(space, tasks), std::invalid_argument);
  }
  SUBCASE("unknown placeholder") {
    ObjectiveSpec spec = good;
    spec.command_template = "bench --gamma={gamma}";
    CHECK_THROWS_AS(spec.validate(space, tasks), std::invalid_argument);
  }
  SUBCASE("placeholder repeated") {
    ObjectiveSpec spec = good;
    spec.command_template = "bench --alpha={alpha} --copy={alpha}";
    CHECK_THROWS_AS(spec.validate(space, tasks), std::invalid_argument);
  }
  SUBCASE("rule for an unknown task") {
    ObjectiveSpec spec = good;
    spec.extraction.push_back({"latency", R"(x=([0-9]+))", MetricExtraction::Source::stdout_text,
                               MetricExtraction::Reducer::last});
    CHECK_THROWS_AS(spec.validate(space, tasks), NotFoundError);
  }
  SUBCASE("two rules for one task") {
    ObjectiveSpec spec = good;
    spec.extraction.push_back(spec.extraction[0]);
    CHECK_THROWS_AS(spec.validate(space, tasks), std::invalid_argument);
  }
  SUBCASE("task without a rule") {
    ObjectiveSpec spec = good;
    spec.extraction.pop_back();
    CHECK_THROWS_AS(spec.validate(space, tasks), std::invalid_argument);
  }
  SUBCASE("pattern does not compile") {
    ObjectiveSpec spec = good;
    spec.extraction[0].pattern = "score=([0-9.+";
    CHECK_THROWS_AS(spec.validate(space, tasks), std::invalid_argument);
  }
  SUBCASE("pattern without a capture group") {
    ObjectiveSpec spec = good;
    spec.extraction[0].pattern = "score=[0-9.]+";
    CHECK_THROWS_AS(spec.validate(space, tasks), std::invalid_argument);
  }
  SUBCASE("pattern with two capture groups") {
    ObjectiveSpec spec = good;
    spec.extraction[0].pattern = R"(score=([0-9]+)\.([0-9]+))";
    CHECK_THROWS_AS(spec.validate(space, tasks), std::invalid_argument);
  }
  SUBCASE("stats-file rule without a stats path") {
    ObjectiveSpec spec = good;
    spec.extraction[1].source = MetricExtraction::Source::stats_file;
    CHECK_THROWS_AS(spec.validate(space, tasks), std::invalid_argument);
    spec.stats_path = "/tmp/stats.txt";
    CHECK_NOTHROW(spec.validate(space, tasks));
  }
}

TEST_CASE("objective spec json round-trip") {
  ObjectiveSpec spec = cat_spec("db_bench_mixgraph.txt");
  spec.working_dir = "/tmp";
  spec.timeout_s = 33.5;
  const ObjectiveSpec loaded = ObjectiveSpec::from_json(spec.to_json());
  CHECK(loaded.command_template == spec.command_template);
  CHECK(loaded.working_dir == "/tmp");
  CHECK(loaded.timeout_s == 33.5);
  CHECK(loaded.stats_path == spec.stats_path);
  CHECK(loaded.append_unreferenced_params == false);
  REQUIRE(loaded.extraction.size() == 4);
  CHECK(loaded.extraction[1].task == "write_amplification");
  CHECK(loaded.extraction[1].source == MetricExtraction::Source::stats_file);
  CHECK(loaded.extraction[1].pattern == spec.extraction[1].pattern);

  CHECK_THROWS_AS(ObjectiveSpec::from_json(nlohmann::json::object()), ConfigError);
  CHECK_THROWS_AS(ObjectiveSpec::from_json(nlohmann::json::parse(
                      R"x({"command_template":"x","extraction":[{"task":"iops","pattern":"(a)","source":"tcp"}]})x")),
                  ConfigError);
  CHECK_THROWS_AS(ObjectiveSpec::from_json(nlohmann::json::parse(
                      R"x({"command_template":"x","extraction":[{"task":"iops","pattern":"(a)","reducer":"median"}]})x")),
                  ConfigError);
}

TEST_CASE("extract_metric reducers") {
  MetricExtraction rule{"iops", R"(v=([0-9.]+))", MetricExtraction::Source::stdout_text,
                        MetricExtraction::Reducer::last};
  const std::string text = "v=3 noise v=7.5 more v=5";
  CHECK(extract_metric(rule, text) == 5.0);
  rule.reducer = MetricExtraction::Reducer::max;
  CHECK(extract_metric(rule, text) == 7.5);
  rule.reducer = MetricExtraction::Reducer::mean;
  CHECK(*extract_metric(rule, text) == doctest::Approx((3.0 + 7.5 + 5.0) / 3.0));

  CHECK_FALSE(extract_metric(rule, "nothing to see").has_value());
}

TEST_CASE("extract_metric skips matches whose capture is not numeric") {
  const MetricExtraction rule{"iops", R"(v=([a-z0-9.]+))", MetricExtraction::Source::stdout_text,
                              MetricExtraction::Reducer::last};
  CHECK(extract_metric(rule, "v=fast v=12.5 v=slow") == 12.5);
  CHECK_FALSE(extract_metric(rule, "v=fast v=slow").has_value());
}

TEST_CASE("extract_all pulls each rule from its source and names missing tasks") {
  const ObjectiveSpec spec = cat_spec("db_bench_mixgraph.txt");
  const std::string stdout_text = "before 10 ops/sec; after\n"
                                  "rocksdb.read.block.get.micros P50 : 1.0 P95 : 2.0 P99 : 3.5 P100 : 9\n"
                                  "rocksdb.compaction.times.micros P50 : 1.0 P95 : 2.0 P99 : 40.5 P100 : 99\n";
  const std::string stats_text = " Sum 1/0 2.00 GB 0.0 1.0 2.0 3.0 4.0 5.0 6.0 2.5 9.9\n";

  const ObjectiveResult ok = extract_all(spec, stdout_text, stats_text);
  CHECK(ok.ok);
  CHECK(ok.values.at("iops") == 10.0);
  CHECK(ok.values.at("write_amplification") == 2.5);
  CHECK(ok.values.at("read_block_get_p99") == 3.5);
  CHECK(ok.values.at("level0_to_level1_p99") == 40.5);

  const ObjectiveResult missing = extract_all(spec, stdout_text, "no sum row here");
  CHECK_FALSE(missing.ok);
  CHECK(missing.error.find("write_amplification") != std::string::npos);
  CHECK(missing.error.find("stats-file") != std::string::npos);
}

TEST_CASE("run_benchmark replays recorded output through cat") {
  const ParamSpace space = rocksdb_space();
  const TaskRegistry tasks = TaskRegistry::rocksdb();
  const ObjectiveSpec spec = cat_spec("db_bench_mixgraph.txt");

  const ObjectiveResult result = run_benchmark(default_config(space), spec, space, tasks);
  REQUIRE(result.ok);
  CHECK(result.values.at("iops") == 98432.0);
  CHECK(result.values.at("write_amplification") == 3.7);
  CHECK(result.values.at("read_block_get_p99") == 156.789012);
  CHECK(result.values.at("level0_to_level1_p99") == 412000.0);
  CHECK(result.wall_time_s > 0.0);
}

TEST_CASE("run_benchmark resolves relative paths against working_dir") {
  const ParamSpace space = rocksdb_space();
  const TaskRegistry tasks = TaskRegistry::rocksdb();
  ObjectiveSpec spec = cat_spec("db_bench_mixgraph.txt");
  spec.command_template = "cat db_bench_mixgraph.txt";
  spec.working_dir = kFixtures;

  const ObjectiveResult result = run_benchmark(default_config(space), spec, space, tasks);
  REQUIRE(result.ok);
  CHECK(result.values.at("iops") == 98432.0);
}

TEST_CASE("run_benchmark fails when a metric is missing and names it") {
  const ParamSpace space = rocksdb_space();
  const TaskRegistry tasks = TaskRegistry::rocksdb();
  const ObjectiveSpec spec = cat_spec("db_bench_mixgraph_missing.txt");

  const ObjectiveResult result = run_benchmark(default_config(space), spec, space, tasks);
  CHECK_FALSE(result.ok);
  CHECK(result.error.find("no match for task iops") != std::string::npos);
}

TEST_CASE("run_benchmark reports a nonzero exit status") {
  const ParamSpace space({{"alpha", 0, 10, 3}});
  const TaskRegistry tasks({{"iops", Direction::maximize, true}});
  ObjectiveSpec spec;
  spec.command_template = "cat /definitely/not/a/file";
  spec.append_unreferenced_params = false;
  spec.extraction = {{"iops", R"(([0-9.]+) ops/sec)", MetricExtraction::Source::stdout_text,
                      MetricExtraction::Reducer::last}};

  const ObjectiveResult result = run_benchmark(Configuration{{3}}, spec, space, tasks);
  CHECK_FALSE(result.ok);
  CHECK(result.error.find("exited with status 1") != std::string::npos);
}

TEST_CASE("run_benchmark enforces its timeout") {
  const ParamSpace space({{"alpha", 0, 10, 3}});
  const TaskRegistry tasks({{"iops", Direction::maximize, true}});
  ObjectiveSpec spec;
  spec.command_template = "sleep 30";
  spec.append_unreferenced_params = false;
  spec.timeout_s = 0.3;
  spec.extraction = {{"iops", R"(([0-9.]+) ops/sec)", MetricExtraction::Source::stdout_text,
                      MetricExtraction::Reducer::last}};

  const ObjectiveResult result = run_benchmark(Configuration{{3}}, spec, space, tasks);
  CHECK_FALSE(result.ok);
  CHECK(result.error.find("timed out") != std::string::npos);
  CHECK(result.wall_time_s < 5.0);
}

TEST_CASE("run_benchmark reports an unreadable stats file") {
  const ParamSpace space({{"alpha", 0, 10, 3}});
  const TaskRegistry tasks({{"iops", Direction::maximize, true}});
  ObjectiveSpec spec;
  spec.command_template = "echo 5 ops/sec";
  spec.append_unreferenced_params = false;
  spec.stats_path = "/definitely/not/stats.txt";
  spec.extraction = {{"iops", R"(([0-9.]+) ops/sec)", MetricExtraction::Source::stats_file,
                      MetricExtraction::Reducer::last}};

  const ObjectiveResult result = run_benchmark(Configuration{{3}}, spec, space, tasks);
  CHECK_FALSE(result.ok);
  CHECK(result.error.find("stats file unreadable") != std::string::npos);
}

TEST_CASE("benchmark objective function validates up front and then runs") {
  const ParamSpace space = rocksdb_space();
  const TaskRegistry tasks = TaskRegistry::rocksdb();
  const ObjectiveFn fn = make_benchmark_objective(cat_spec("db_bench_mixgraph.txt"), space, tasks);
  const ObjectiveResult result = fn(default_config(space), 0);
  CHECK(result.ok);
  CHECK(result.values.at("iops") == 98432.0);

  ObjectiveSpec bad = cat_spec("db_bench_mixgraph.txt");
  bad.extraction.pop_back();
  CHECK_THROWS_AS(make_benchmark_objective(bad, space, tasks), std::invalid_argument);
}
