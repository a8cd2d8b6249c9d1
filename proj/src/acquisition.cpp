#include "mtbo/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "mtbo/errors.hpp"
#include "mtbo/rng.hpp"

namespace mtbo {
namespace {

constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

double score_one(const GPModel& model, const ParamSpace& space, const Configuration& config,
                 int task, double best, double xi) {
  return expected_improvement(model.posterior(normalize(space, config), task), best, xi);
}

std::vector<Configuration> enumerate_space(const ParamSpace& space) {
  std::vector<Configuration> all;
  Configuration current;
  current.values.reserve(space.dimension());
  for (const auto& p : space.params()) current.values.push_back(p.lower);
  while (true) {
    all.push_back(current);
    std::size_t d = space.dimension();
    while (d > 0) {
      auto& v = current.values[d - 1];
      if (v < space.param(d - 1).upper) {
        ++v;
        break;
      }
      v = space.param(d - 1).lower;
      --d;
    }
    if (d == 0) break;
  }
  return all;
}

// Clamped single-coordinate moves around `config`, dimension-major, +-1
// step before +-1%-of-range step. Moves that collapse onto the current
// value are dropped.
std::vector<Configuration> neighbor_moves(const ParamSpace& space, const Configuration& config) {
  std::vector<Configuration> moves;
  for (std::size_t d = 0; d < space.dimension(); ++d) {
    const auto& p = space.param(d);
    const Value pct = std::max<Value>(1, p.range_width() / 100);
    std::vector<Value> offsets{1, -1};
    if (pct > 1) {
      offsets.push_back(pct);
      offsets.push_back(-pct);
    }
    for (Value off : offsets) {
      const Value moved = std::clamp<Value>(config.values[d] + off, p.lower, p.upper);
      if (moved == config.values[d]) continue;
      Configuration next = config;
      next.values[d] = moved;
      moves.push_back(std::move(next));
    }
  }
  return moves;
}

struct ScoredPool {
  std::vector<Configuration> configs;
  std::vector<double> values;

  void add(Configuration config, double value) {
    configs.push_back(std::move(config));
    values.push_back(value);
  }
};

Proposal pick_winner(const ScoredPool& pool, const std::vector<Configuration>* evaluated) {
  std::set<std::vector<Value>> seen;
  if (evaluated) {
    for (const auto& c : *evaluated) seen.insert(c.values);
  }
  std::ptrdiff_t best_any = -1, best_distinct = -1;
  for (std::size_t i = 0; i < pool.configs.size(); ++i) {
    const auto idx = static_cast<std::ptrdiff_t>(i);
    if (best_any < 0 || pool.values[i] > pool.values[static_cast<std::size_t>(best_any)]) {
      best_any = idx;
    }
    if (!seen.count(pool.configs[i].values) &&
        (best_distinct < 0 || pool.values[i] > pool.values[static_cast<std::size_t>(best_distinct)])) {
      best_distinct = idx;
    }
  }
  const auto pick = static_cast<std::size_t>(best_distinct >= 0 ? best_distinct : best_any);
  return {pool.configs[pick], pool.values[pick]};
}

}  // namespace

void AcquisitionSpec::validate() const {
  if (jitter < 0.0) throw std::invalid_argument("acquisition: jitter must be non-negative");
  if (n_candidates < 1) throw std::invalid_argument("acquisition: n_candidates must be positive");
  if (n_neighbor_refinements < 0) {
    throw std::invalid_argument("acquisition: n_neighbor_refinements must be non-negative");
  }
}

AcquisitionSpec AcquisitionSpec::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("acquisition: expected an object");
  AcquisitionSpec spec;
  try {
    spec.jitter = doc.value("jitter", spec.jitter);
    spec.n_candidates = doc.value("n_candidates", spec.n_candidates);
    spec.n_neighbor_refinements = doc.value("n_neighbor_refinements", spec.n_neighbor_refinements);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("acquisition: ") + e.what());
  }
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return spec;
}

nlohmann::json AcquisitionSpec::to_json() const {
  return {{"jitter", jitter},
          {"n_candidates", n_candidates},
          {"n_neighbor_refinements", n_neighbor_refinements}};
}

double expected_improvement(const PosteriorGaussian& post, double best, double xi) {
  const double sigma = std::sqrt(std::max(0.0, post.variance));
  const double delta = post.mean - best - xi;
  if (sigma == 0.0) return std::max(0.0, delta);
  const double z = delta / sigma;
  const double cdf = 0.5 * std::erfc(-z * kInvSqrt2);
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * z * z);
  return std::max(0.0, delta * cdf + sigma * pdf);
}

std::vector<double> score_candidates_serial(const GPModel& model, const ParamSpace& space,
                                            const std::vector<Configuration>& configs, int task,
                                            double best, double xi) {
  std::vector<double> out(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    out[i] = score_one(model, space, configs[i], task, best, xi);
  }
  return out;
}

std::vector<double> score_candidates(const GPModel& model, const ParamSpace& space,
                                     const std::vector<Configuration>& configs, int task,
                                     double best, double xi) {
  if (!parallel_enabled()) return score_candidates_serial(model, space, configs, task, best, xi);
  std::vector<double> out(configs.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < configs.size(); ++i) {
    out[i] = score_one(model, space, configs[i], task, best, xi);
  }
  return out;
}

Proposal propose(const GPModel& model, const ParamSpace& space, double incumbent_best,
                 const AcquisitionSpec& spec, std::uint64_t seed, int task,
                 const std::vector<Configuration>* evaluated) {
  spec.validate();

  const auto total = space.total_configurations();
  const bool exhaustive = total && *total <= static_cast<std::uint64_t>(spec.n_candidates);

  ScoredPool pool;
  if (exhaustive) {
    auto configs = enumerate_space(space);
    auto values = score_candidates(model, space, configs, task, incumbent_best, spec.jitter);
    pool.configs = std::move(configs);
    pool.values = std::move(values);
    return pick_winner(pool, evaluated);
  }

  Rng rng(seed);
  std::vector<Configuration> configs;
  configs.reserve(static_cast<std::size_t>(spec.n_candidates));
  for (int i = 0; i < spec.n_candidates; ++i) configs.push_back(sample_uniform(space, rng));
  auto values = score_candidates(model, space, configs, task, incumbent_best, spec.jitter);

  std::size_t best_idx = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best_idx]) best_idx = i;
  }
  pool.configs = std::move(configs);
  pool.values = std::move(values);

  Configuration current = pool.configs[best_idx];
  double current_value = pool.values[best_idx];
  int budget = spec.n_neighbor_refinements;
  bool improved = true;
  while (budget > 0 && improved) {
    improved = false;
    for (const auto& neighbor : neighbor_moves(space, current)) {
      if (budget == 0) break;
      const double value = score_one(model, space, neighbor, task, incumbent_best, spec.jitter);
      budget -= 1;
      pool.add(neighbor, value);
      if (value > current_value) {
        current = neighbor;
        current_value = value;
        improved = true;
        break;
      }
    }
  }
  return pick_winner(pool, evaluated);
}

Proposal propose_clustered(const std::vector<ClusterModel>& models, const ParamSpace& space,
                           double incumbent_best, const AcquisitionSpec& spec,
                           std::uint64_t seed, const std::vector<Configuration>* evaluated) {
  if (models.empty()) throw std::invalid_argument("propose_clustered: no cluster models");
  std::vector<int> covered(space.dimension(), 0);
  for (const auto& m : models) {
    for (std::size_t idx : m.param_indices) {
      if (idx >= space.dimension()) {
        throw std::invalid_argument("propose_clustered: cluster parameter index out of range");
      }
      covered[idx] += 1;
    }
  }
  for (std::size_t d = 0; d < space.dimension(); ++d) {
    if (covered[d] != 1) {
      throw std::invalid_argument("propose_clustered: clusters must cover the space disjointly");
    }
  }

  auto sub_seed = [&](std::size_t c) {
    return mix_seed({seed, static_cast<std::uint64_t>(c), 0xac01u});
  };
  auto assemble = [&](const std::vector<Proposal>& parts) {
    Proposal full;
    full.config.values.resize(space.dimension());
    for (std::size_t c = 0; c < models.size(); ++c) {
      const auto& m = models[c];
      for (std::size_t d = 0; d < m.param_indices.size(); ++d) {
        full.config.values[m.param_indices[d]] = parts[c].config.values[d];
      }
      full.acquisition_value += parts[c].acquisition_value;
    }
    return full;
  };

  std::vector<Proposal> parts;
  parts.reserve(models.size());
  for (std::size_t c = 0; c < models.size(); ++c) {
    const auto& m = models[c];
    parts.push_back(propose(m.model, m.space, incumbent_best, spec, sub_seed(c), m.primary_head));
  }
  Proposal full = assemble(parts);

  // Duplicate replacement: try swapping one cluster's winner for that
  // cluster's next-best distinct sub-config, keeping the substitution with
  // the highest total value. A single pass targets the duplicated config;
  // if no cluster has a distinct alternative the duplicate stands.
  if (evaluated) {
    const bool duplicate = std::any_of(evaluated->begin(), evaluated->end(),
                                       [&](const Configuration& c) { return c == full.config; });
    if (duplicate) {
      std::ptrdiff_t best_cluster = -1;
      Proposal best_alt;
      double best_total = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < models.size(); ++c) {
        const auto& m = models[c];
        std::vector<Configuration> taken{parts[c].config};
        Proposal alt = propose(m.model, m.space, incumbent_best, spec, sub_seed(c),
                               m.primary_head, &taken);
        if (alt.config == parts[c].config) continue;
        const double total = full.acquisition_value - parts[c].acquisition_value +
                             alt.acquisition_value;
        if (total > best_total) {
          best_total = total;
          best_cluster = static_cast<std::ptrdiff_t>(c);
          best_alt = std::move(alt);
        }
      }
      if (best_cluster >= 0) {
        parts[static_cast<std::size_t>(best_cluster)] = std::move(best_alt);
        full = assemble(parts);
      }
    }
  }
  return full;
}

}  // namespace mtbo
