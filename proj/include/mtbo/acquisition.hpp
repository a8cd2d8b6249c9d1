#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "mtbo/gp.hpp"
#include "mtbo/multitask.hpp"
#include "mtbo/param_space.hpp"

namespace mtbo {

struct AcquisitionSpec {
  double jitter = 0.0;  // the xi offset inside EI
  int n_candidates = 2048;
  int n_neighbor_refinements = 64;

  void validate() const;
  static AcquisitionSpec from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct Proposal {
  Configuration config;
  double acquisition_value = 0.0;
};

// Closed-form EI for maximization over standardized targets:
// (mu - f* - xi) Phi(z) + sigma phi(z); max(0, mu - f* - xi) when sigma = 0.
double expected_improvement(const PosteriorGaussian& post, double best, double xi);

// EI of each configuration under the model's `task` head. The two variants
// are bit-identical; the parallel one honors set_parallel_enabled().
std::vector<double> score_candidates(const GPModel& model, const ParamSpace& space,
                                     const std::vector<Configuration>& configs, int task,
                                     double best, double xi);
std::vector<double> score_candidates_serial(const GPModel& model, const ParamSpace& space,
                                            const std::vector<Configuration>& configs, int task,
                                            double best, double xi);

// Candidate search over the discrete space, scored by EI of the model's
// `task` head. Spaces no larger than n_candidates are enumerated
// exhaustively in lexicographic order (first parameter most significant),
// making the result the exact EI argmax; otherwise n_candidates seeded
// uniform draws are refined by ordinal neighbor steps (single-coordinate
// +-1 and +-1%-of-range moves, first strict improvement restarts the walk,
// each scored neighbor spends one unit of n_neighbor_refinements).
// Ties break toward generation order. When `evaluated` is given, a winning
// config already present there is replaced by the next-best distinct one;
// if every scored config is a duplicate the winner stands.
Proposal propose(const GPModel& model, const ParamSpace& space, double incumbent_best,
                 const AcquisitionSpec& spec, std::uint64_t seed, int task = 0,
                 const std::vector<Configuration>* evaluated = nullptr);

// Runs the propose search inside every cluster's sub-space against that
// cluster's primary head and concatenates the per-cluster winners.
// acquisition_value is the sum of per-cluster EI values (reporting only).
Proposal propose_clustered(const std::vector<ClusterModel>& models, const ParamSpace& space,
                           double incumbent_best, const AcquisitionSpec& spec,
                           std::uint64_t seed,
                           const std::vector<Configuration>* evaluated = nullptr);

}  // namespace mtbo
