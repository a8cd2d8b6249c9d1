#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "mtbo/kernel.hpp"
#include "mtbo/param_space.hpp"

namespace mtbo {

// Stacked training rows: unit-cube inputs, one task id per row (all zero
// for single-task models), and targets.
struct TrainingSet {
  RowMatrix x;
  std::vector<int> task_ids;
  Eigen::VectorXd y;

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }
};

struct PosteriorGaussian {
  double mean = 0.0;
  double variance = 0.0;  // clamped at zero after the numerical subtraction
};

// Hyperparameter search settings: multi-start coordinate-wise golden-section
// ascent on the log marginal likelihood. Deterministic under a fixed seed;
// starts may run in parallel (selection is by value, ties to the lowest
// start index, so the result does not depend on thread count).
struct FitOptions {
  int starts = 8;
  int evals_per_start = 200;
  std::uint64_t seed = 0;
  bool parallel = true;
};

// Start-0 initialization for the search; also the reference point for the
// "fit never ends below its initial likelihood" guarantee.
KernelParams canonical_kernel_init(std::size_t dim);
TaskKernel canonical_task_init(int num_tasks);

// Exact GP regression state: fitted hyperparameters, Cholesky factor of
// K + (noise + jitter) I, and the solved weight vector. Immutable once
// built; posterior queries are const and safe to run concurrently.
class GPModel {
 public:
  // Maximizes the log marginal likelihood over log-hyperparameters (plus
  // the task-kernel entries when num_tasks > 1), then factorizes.
  static GPModel fit(TrainingSet data, int num_tasks, const FitOptions& options = {});

  // Factorizes at fixed hyperparameters. Throws NumericalError if the
  // covariance stays non-positive-definite through jitter escalation
  // (1e-8, 1e-6, 1e-4).
  static GPModel fit_with_params(TrainingSet data, KernelParams params,
                                 std::optional<TaskKernel> tasks, double mean);

  PosteriorGaussian posterior(std::span<const double> x, int task = 0) const;
  PosteriorGaussian posterior(const UnitPoint& x, int task = 0) const;

  double log_marginal_likelihood() const { return lml_; }

  const TrainingSet& data() const { return data_; }
  const KernelParams& kernel() const { return params_; }
  const std::optional<TaskKernel>& task_kernel() const { return tasks_; }
  double mean() const { return mean_; }
  double jitter() const { return jitter_; }
  int num_tasks() const { return num_tasks_; }
  const Eigen::MatrixXd& cholesky_factor() const { return chol_; }
  const Eigen::VectorXd& alpha() const { return alpha_; }

  // Hyperparameters, mean, and training data only. The Cholesky factor is
  // recomputed on load, never serialized.
  nlohmann::json to_json() const;
  static GPModel from_json(const nlohmann::json& doc);

 private:
  GPModel() = default;

  TrainingSet data_;
  int num_tasks_ = 1;
  KernelParams params_;
  std::optional<TaskKernel> tasks_;
  double mean_ = 0.0;
  double jitter_ = 0.0;
  Eigen::MatrixXd chol_;   // lower triangular
  Eigen::VectorXd alpha_;  // (K + noise I)^-1 (y - mean)
  double lml_ = 0.0;
};

}  // namespace mtbo
