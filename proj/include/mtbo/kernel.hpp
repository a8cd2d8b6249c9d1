#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mtbo/param_space.hpp"

namespace mtbo {

// Covariance rows are points in the unit cube; row-major so a training
// point is contiguous in memory.
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ARD squared-exponential hyperparameters plus the observation noise.
struct KernelParams {
  std::vector<double> lengthscales;  // one per input dimension, > 0
  double signal_variance = 1.0;      // > 0
  double noise_variance = 0.01;      // >= 0

  void validate(std::size_t dim) const;
};

// Task-similarity matrix B = L * L^T + diag(v). Positive semidefinite by
// construction; v keeps the diagonal strictly positive.
class TaskKernel {
 public:
  TaskKernel(Eigen::MatrixXd factor, Eigen::VectorXd diag);

  static TaskKernel identity(int num_tasks);

  int num_tasks() const { return static_cast<int>(diag_.size()); }
  int rank() const { return static_cast<int>(factor_.cols()); }
  const Eigen::MatrixXd& factor() const { return factor_; }
  const Eigen::VectorXd& diag() const { return diag_; }
  const Eigen::MatrixXd& matrix() const { return b_; }
  double coupling(int m, int m2) const;

 private:
  Eigen::MatrixXd factor_;  // T x r
  Eigen::VectorXd diag_;    // T, entries >= 0
  Eigen::MatrixXd b_;       // cached L L^T + diag(v)
};

// Squared-exponential kernel with per-dimension lengthscales:
//   k(x, x') = sv * exp(-1/2 sum_d ((x_d - x'_d) / l_d)^2)
double base_kernel(const KernelParams& params, std::span<const double> x,
                   std::span<const double> x2);
double base_kernel(const KernelParams& params, const UnitPoint& x, const UnitPoint& x2);

// ICM kernel: k((x,m), (x',m')) = k_x(x, x') * B[m][m'].
double icm_kernel(const KernelParams& params, const TaskKernel& tasks, const UnitPoint& x, int m,
                  const UnitPoint& x2, int m2);

// Training covariance K (without the noise/jitter diagonal). `tasks` may be
// null for single-task models, in which case task_ids is ignored. The
// default entry point parallelizes rows with OpenMP; the _serial variant is
// the reference kept for testing and benchmarking. Both produce bit-identical
// matrices: every entry is computed independently.
Eigen::MatrixXd covariance_matrix(const KernelParams& params, const TaskKernel* tasks,
                                  const RowMatrix& x, std::span<const int> task_ids);
Eigen::MatrixXd covariance_matrix_serial(const KernelParams& params, const TaskKernel* tasks,
                                         const RowMatrix& x, std::span<const int> task_ids);

// Cross-covariance k_* between training rows and one query point.
Eigen::VectorXd cross_covariance(const KernelParams& params, const TaskKernel* tasks,
                                 const RowMatrix& x, std::span<const int> task_ids,
                                 std::span<const double> query, int query_task);

// Process-wide switch for the OpenMP paths (kernel assembly, candidate
// scoring, multi-start fitting, per-cluster fitting). Results are identical
// either way; this exists so tests and the benchmark can pin the serial path.
void set_parallel_enabled(bool enabled);
bool parallel_enabled();

}  // namespace mtbo
