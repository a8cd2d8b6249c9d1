#include "mtbo/kernel.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mtbo {

namespace {
std::atomic<bool> g_parallel_enabled{true};
}

void set_parallel_enabled(bool enabled) { g_parallel_enabled.store(enabled); }
bool parallel_enabled() { return g_parallel_enabled.load(); }

void KernelParams::validate(std::size_t dim) const {
  if (lengthscales.size() != dim) {
    throw std::invalid_argument("kernel has " + std::to_string(lengthscales.size()) +
                                " lengthscales for dimension " + std::to_string(dim));
  }
  for (double l : lengthscales) {
    if (!(l > 0.0)) throw std::invalid_argument("lengthscales must be positive");
  }
  if (!(signal_variance > 0.0)) throw std::invalid_argument("signal variance must be positive");
  if (noise_variance < 0.0) throw std::invalid_argument("noise variance must be non-negative");
}

TaskKernel::TaskKernel(Eigen::MatrixXd factor, Eigen::VectorXd diag)
    : factor_(std::move(factor)), diag_(std::move(diag)) {
  if (factor_.rows() != diag_.size()) {
    throw std::invalid_argument("task kernel factor rows must match diag length");
  }
  if (diag_.size() == 0) throw std::invalid_argument("task kernel needs at least one task");
  for (Eigen::Index t = 0; t < diag_.size(); ++t) {
    if (diag_[t] < 0.0) throw std::invalid_argument("task kernel diag entries must be >= 0");
  }
  b_ = factor_ * factor_.transpose();
  b_.diagonal() += diag_;
  for (Eigen::Index t = 0; t < diag_.size(); ++t) {
    if (!(b_(t, t) > 0.0)) {
      throw std::invalid_argument("task kernel has a zero diagonal entry for task " +
                                  std::to_string(t));
    }
  }
}

TaskKernel TaskKernel::identity(int num_tasks) {
  return TaskKernel(Eigen::MatrixXd::Zero(num_tasks, num_tasks),
                    Eigen::VectorXd::Ones(num_tasks));
}

double TaskKernel::coupling(int m, int m2) const {
  if (m < 0 || m >= num_tasks() || m2 < 0 || m2 >= num_tasks()) {
    throw std::invalid_argument("task id out of range for task kernel of size " +
                                std::to_string(num_tasks()));
  }
  return b_(m, m2);
}

double base_kernel(const KernelParams& params, std::span<const double> x,
                   std::span<const double> x2) {
  if (x.size() != params.lengthscales.size() || x2.size() != params.lengthscales.size()) {
    throw std::invalid_argument("kernel input dimension mismatch");
  }
  double q = 0.0;
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double r = (x[d] - x2[d]) / params.lengthscales[d];
    q += r * r;
  }
  return params.signal_variance * std::exp(-0.5 * q);
}

double base_kernel(const KernelParams& params, const UnitPoint& x, const UnitPoint& x2) {
  return base_kernel(params, std::span<const double>(x.coords), std::span<const double>(x2.coords));
}

double icm_kernel(const KernelParams& params, const TaskKernel& tasks, const UnitPoint& x, int m,
                  const UnitPoint& x2, int m2) {
  return base_kernel(params, x, x2) * tasks.coupling(m, m2);
}

namespace {

inline double kernel_entry(const KernelParams& params, const TaskKernel* tasks,
                           const RowMatrix& x, std::span<const int> task_ids, Eigen::Index i,
                           Eigen::Index j) {
  double q = 0.0;
  for (Eigen::Index d = 0; d < x.cols(); ++d) {
    const double r = (x(i, d) - x(j, d)) / params.lengthscales[static_cast<std::size_t>(d)];
    q += r * r;
  }
  double k = params.signal_variance * std::exp(-0.5 * q);
  if (tasks != nullptr) k *= tasks->matrix()(task_ids[i], task_ids[j]);
  return k;
}

}  // namespace

Eigen::MatrixXd covariance_matrix_serial(const KernelParams& params, const TaskKernel* tasks,
                                         const RowMatrix& x, std::span<const int> task_ids) {
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = kernel_entry(params, tasks, x, task_ids, i, j);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Eigen::MatrixXd covariance_matrix(const KernelParams& params, const TaskKernel* tasks,
                                  const RowMatrix& x, std::span<const int> task_ids) {
  if (!parallel_enabled()) return covariance_matrix_serial(params, tasks, x, task_ids);
  const Eigen::Index n = x.rows();
  Eigen::MatrixXd k(n, n);
#pragma omp parallel for schedule(dynamic, 8)
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double v = kernel_entry(params, tasks, x, task_ids, i, j);
      k(i, j) = v;
      k(j, i) = v;
    }
  }
  return k;
}

Eigen::VectorXd cross_covariance(const KernelParams& params, const TaskKernel* tasks,
                                 const RowMatrix& x, std::span<const int> task_ids,
                                 std::span<const double> query, int query_task) {
  const Eigen::Index n = x.rows();
  if (static_cast<std::size_t>(x.cols()) != query.size()) {
    throw std::invalid_argument("query dimension does not match training data");
  }
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double q = 0.0;
    for (Eigen::Index d = 0; d < x.cols(); ++d) {
      const double r = (x(i, d) - query[static_cast<std::size_t>(d)]) /
                       params.lengthscales[static_cast<std::size_t>(d)];
      q += r * r;
    }
    double v = params.signal_variance * std::exp(-0.5 * q);
    if (tasks != nullptr) v *= tasks->matrix()(task_ids[i], query_task);
    k[i] = v;
  }
  return k;
}

}  // namespace mtbo
