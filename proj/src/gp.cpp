#include "mtbo/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "mtbo/errors.hpp"
#include "mtbo/rng.hpp"

namespace mtbo {
namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;
constexpr double kJitterLevels[] = {1e-8, 1e-6, 1e-4};

constexpr double kLengthscaleLo = 1e-3, kLengthscaleHi = 10.0;
constexpr double kSignalLo = 1e-4, kSignalHi = 10.0;
constexpr double kNoiseLo = 1e-6, kNoiseHi = 1.0;
constexpr double kFactorLo = -3.0, kFactorHi = 3.0;
constexpr double kTaskDiagLo = 1e-6, kTaskDiagHi = 10.0;

void check_training_set(const TrainingSet& data, int num_tasks) {
  if (data.size() == 0) throw std::invalid_argument("gp: empty training set");
  if (data.x.rows() != data.y.size() ||
      data.x.rows() != static_cast<Eigen::Index>(data.task_ids.size())) {
    throw std::invalid_argument("gp: row count mismatch between x, task_ids, y");
  }
  if (num_tasks < 1) throw std::invalid_argument("gp: num_tasks must be positive");
  for (int id : data.task_ids) {
    if (id < 0 || id >= num_tasks) throw std::invalid_argument("gp: task id out of range");
  }
}

struct Factorization {
  Eigen::MatrixXd chol;
  Eigen::VectorXd alpha;
  double jitter = 0.0;
  double lml = 0.0;
};

// Attempts the Cholesky at escalating jitter levels. Returns nullopt when
// every level fails, recording what was tried.
std::optional<Factorization> try_factorize(const TrainingSet& data,
                                           const KernelParams& params,
                                           const std::optional<TaskKernel>& tasks,
                                           double mean,
                                           std::vector<double>* attempted = nullptr) {
  const Eigen::MatrixXd k =
      covariance_matrix(params, tasks ? &*tasks : nullptr, data.x, data.task_ids);
  const Eigen::Index n = k.rows();
  const Eigen::VectorXd centered = data.y.array() - mean;
  for (double jitter : kJitterLevels) {
    if (attempted) attempted->push_back(jitter);
    Eigen::MatrixXd a = k;
    a.diagonal().array() += params.noise_variance + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) continue;
    Factorization out;
    out.chol = llt.matrixL();
    out.alpha = llt.solve(centered);
    out.jitter = jitter;
    out.lml = -0.5 * centered.dot(out.alpha) -
              out.chol.diagonal().array().log().sum() -
              0.5 * static_cast<double>(n) * kLogTwoPi;
    return out;
  }
  return std::nullopt;
}

// Flat coordinate layout for the search: log-lengthscales, log signal
// variance, log noise variance, then (multi-task only) the row-major
// task factor entries in linear space and the log task diagonal.
struct HyperLayout {
  std::size_t dim = 0;
  int num_tasks = 1;

  std::size_t factor_offset() const { return dim + 2; }
  std::size_t diag_offset() const {
    return factor_offset() + static_cast<std::size_t>(num_tasks) * num_tasks;
  }
  std::size_t count() const {
    return num_tasks > 1 ? diag_offset() + num_tasks : dim + 2;
  }

  double lower(std::size_t c) const {
    if (c < dim) return std::log(kLengthscaleLo);
    if (c == dim) return std::log(kSignalLo);
    if (c == dim + 1) return std::log(kNoiseLo);
    if (c < diag_offset()) return kFactorLo;
    return std::log(kTaskDiagLo);
  }
  double upper(std::size_t c) const {
    if (c < dim) return std::log(kLengthscaleHi);
    if (c == dim) return std::log(kSignalHi);
    if (c == dim + 1) return std::log(kNoiseHi);
    if (c < diag_offset()) return kFactorHi;
    return std::log(kTaskDiagHi);
  }

  KernelParams params_at(const std::vector<double>& theta) const {
    KernelParams p;
    p.lengthscales.resize(dim);
    for (std::size_t d = 0; d < dim; ++d) p.lengthscales[d] = std::exp(theta[d]);
    p.signal_variance = std::exp(theta[dim]);
    p.noise_variance = std::exp(theta[dim + 1]);
    return p;
  }

  std::optional<TaskKernel> tasks_at(const std::vector<double>& theta) const {
    if (num_tasks <= 1) return std::nullopt;
    const int t = num_tasks;
    Eigen::MatrixXd factor(t, t);
    Eigen::VectorXd diag(t);
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < t; ++j) {
        factor(i, j) = theta[factor_offset() + static_cast<std::size_t>(i) * t + j];
      }
      diag(i) = std::exp(theta[diag_offset() + static_cast<std::size_t>(i)]);
    }
    return TaskKernel(std::move(factor), std::move(diag));
  }

  std::vector<double> canonical_start() const {
    std::vector<double> theta(count());
    for (std::size_t d = 0; d < dim; ++d) theta[d] = std::log(0.5);
    theta[dim] = std::log(1.0);
    theta[dim + 1] = std::log(0.01);
    if (num_tasks > 1) {
      const int t = num_tasks;
      for (int i = 0; i < t; ++i) {
        for (int j = 0; j < t; ++j) theta[factor_offset() + i * t + j] = i == j ? 0.5 : 0.0;
        theta[diag_offset() + i] = std::log(0.1);
      }
    }
    return theta;
  }

  std::vector<double> random_start(Rng& rng) const {
    std::vector<double> theta(count());
    for (std::size_t d = 0; d < dim; ++d) theta[d] = std::log(rng.log_uniform(0.05, 3.0));
    theta[dim] = std::log(rng.log_uniform(0.1, 5.0));
    theta[dim + 1] = std::log(rng.log_uniform(1e-3, 0.5));
    if (num_tasks > 1) {
      const int t = num_tasks;
      // Standardization sign-aligns every task, so the start portfolio leans
      // on non-negative couplings; refinement may still walk them negative.
      for (int i = 0; i < t; ++i) {
        for (int j = 0; j < t; ++j) {
          theta[factor_offset() + i * t + j] = rng.uniform(0.0, 1.0);
        }
        theta[diag_offset() + i] = std::log(rng.log_uniform(0.01, 1.0));
      }
    }
    return theta;
  }
};

struct StartResult {
  std::vector<double> theta;
  double lml = -std::numeric_limits<double>::infinity();
};

// One multi-start arm: coordinate sweeps, each coordinate refined by a short
// golden-section bracket over its full bound range. Only strict improvements
// move the iterate, so the arm's value is monotone in its eval budget.
StartResult run_start(const TrainingSet& data, const HyperLayout& layout, double mean,
                      std::vector<double> theta, int eval_budget) {
  constexpr double kGolden = 0.6180339887498949;
  constexpr int kLineEvals = 6;

  int evals = 0;
  auto value_at = [&](const std::vector<double>& t) {
    ++evals;
    auto fact = try_factorize(data, layout.params_at(t), layout.tasks_at(t), mean);
    return fact ? fact->lml : -std::numeric_limits<double>::infinity();
  };

  // Golden-section refinement in a trust interval around the current
  // iterate; the interval halves each sweep so later passes polish locally
  // instead of re-bracketing the whole bound range.
  StartResult best{theta, value_at(theta)};
  int sweep = 0;
  int stale_sweeps = 0;
  while (evals + 2 <= eval_budget) {
    bool improved_sweep = false;
    const double shrink = std::pow(0.5, sweep + 1);
    for (std::size_t c = 0; c < layout.count() && evals + 2 <= eval_budget; ++c) {
      const double radius = (layout.upper(c) - layout.lower(c)) * shrink;
      double a = std::max(layout.lower(c), best.theta[c] - radius);
      double b = std::min(layout.upper(c), best.theta[c] + radius);
      std::vector<double> probe = best.theta;
      auto line_value = [&](double v) {
        probe[c] = v;
        return value_at(probe);
      };
      double x1 = b - kGolden * (b - a), x2 = a + kGolden * (b - a);
      double f1 = line_value(x1), f2 = line_value(x2);
      double line_best_x = f1 >= f2 ? x1 : x2;
      double line_best_f = std::max(f1, f2);
      for (int i = 0; i + 2 < kLineEvals && evals < eval_budget; ++i) {
        if (f1 >= f2) {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - kGolden * (b - a);
          f1 = line_value(x1);
        } else {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + kGolden * (b - a);
          f2 = line_value(x2);
        }
        if (f1 > line_best_f) line_best_f = f1, line_best_x = x1;
        if (f2 > line_best_f) line_best_f = f2, line_best_x = x2;
      }
      if (line_best_f > best.lml) {
        best.theta[c] = line_best_x;
        best.lml = line_best_f;
        improved_sweep = true;
      }
    }
    ++sweep;
    stale_sweeps = improved_sweep ? 0 : stale_sweeps + 1;
    if (stale_sweeps >= 2) break;
  }
  return best;
}

}  // namespace

KernelParams canonical_kernel_init(std::size_t dim) {
  KernelParams p;
  p.lengthscales.assign(dim, 0.5);
  p.signal_variance = 1.0;
  p.noise_variance = 0.01;
  return p;
}

TaskKernel canonical_task_init(int num_tasks) {
  Eigen::MatrixXd factor = 0.5 * Eigen::MatrixXd::Identity(num_tasks, num_tasks);
  Eigen::VectorXd diag = Eigen::VectorXd::Constant(num_tasks, 0.1);
  return TaskKernel(std::move(factor), std::move(diag));
}

GPModel GPModel::fit_with_params(TrainingSet data, KernelParams params,
                                 std::optional<TaskKernel> tasks, double mean) {
  const int num_tasks = tasks ? tasks->num_tasks() : 1;
  check_training_set(data, num_tasks);
  params.validate(static_cast<std::size_t>(data.dim()));

  std::vector<double> attempted;
  auto fact = try_factorize(data, params, tasks, mean, &attempted);
  if (!fact) {
    throw NumericalError("gp: covariance not positive definite after jitter escalation",
                         attempted);
  }

  GPModel model;
  model.data_ = std::move(data);
  model.num_tasks_ = num_tasks;
  model.params_ = std::move(params);
  model.tasks_ = std::move(tasks);
  model.mean_ = mean;
  model.jitter_ = fact->jitter;
  model.chol_ = std::move(fact->chol);
  model.alpha_ = std::move(fact->alpha);
  model.lml_ = fact->lml;
  return model;
}

GPModel GPModel::fit(TrainingSet data, int num_tasks, const FitOptions& options) {
  check_training_set(data, num_tasks);
  if (options.starts < 1 || options.evals_per_start < 3) {
    throw std::invalid_argument("gp: fit needs at least one start and three evals");
  }

  HyperLayout layout;
  layout.dim = static_cast<std::size_t>(data.dim());
  layout.num_tasks = num_tasks;

  const double mean = data.y.mean();
  std::vector<StartResult> results(static_cast<std::size_t>(options.starts));

  const bool run_parallel = options.parallel && parallel_enabled();
#pragma omp parallel for schedule(dynamic, 1) if (run_parallel)
  for (int s = 0; s < options.starts; ++s) {
    std::vector<double> theta;
    if (s == 0) {
      theta = layout.canonical_start();
    } else {
      Rng rng(mix_seed({options.seed, static_cast<std::uint64_t>(s), 0x9f57u}));
      theta = layout.random_start(rng);
    }
    results[static_cast<std::size_t>(s)] =
        run_start(data, layout, mean, std::move(theta), options.evals_per_start);
  }

  std::size_t winner = 0;
  for (std::size_t s = 1; s < results.size(); ++s) {
    if (results[s].lml > results[winner].lml) winner = s;
  }
  if (!std::isfinite(results[winner].lml)) {
    throw NumericalError("gp: every hyperparameter start failed to factorize",
                         {kJitterLevels[0], kJitterLevels[1], kJitterLevels[2]});
  }

  const auto& theta = results[winner].theta;
  return fit_with_params(std::move(data), layout.params_at(theta), layout.tasks_at(theta),
                         mean);
}

PosteriorGaussian GPModel::posterior(std::span<const double> x, int task) const {
  if (static_cast<Eigen::Index>(x.size()) != data_.dim()) {
    throw std::invalid_argument("gp: query dimension mismatch");
  }
  if (task < 0 || task >= num_tasks_) {
    throw std::invalid_argument("gp: query task out of range");
  }
  const Eigen::VectorXd ks = cross_covariance(params_, tasks_ ? &*tasks_ : nullptr, data_.x,
                                              data_.task_ids, x, task);
  const Eigen::VectorXd w = chol_.triangularView<Eigen::Lower>().solve(ks);

  PosteriorGaussian post;
  post.mean = mean_ + ks.dot(alpha_);
  const double prior = params_.signal_variance * (tasks_ ? tasks_->coupling(task, task) : 1.0);
  post.variance = std::max(0.0, prior - w.squaredNorm());
  return post;
}

PosteriorGaussian GPModel::posterior(const UnitPoint& x, int task) const {
  return posterior(std::span<const double>(x.coords.data(), x.coords.size()), task);
}

nlohmann::json GPModel::to_json() const {
  nlohmann::json doc;
  doc["mean"] = mean_;
  doc["num_tasks"] = num_tasks_;
  doc["kernel"] = {{"lengthscales", params_.lengthscales},
                   {"signal_variance", params_.signal_variance},
                   {"noise_variance", params_.noise_variance}};
  if (tasks_) {
    std::vector<std::vector<double>> factor(static_cast<std::size_t>(num_tasks_));
    std::vector<double> diag(static_cast<std::size_t>(num_tasks_));
    for (int i = 0; i < num_tasks_; ++i) {
      auto& row = factor[static_cast<std::size_t>(i)];
      for (int j = 0; j < tasks_->rank(); ++j) row.push_back(tasks_->factor()(i, j));
      diag[static_cast<std::size_t>(i)] = tasks_->diag()(i);
    }
    doc["task_kernel"] = {{"factor", factor}, {"diag", diag}};
  } else {
    doc["task_kernel"] = nullptr;
  }

  std::vector<std::vector<double>> rows(static_cast<std::size_t>(data_.x.rows()));
  for (Eigen::Index i = 0; i < data_.x.rows(); ++i) {
    rows[static_cast<std::size_t>(i)].assign(data_.x.row(i).begin(), data_.x.row(i).end());
  }
  doc["data"] = {{"x", rows},
                 {"task_ids", data_.task_ids},
                 {"y", std::vector<double>(data_.y.begin(), data_.y.end())}};
  return doc;
}

GPModel GPModel::from_json(const nlohmann::json& doc) {
  try {
    const auto& kj = doc.at("kernel");
    KernelParams params;
    params.lengthscales = kj.at("lengthscales").get<std::vector<double>>();
    params.signal_variance = kj.at("signal_variance").get<double>();
    params.noise_variance = kj.at("noise_variance").get<double>();

    std::optional<TaskKernel> tasks;
    if (!doc.at("task_kernel").is_null()) {
      const auto& tj = doc.at("task_kernel");
      const auto factor_rows = tj.at("factor").get<std::vector<std::vector<double>>>();
      const auto diag_values = tj.at("diag").get<std::vector<double>>();
      if (factor_rows.empty()) throw ConfigError("gp model json: empty task factor");
      Eigen::MatrixXd factor(factor_rows.size(), factor_rows.front().size());
      for (std::size_t i = 0; i < factor_rows.size(); ++i) {
        if (factor_rows[i].size() != factor_rows.front().size()) {
          throw ConfigError("gp model json: ragged task factor");
        }
        for (std::size_t j = 0; j < factor_rows[i].size(); ++j) {
          factor(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = factor_rows[i][j];
        }
      }
      tasks = TaskKernel(std::move(factor),
                         Eigen::Map<const Eigen::VectorXd>(
                             diag_values.data(), static_cast<Eigen::Index>(diag_values.size())));
    }

    const auto& dj = doc.at("data");
    const auto rows = dj.at("x").get<std::vector<std::vector<double>>>();
    TrainingSet data;
    data.x.resize(static_cast<Eigen::Index>(rows.size()),
                  rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (static_cast<Eigen::Index>(rows[i].size()) != data.x.cols()) {
        throw ConfigError("gp model json: ragged x rows");
      }
      for (std::size_t j = 0; j < rows[i].size(); ++j) {
        data.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
      }
    }
    data.task_ids = dj.at("task_ids").get<std::vector<int>>();
    const auto y = dj.at("y").get<std::vector<double>>();
    data.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));

    return fit_with_params(std::move(data), std::move(params), std::move(tasks),
                           doc.at("mean").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("gp model json: ") + e.what());
  }
}

}  // namespace mtbo
