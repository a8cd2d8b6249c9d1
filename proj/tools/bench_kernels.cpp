// Compares the OpenMP kernel paths against their serial references on a
// representative workload and checks the outputs match bit for bit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "mtbo/acquisition.hpp"
#include "mtbo/gp.hpp"
#include "mtbo/kernel.hpp"
#include "mtbo/multitask.hpp"
#include "mtbo/objective.hpp"
#include "mtbo/param_space.hpp"
#include "mtbo/rng.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

int main() {
  const mtbo::ParamSpace space = mtbo::rocksdb_space();
  const mtbo::TaskRegistry tasks = mtbo::TaskRegistry::rocksdb();
  const mtbo::SyntheticSurrogateSpec surrogate = mtbo::SyntheticSurrogateSpec::defaults();

  mtbo::Rng rng(7);
  std::vector<mtbo::TaskObservation> history;
  for (int i = 0; i < 64; ++i) {
    mtbo::Configuration config = mtbo::sample_uniform(space, rng);
    history.push_back({config, mtbo::synthetic_values(config, space, tasks, surrogate, 0)});
  }
  const mtbo::MultiTaskDataset dataset = mtbo::build_dataset(history, space, tasks);

  mtbo::KernelParams params = mtbo::canonical_kernel_init(space.dimension());
  const mtbo::TaskKernel task_kernel = mtbo::canonical_task_init(tasks.size());

  const int reps = 20;
  std::printf("covariance assembly: %ld x %ld rows, %d reps\n",
              static_cast<long>(dataset.training.size()),
              static_cast<long>(dataset.training.size()), reps);

  mtbo::set_parallel_enabled(false);
  auto start = Clock::now();
  Eigen::MatrixXd k_serial;
  for (int r = 0; r < reps; ++r) {
    k_serial = mtbo::covariance_matrix_serial(params, &task_kernel, dataset.training.x,
                                              dataset.training.task_ids);
  }
  const double t_serial = seconds_since(start);

  mtbo::set_parallel_enabled(true);
  start = Clock::now();
  Eigen::MatrixXd k_parallel;
  for (int r = 0; r < reps; ++r) {
    k_parallel = mtbo::covariance_matrix(params, &task_kernel, dataset.training.x,
                                         dataset.training.task_ids);
  }
  const double t_parallel = seconds_since(start);

  const double k_diff = (k_serial - k_parallel).cwiseAbs().maxCoeff();
  std::printf("  serial   %8.4f s\n", t_serial);
  std::printf("  openmp   %8.4f s   speedup %.2fx   max |diff| %g\n", t_parallel,
              t_serial / t_parallel, k_diff);

  const mtbo::GPModel model =
      mtbo::GPModel::fit_with_params(dataset.training, params, task_kernel, 0.0);
  std::vector<mtbo::Configuration> candidates;
  mtbo::Rng crng(11);
  for (int i = 0; i < 8192; ++i) candidates.push_back(mtbo::sample_uniform(space, crng));

  std::printf("candidate scoring: %zu candidates\n", candidates.size());
  mtbo::set_parallel_enabled(false);
  start = Clock::now();
  const auto scores_serial =
      mtbo::score_candidates_serial(model, space, candidates, tasks.primary_id(), 0.5, 0.0);
  const double s_serial = seconds_since(start);

  mtbo::set_parallel_enabled(true);
  start = Clock::now();
  const auto scores_parallel =
      mtbo::score_candidates(model, space, candidates, tasks.primary_id(), 0.5, 0.0);
  const double s_parallel = seconds_since(start);

  double s_diff = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    s_diff = std::max(s_diff, std::abs(scores_serial[i] - scores_parallel[i]));
  }
  std::printf("  serial   %8.4f s\n", s_serial);
  std::printf("  openmp   %8.4f s   speedup %.2fx   max |diff| %g\n", s_parallel,
              s_serial / s_parallel, s_diff);

  if (k_diff != 0.0 || s_diff != 0.0) {
    std::printf("FAIL: parallel and serial outputs differ\n");
    return 1;
  }
  std::printf("parallel outputs are bit-identical to the serial reference\n");
  return 0;
}
