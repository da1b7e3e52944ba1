#pragma once

#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "icl/attention.hpp"
#include "icl/error.hpp"
#include "icl/linalg.hpp"
#include "icl/rng.hpp"
#include "icl/sampling.hpp"
#include "icl/tasks.hpp"

namespace icl {

struct AdamHyper {
  double lr = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 1.0;  // learning rate after t steps is lr * decay^t
};

struct AdamState {
  Matrix params;
  Matrix m;
  Matrix v;
  std::size_t t = 0;
  AdamHyper hyper;

  static AdamState init(Matrix params, AdamHyper hyper);
  // Learning rate the next step will use.
  double current_lr() const;
};

// Bias-corrected Adam with exponential learning-rate decay.
void adam_update(AdamState& state, const Matrix& grad);
AdamState adam_step(AdamState state, const Matrix& grad);

struct TrainConfig {
  TaskClass task_class;
  CovariateDist covariates;
  std::size_t n = 20;
  std::size_t queries = 0;  // 0 means floor(sqrt(n))
  double sigma = 0.01;
  EstimatorKind estimator = EstimatorKind::Softmax;
  bool tied = true;
  AdamHyper adam;
  std::size_t iterations = 3000;
  std::size_t eval_every = 100;
  std::size_t eval_tasks = 500;
  double init_scale = 0.001;    // A_0 = init_scale I (tied); M_0 = init_scale^2 I (direct)
  std::optional<Matrix> subspace;  // B; enables rho(M, B) in the trace
};

struct Checkpoint {
  std::size_t iteration = 0;
  double norm_m = 0.0;
  double test_error = 0.0;
  double rho = std::numeric_limits<double>::quiet_NaN();  // NaN when no subspace is configured
  double train_loss = std::numeric_limits<double>::quiet_NaN();  // running mean since the previous checkpoint
};

struct TrainTrace {
  std::vector<Checkpoint> checkpoints;
  AttentionParams final_params = AttentionParams::direct(Matrix());

  const Checkpoint& last() const { return checkpoints.back(); }
};

class NonFiniteLossError : public Error {
 public:
  NonFiniteLossError(const std::string& what, TrainTrace partial)
      : Error(ErrorKind::NonFiniteLoss, what), partial_(std::move(partial)) {}
  const TrainTrace& partial_trace() const noexcept { return partial_; }

 private:
  TrainTrace partial_;
};

// One task per round: draw task and context, take the gradient of the
// per-context loss, Adam step. Round r uses rng.derive(0).derive(r); the
// evaluation pool (shared by every checkpoint) comes from rng.derive(1).
TrainTrace pretrain(const TrainConfig& config, const RngStream& rng);

AttentionParams initial_params(const TrainConfig& config);

// Mean context loss over num_tasks fresh tasks, floor(sqrt(n)) queries each.
double evaluate_icl(const AttentionParams& params, const TaskClass& task_class, const CovariateDist& dist,
                    std::size_t n, double sigma, std::size_t num_tasks, const RngStream& rng);

inline constexpr double kRhoSingular = 1e-12;

// |B_perp^T M B_perp|_2 / sigma_min(B^T M B); +infinity when the denominator
// is at most kRhoSingular.
double subspace_error(const Matrix& m, const Matrix& basis);
double subspace_error(const Matrix& m, const Matrix& basis, const Matrix& complement);

}  // namespace icl
