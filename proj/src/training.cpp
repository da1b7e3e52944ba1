#include "icl/training.hpp"

#include <cmath>
#include <string>

#include "icl/kernels.hpp"

namespace icl {

AdamState AdamState::init(Matrix params, AdamHyper hyper) {
  AdamState s;
  s.m = Matrix(params.rows(), params.cols());
  s.v = Matrix(params.rows(), params.cols());
  s.params = std::move(params);
  s.hyper = hyper;
  return s;
}

double AdamState::current_lr() const { return hyper.lr * std::pow(hyper.decay, static_cast<double>(t)); }

void adam_update(AdamState& state, const Matrix& grad) {
  if (grad.rows() != state.params.rows() || grad.cols() != state.params.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "adam: gradient shape does not match parameters");
  }
  const double lr = state.current_lr();
  state.t += 1;
  const auto& h = state.hyper;
  const double correct1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double correct2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  auto p = state.params.data();
  auto m = state.m.data();
  auto v = state.v.data();
  const auto g = grad.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
    const double m_hat = m[i] / correct1;
    const double v_hat = v[i] / correct2;
    p[i] -= lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

AdamState adam_step(AdamState state, const Matrix& grad) {
  adam_update(state, grad);
  return state;
}

AttentionParams initial_params(const TrainConfig& config) {
  const std::size_t d = config.covariates.dim();
  if (config.tied) return AttentionParams::tied(config.init_scale * Matrix::identity(d), config.estimator);
  return AttentionParams::direct(config.init_scale * config.init_scale * Matrix::identity(d), config.estimator);
}

namespace {

double pool_mean(const AttentionParams& params, const std::vector<ContextBatch>& pool) {
  const Vector losses = kernels::context_losses(params, pool);
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

void validate(const TrainConfig& c) {
  if (c.n < 1) throw Error(ErrorKind::DegenerateInput, "pretrain: n must be >= 1");
  if (c.sigma < 0.0) throw Error(ErrorKind::DegenerateInput, "pretrain: sigma must be >= 0");
  if (c.eval_every < 1) throw Error(ErrorKind::DegenerateInput, "pretrain: eval_every must be >= 1");
  if (c.eval_tasks < 1) throw Error(ErrorKind::DegenerateInput, "pretrain: eval_tasks must be >= 1");
  if (c.estimator == EstimatorKind::Window) {
    throw Error(ErrorKind::PreconditionViolated, "pretrain: the window estimator is not trainable");
  }
}

}  // namespace

TrainTrace pretrain(const TrainConfig& config, const RngStream& rng) {
  validate(config);
  const std::size_t queries = config.queries == 0 ? default_queries(config.n) : config.queries;
  const RngStream train_stream = rng.derive(0);
  const auto eval_pool = kernels::make_context_pool(config.task_class, config.covariates, config.n,
                                                    default_queries(config.n), config.sigma, config.eval_tasks,
                                                    rng.derive(1));
  std::optional<Matrix> complement;
  if (config.subspace) complement = orthonormal_complement(*config.subspace);

  AttentionParams params = initial_params(config);
  AdamState adam = AdamState::init(params.trainable(), config.adam);

  TrainTrace trace;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  auto record = [&](std::size_t iteration) {
    params.trainable() = adam.params;
    const Matrix kq = params.key_query();
    Checkpoint cp;
    cp.iteration = iteration;
    cp.norm_m = spectral_norm(kq);
    cp.test_error = pool_mean(params, eval_pool);
    if (config.subspace) cp.rho = subspace_error(kq, *config.subspace, *complement);
    if (loss_count > 0) cp.train_loss = loss_sum / static_cast<double>(loss_count);
    trace.checkpoints.push_back(cp);
    loss_sum = 0.0;
    loss_count = 0;
  };
  record(0);

  const std::size_t d = config.covariates.dim();
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    RngStream round = train_stream.derive(it);
    const TaskSpec task = draw_task(config.task_class, d, round);
    const ContextBatch batch = make_context(task, config.covariates, config.n, queries, config.sigma, round);
    params.trainable() = adam.params;
    const LossAndGrad lg = loss_and_grad(params, batch);
    if (!std::isfinite(lg.loss) || !lg.grad.all_finite()) {
      trace.final_params = params;
      throw NonFiniteLossError("pretrain: non-finite loss or gradient at iteration " + std::to_string(it), trace);
    }
    loss_sum += lg.loss;
    ++loss_count;
    adam_update(adam, lg.grad);
    if (it % config.eval_every == 0 || it == config.iterations) record(it);
  }
  params.trainable() = adam.params;
  trace.final_params = params;
  return trace;
}

double evaluate_icl(const AttentionParams& params, const TaskClass& task_class, const CovariateDist& dist,
                    std::size_t n, double sigma, std::size_t num_tasks, const RngStream& rng) {
  if (num_tasks < 1) throw Error(ErrorKind::DegenerateInput, "evaluate_icl: num_tasks must be >= 1");
  const auto pool = kernels::make_context_pool(task_class, dist, n, default_queries(n), sigma, num_tasks, rng);
  return pool_mean(params, pool);
}

double subspace_error(const Matrix& m, const Matrix& basis) {
  return subspace_error(m, basis, orthonormal_complement(basis));
}

double subspace_error(const Matrix& m, const Matrix& basis, const Matrix& complement) {
  const Matrix inner = basis.transpose() * m * basis;
  const double denom = min_singular_value(inner);
  if (!(denom > kRhoSingular)) return std::numeric_limits<double>::infinity();
  const Matrix outer_block = complement.transpose() * m * complement;
  return spectral_norm(outer_block) / denom;
}

}  // namespace icl
