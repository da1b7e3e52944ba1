#include "icl/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "icl/error.hpp"
#include "icl/kernels.hpp"

namespace icl {

const char* to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Softmax: return "softmax";
    case EstimatorKind::Linear: return "linear";
    case EstimatorKind::Window: return "window";
  }
  return "unknown";
}

AttentionParams AttentionParams::direct(Matrix m, EstimatorKind estimator) {
  return {DirectM{std::move(m)}, estimator, 1.0};
}

AttentionParams AttentionParams::tied(Matrix a, EstimatorKind estimator) {
  return {TiedFactor{std::move(a)}, estimator, 1.0};
}

AttentionParams AttentionParams::window(double wkq) {
  if (!(wkq > 0.0)) throw Error(ErrorKind::DegenerateInput, "window estimator needs w_kq > 0");
  return {DirectM{Matrix()}, EstimatorKind::Window, wkq};
}

const Matrix& AttentionParams::trainable() const {
  return std::visit([](const auto& p) -> const Matrix& {
    if constexpr (std::is_same_v<std::decay_t<decltype(p)>, DirectM>) return p.m;
    else return p.a;
  }, mode);
}

Matrix& AttentionParams::trainable() {
  return std::visit([](auto& p) -> Matrix& {
    if constexpr (std::is_same_v<std::decay_t<decltype(p)>, DirectM>) return p.m;
    else return p.a;
  }, mode);
}

Matrix AttentionParams::key_query() const {
  if (const auto* tied = std::get_if<TiedFactor>(&mode)) return tied->a.transpose() * tied->a;
  return std::get<DirectM>(mode).m;
}

namespace {

void check_shapes(const Matrix& m, const Matrix& x, std::size_t y_size, std::size_t q_size) {
  const std::size_t d = x.cols();
  if (m.rows() != d || m.cols() != d || q_size != d || y_size != x.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "attention: inconsistent shapes");
  }
}

// In-place softmax of `logits`.
void softmax_inplace(std::span<double> logits, AttentionDiagnostics* diag) {
  double top = -std::numeric_limits<double>::infinity();
  for (double z : logits) top = std::max(top, z);
  double total = 0.0;
  for (double& z : logits) {
    double shifted = z - top;
    // Shifted logits are <= 0; clipping the far tail only touches weights
    // below exp(-700), which are zero in double precision anyway.
    if (!(shifted >= -kLogitClip)) {
      shifted = -kLogitClip;
      if (diag != nullptr) ++diag->logit_clips;
    }
    z = std::exp(shifted);
    total += z;
  }
  for (double& z : logits) z /= total;
}

}  // namespace

Vector softmax_of_logits(std::span<const double> logits, AttentionDiagnostics* diag) {
  Vector out(logits.begin(), logits.end());
  softmax_inplace(out, diag);
  return out;
}

Vector softmax_weights(const Matrix& m, const Matrix& x, std::span<const double> q, AttentionDiagnostics* diag) {
  check_shapes(m, x, x.rows(), q.size());
  const Vector mq = m * q;
  Vector logits(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) logits[i] = dot(x.row(i), mq);
  softmax_inplace(logits, diag);
  return logits;
}

double predict_softmax(const Matrix& m, const Matrix& x, std::span<const double> y, std::span<const double> q,
                       AttentionDiagnostics* diag) {
  check_shapes(m, x, y.size(), q.size());
  const Vector s = softmax_weights(m, x, q, diag);
  return dot(s, y);
}

double predict_linear(const Matrix& m, const Matrix& x, std::span<const double> y, std::span<const double> q) {
  check_shapes(m, x, y.size(), q.size());
  const Vector mq = m * q;
  double p = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) p += y[i] * dot(x.row(i), mq);
  return p;
}

WindowPrediction predict_window(double wkq, const Matrix& x, std::span<const double> y, std::span<const double> q,
                                AttentionDiagnostics* diag) {
  if (!(wkq > 0.0)) throw Error(ErrorKind::DegenerateInput, "window estimator needs w_kq > 0");
  if (y.size() != x.rows() || q.size() != x.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "attention: inconsistent shapes");
  }
  const double radius_sq = 1.0 / wkq;
  WindowPrediction out;
  double sum = 0.0;
  double nearest_dist = std::numeric_limits<double>::infinity();
  std::size_t nearest = 0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double dist_sq = 0.0;
    const auto xi = x.row(i);
    for (std::size_t k = 0; k < xi.size(); ++k) dist_sq += (xi[k] - q[k]) * (xi[k] - q[k]);
    if (dist_sq < radius_sq) {
      sum += y[i];
      ++out.count;
    }
    if (dist_sq < nearest_dist) {
      nearest_dist = dist_sq;
      nearest = i;
    }
  }
  if (out.count > 0) {
    out.value = sum / static_cast<double>(out.count);
  } else {
    out.value = y[nearest];
    out.fallback = true;
    if (diag != nullptr) ++diag->empty_windows;
  }
  return out;
}

double context_sq_loss(const AttentionParams& params, const ContextBatch& batch, AttentionDiagnostics* diag) {
  const std::size_t m = batch.m();
  double total = 0.0;
  if (params.estimator == EstimatorKind::Window) {
    for (std::size_t j = 0; j < m; ++j) {
      const double p = predict_window(params.window_wkq, batch.X, batch.y, batch.Q.row(j), diag).value;
      total += (p - batch.t[j]) * (p - batch.t[j]);
    }
    return total / static_cast<double>(m);
  }
  const Matrix kq = params.key_query();
  for (std::size_t j = 0; j < m; ++j) {
    const double p = params.estimator == EstimatorKind::Softmax
                         ? predict_softmax(kq, batch.X, batch.y, batch.Q.row(j), diag)
                         : predict_linear(kq, batch.X, batch.y, batch.Q.row(j));
    total += (p - batch.t[j]) * (p - batch.t[j]);
  }
  return total / static_cast<double>(m);
}

namespace {

// Loss and dL/dM for the given estimator at key-query matrix kq.
LossAndGrad direct_loss_and_grad(const Matrix& kq, const ContextBatch& batch, EstimatorKind estimator) {
  const std::size_t n = batch.n();
  const std::size_t m = batch.m();
  const std::size_t d = batch.d();
  if (kq.rows() != d || kq.cols() != d) throw Error(ErrorKind::DimensionMismatch, "gradient: M must be d x d");
  LossAndGrad out{0.0, Matrix(d, d)};
  Vector u(d);
  Vector logits(n);
  // Linear attention: p = (X^T y)^T M q for every query.
  Vector xty;
  if (estimator == EstimatorKind::Linear) xty = transpose_times(batch.X, batch.y);

  for (std::size_t j = 0; j < m; ++j) {
    const auto q = batch.Q.row(j);
    const Vector mq = kq * q;
    double p = 0.0;
    if (estimator == EstimatorKind::Softmax) {
      for (std::size_t i = 0; i < n; ++i) logits[i] = dot(batch.X.row(i), mq);
      softmax_inplace(logits, nullptr);
      for (std::size_t i = 0; i < n; ++i) p += logits[i] * batch.y[i];
      // u = sum_i s_i (y_i - p) x_i
      std::fill(u.begin(), u.end(), 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double coef = logits[i] * (batch.y[i] - p);
        const auto xi = batch.X.row(i);
        for (std::size_t k = 0; k < d; ++k) u[k] += coef * xi[k];
      }
    } else if (estimator == EstimatorKind::Linear) {
      p = dot(xty, mq);
      u = xty;
    } else {
      throw Error(ErrorKind::PreconditionViolated, "the window estimator has no gradient");
    }
    const double resid = p - batch.t[j];
    out.loss += resid * resid;
    const double scale = 2.0 * resid;
    for (std::size_t r = 0; r < d; ++r) {
      auto grow = out.grad.row(r);
      const double ur = scale * u[r];
      for (std::size_t c = 0; c < d; ++c) grow[c] += ur * q[c];
    }
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  out.loss *= inv_m;
  out.grad *= inv_m;
  return out;
}

// Chain rule through M = A^T A: dL/dA = A (G + G^T).
Matrix tied_chain(const Matrix& a, const Matrix& g) { return a * (g + g.transpose()); }

}  // namespace

Matrix grad_context_softmax(const Matrix& m, const ContextBatch& batch) {
  return direct_loss_and_grad(m, batch, EstimatorKind::Softmax).grad;
}

Matrix grad_context_linear(const Matrix& m, const ContextBatch& batch) {
  return direct_loss_and_grad(m, batch, EstimatorKind::Linear).grad;
}

Matrix grad_context_tied(const Matrix& a, const ContextBatch& batch, EstimatorKind estimator) {
  const Matrix g = direct_loss_and_grad(a.transpose() * a, batch, estimator).grad;
  return tied_chain(a, g);
}

LossAndGrad loss_and_grad(const AttentionParams& params, const ContextBatch& batch) {
  if (const auto* tied = std::get_if<TiedFactor>(&params.mode)) {
    LossAndGrad out = direct_loss_and_grad(tied->a.transpose() * tied->a, batch, params.estimator);
    out.grad = tied_chain(tied->a, out.grad);
    return out;
  }
  return direct_loss_and_grad(std::get<DirectM>(params.mode).m, batch, params.estimator);
}

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& loss_fn, const Matrix& p, double step) {
  if (!(step > 0.0)) throw Error(ErrorKind::DegenerateInput, "finite_diff_grad: step must be positive");
  Matrix grad(p.rows(), p.cols());
  Matrix probe = p;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    for (std::size_t c = 0; c < p.cols(); ++c) {
      const double orig = probe(r, c);
      probe(r, c) = orig + step;
      const double up = loss_fn(probe);
      probe(r, c) = orig - step;
      const double down = loss_fn(probe);
      probe(r, c) = orig;
      grad(r, c) = (up - down) / (2.0 * step);
    }
  }
  return grad;
}

ContextDecomposition decompose_context(const Matrix& m, const ContextBatch& batch, double sigma) {
  const std::size_t n = batch.n();
  Vector clean(n);
  for (std::size_t i = 0; i < n; ++i) clean[i] = evaluate_task(batch.task, batch.X.row(i));
  ContextDecomposition out;
  for (std::size_t j = 0; j < batch.m(); ++j) {
    const Vector s = softmax_weights(m, batch.X, batch.Q.row(j));
    const double p = dot(s, clean);
    out.bias += (p - batch.t[j]) * (p - batch.t[j]);
    out.noise += sigma * sigma * dot(s, s);
  }
  const double inv_m = 1.0 / static_cast<double>(batch.m());
  out.bias *= inv_m;
  out.noise *= inv_m;
  return out;
}

LossEstimate summarize(std::span<const double> values) {
  LossEstimate est;
  est.num_contexts = values.size();
  if (values.empty()) return est;
  double sum = 0.0;
  for (double v : values) sum += v;
  est.mean = sum / static_cast<double>(values.size());
  if (values.size() >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - est.mean) * (v - est.mean);
    const double var = ss / static_cast<double>(values.size() - 1);
    est.std_error = std::sqrt(var / static_cast<double>(values.size()));
  }
  return est;
}

LossEstimate mc_loss(const AttentionParams& params, const TaskClass& task_class, const CovariateDist& dist,
                     std::size_t n, std::size_t m, double sigma, std::size_t num_contexts, const RngStream& rng) {
  if (num_contexts < 2) throw Error(ErrorKind::DegenerateInput, "mc_loss: need at least 2 contexts");
  const auto pool = kernels::make_context_pool(task_class, dist, n, m, sigma, num_contexts, rng);
  const Vector losses = kernels::context_losses(params, pool);
  return summarize(losses);
}

LossDecomposition mc_loss_decomposed(const AttentionParams& params, const TaskClass& task_class,
                                     const CovariateDist& dist, std::size_t n, std::size_t m, double sigma,
                                     std::size_t num_contexts, const RngStream& rng) {
  if (params.estimator != EstimatorKind::Softmax) {
    throw Error(ErrorKind::PreconditionViolated, "mc_loss_decomposed: softmax estimator only");
  }
  if (num_contexts < 2) throw Error(ErrorKind::DegenerateInput, "mc_loss_decomposed: need at least 2 contexts");
  const auto pool = kernels::make_context_pool(task_class, dist, n, m, sigma, num_contexts, rng);
  const auto parts = kernels::context_decompositions(params.key_query(), pool, sigma);
  Vector bias(parts.size());
  Vector noise(parts.size());
  for (std::size_t c = 0; c < parts.size(); ++c) {
    bias[c] = parts[c].bias;
    noise[c] = parts[c].noise;
  }
  const LossEstimate b = summarize(bias);
  const LossEstimate v = summarize(noise);
  return {b.mean, b.std_error, v.mean, v.std_error, parts.size()};
}

}  // namespace icl
