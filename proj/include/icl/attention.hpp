#pragma once

// One-layer single-head attention used as an in-context regressor. The value
// path is fixed, so a prediction is a weighted average of the context labels
// whose weights come from the logits x_i^T M q.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <variant>

#include "icl/linalg.hpp"
#include "icl/rng.hpp"
#include "icl/sampling.hpp"
#include "icl/tasks.hpp"

namespace icl {

enum class EstimatorKind { Softmax, Linear, Window };

const char* to_string(EstimatorKind kind);

struct DirectM {
  Matrix m;
};

// M := A^T A, so M is symmetric PSD by construction.
struct TiedFactor {
  Matrix a;
};

struct AttentionParams {
  std::variant<DirectM, TiedFactor> mode;
  EstimatorKind estimator = EstimatorKind::Softmax;
  double window_wkq = 1.0;  // Window only; must be > 0

  static AttentionParams direct(Matrix m, EstimatorKind estimator = EstimatorKind::Softmax);
  static AttentionParams tied(Matrix a, EstimatorKind estimator = EstimatorKind::Softmax);
  static AttentionParams window(double wkq);

  bool is_tied() const noexcept { return std::holds_alternative<TiedFactor>(mode); }
  // The trainable matrix: M in direct mode, A in tied mode.
  const Matrix& trainable() const;
  Matrix& trainable();
  // The effective key-query matrix M.
  Matrix key_query() const;
};

inline constexpr double kLogitClip = 700.0;

// Counters for the two places where an estimator silently changes behaviour.
struct AttentionDiagnostics {
  std::size_t logit_clips = 0;
  std::size_t empty_windows = 0;
};

// Max-subtracted softmax of raw logits; logits outside +-kLogitClip are clipped
// and counted.
Vector softmax_of_logits(std::span<const double> logits, AttentionDiagnostics* diag = nullptr);

Vector softmax_weights(const Matrix& m, const Matrix& x, std::span<const double> q,
                       AttentionDiagnostics* diag = nullptr);
double predict_softmax(const Matrix& m, const Matrix& x, std::span<const double> y, std::span<const double> q,
                       AttentionDiagnostics* diag = nullptr);
double predict_linear(const Matrix& m, const Matrix& x, std::span<const double> y, std::span<const double> q);

struct WindowPrediction {
  double value = 0.0;
  std::size_t count = 0;  // tokens inside the window
  bool fallback = false;  // window empty: value is the nearest token's label
};

// Uniform average over tokens with |x_i - q| < 1/sqrt(wkq).
WindowPrediction predict_window(double wkq, const Matrix& x, std::span<const double> y, std::span<const double> q,
                                AttentionDiagnostics* diag = nullptr);

// Mean over the batch queries of (prediction - clean target)^2.
double context_sq_loss(const AttentionParams& params, const ContextBatch& batch,
                       AttentionDiagnostics* diag = nullptr);

// Gradients of context_sq_loss with respect to M (direct) or A (tied),
// averaged over the batch queries.
Matrix grad_context_softmax(const Matrix& m, const ContextBatch& batch);
Matrix grad_context_linear(const Matrix& m, const ContextBatch& batch);
Matrix grad_context_tied(const Matrix& a, const ContextBatch& batch,
                         EstimatorKind estimator = EstimatorKind::Softmax);

struct LossAndGrad {
  double loss = 0.0;
  Matrix grad;  // with respect to params.trainable()
};

// Single pass over the batch producing the loss and the gradient.
LossAndGrad loss_and_grad(const AttentionParams& params, const ContextBatch& batch);

// Central differences, entrywise. Test oracle only.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& loss_fn, const Matrix& p, double step);

struct LossEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t num_contexts = 0;
  std::optional<double> bias_part;
  std::optional<double> noise_part;
};

struct LossDecomposition {
  double bias = 0.0;
  double bias_std_error = 0.0;
  double noise = 0.0;
  double noise_std_error = 0.0;
  std::size_t num_contexts = 0;
};

// Bias and expected-noise parts of one context's softmax loss: the clean-label
// estimator error and sigma^2 * sum_i s_i^2, each averaged over queries.
struct ContextDecomposition {
  double bias = 0.0;
  double noise = 0.0;
};
ContextDecomposition decompose_context(const Matrix& m, const ContextBatch& batch, double sigma);

// Monte Carlo population loss over fresh iid contexts; context c draws its task
// and tokens from rng.derive(c).
LossEstimate mc_loss(const AttentionParams& params, const TaskClass& task_class, const CovariateDist& dist,
                     std::size_t n, std::size_t m, double sigma, std::size_t num_contexts, const RngStream& rng);

// Same contexts as mc_loss for the same rng; softmax estimator only.
LossDecomposition mc_loss_decomposed(const AttentionParams& params, const TaskClass& task_class,
                                     const CovariateDist& dist, std::size_t n, std::size_t m, double sigma,
                                     std::size_t num_contexts, const RngStream& rng);

// Mean and standard error of a sample (standard error 0 for fewer than 2 values).
LossEstimate summarize(std::span<const double> values);

}  // namespace icl
