#pragma once

#include <cstddef>
#include <string>
#include <variant>

#include "icl/linalg.hpp"
#include "icl/rng.hpp"
#include "icl/sampling.hpp"

namespace icl {

enum class TaskKind {
  Affine,         // l w^T x + b
  Relu2,          // l1 (w^T x)_+ + l2 (-w^T x)_+ + b
  Cosine,         // cos(L w^T x)
  Hills,          // nu cos(theta(x) - b), d = 2
  LowRankAffine,  // a^T B^T x + 2
  LowRankQuad,    // (a^T B^T x)^2
  LowRankCos,     // cos(4 a^T B^T x)
  LowRankLin,     // a^T B^T x
};

const char* to_string(TaskKind kind);
bool is_low_rank(TaskKind kind) noexcept;

// A distribution over tasks: the kind plus its class parameter (L or nu) and,
// for the low-rank kinds, the shared basis B.
struct TaskClass {
  TaskKind kind = TaskKind::Affine;
  double scale = 1.0;
  Matrix basis;

  static TaskClass affine(double lipschitz) { return {TaskKind::Affine, lipschitz, {}}; }
  static TaskClass relu2(double lipschitz) { return {TaskKind::Relu2, lipschitz, {}}; }
  static TaskClass cosine(double lipschitz) { return {TaskKind::Cosine, lipschitz, {}}; }
  static TaskClass hills(double nu) { return {TaskKind::Hills, nu, {}}; }
  static TaskClass low_rank(TaskKind kind, Matrix basis);

  std::string name() const;
};

struct AffineTask {
  double lipschitz;
  Vector w;
  double slope;
  double offset;
};

struct Relu2Task {
  double lipschitz;
  Vector w;
  double slope_pos;
  double slope_neg;
  double offset;
};

struct CosineTask {
  double lipschitz;
  Vector w;
};

struct HillsTask {
  double nu;
  double phase;
};

struct LowRankTask {
  TaskKind kind;
  Matrix basis;
  Vector a;
};

using TaskSpec = std::variant<AffineTask, Relu2Task, CosineTask, HillsTask, LowRankTask>;

TaskSpec draw_task(const TaskClass& cls, std::size_t d, RngStream& rng);
double evaluate_task(const TaskSpec& task, std::span<const double> x);
// Upper bound on the Lipschitz constant over the unit sphere.
double task_lipschitz(const TaskSpec& task);
std::size_t task_dim(const TaskSpec& task);

// One in-context instance: n labelled tokens and m held-out queries.
struct ContextBatch {
  Matrix X;      // n x d
  Vector y;      // f(x_i) + noise_i
  Vector noise;  // the recorded noise draws
  Matrix Q;      // m x d
  Vector t;      // f(q_j), noise free
  TaskSpec task;

  std::size_t n() const noexcept { return X.rows(); }
  std::size_t m() const noexcept { return Q.rows(); }
  std::size_t d() const noexcept { return X.cols(); }
};

// floor(sqrt(n)), at least 1.
std::size_t default_queries(std::size_t n);

ContextBatch make_context(const TaskSpec& task, const CovariateDist& dist, std::size_t n, std::size_t m, double sigma,
                          RngStream& rng);

}  // namespace icl
