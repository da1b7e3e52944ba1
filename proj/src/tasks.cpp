#include "icl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "icl/error.hpp"

namespace icl {

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Affine: return "affine";
    case TaskKind::Relu2: return "relu";
    case TaskKind::Cosine: return "cos";
    case TaskKind::Hills: return "hills";
    case TaskKind::LowRankAffine: return "lowrank-affine";
    case TaskKind::LowRankQuad: return "lowrank-quad";
    case TaskKind::LowRankCos: return "lowrank-cos";
    case TaskKind::LowRankLin: return "lowrank-lin";
  }
  return "unknown";
}

bool is_low_rank(TaskKind kind) noexcept {
  return kind == TaskKind::LowRankAffine || kind == TaskKind::LowRankQuad || kind == TaskKind::LowRankCos ||
         kind == TaskKind::LowRankLin;
}

TaskClass TaskClass::low_rank(TaskKind kind, Matrix basis) {
  if (!is_low_rank(kind)) throw Error(ErrorKind::DegenerateInput, "low_rank: kind is not a low-rank class");
  if (basis.cols() == 0 || basis.cols() > basis.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "low_rank: basis must be d x k with 1 <= k <= d");
  }
  if (max_abs_diff(basis.transpose() * basis, Matrix::identity(basis.cols())) > tol::kOrthonormalInput) {
    throw Error(ErrorKind::DegenerateInput, "low_rank: basis is not column-orthonormal");
  }
  return {kind, 1.0, std::move(basis)};
}

std::string TaskClass::name() const {
  if (is_low_rank(kind)) return to_string(kind);
  std::ostringstream os;
  os << to_string(kind) << '_' << scale;
  return os.str();
}

TaskSpec draw_task(const TaskClass& cls, std::size_t d, RngStream& rng) {
  const double L = cls.scale;
  if (!is_low_rank(cls.kind) && !(L >= 0.0)) {
    throw Error(ErrorKind::DegenerateInput, "draw_task: class parameter must be nonnegative");
  }
  switch (cls.kind) {
    case TaskKind::Affine: {
      Vector w = sample_unit_sphere(d, rng);
      const double slope = rng.uniform(-L, L);
      const double offset = rng.uniform(-L, L);
      return AffineTask{L, std::move(w), slope, offset};
    }
    case TaskKind::Relu2: {
      Vector w = sample_unit_sphere(d, rng);
      const double l1 = rng.uniform(-L, L);
      const double l2 = rng.uniform(-L, L);
      const double b = rng.uniform(-L, L);
      return Relu2Task{L, std::move(w), l1, l2, b};
    }
    case TaskKind::Cosine:
      return CosineTask{L, sample_unit_sphere(d, rng)};
    case TaskKind::Hills:
      if (d != 2) throw Error(ErrorKind::DegenerateInput, "hills tasks are defined for d = 2 only");
      return HillsTask{L, rng.uniform(-std::numbers::pi, std::numbers::pi)};
    case TaskKind::LowRankAffine:
    case TaskKind::LowRankQuad:
    case TaskKind::LowRankCos:
    case TaskKind::LowRankLin: {
      if (cls.basis.rows() != d) throw Error(ErrorKind::DimensionMismatch, "draw_task: basis rows != d");
      return LowRankTask{cls.kind, cls.basis, sample_unit_sphere(cls.basis.cols(), rng)};
    }
  }
  throw Error(ErrorKind::DegenerateInput, "draw_task: unknown task kind");
}

namespace {

void check_dim(std::size_t expected, std::size_t got) {
  if (expected != got) {
    throw Error(ErrorKind::DimensionMismatch,
                "task expects d=" + std::to_string(expected) + ", got " + std::to_string(got));
  }
}

}  // namespace

double evaluate_task(const TaskSpec& task, std::span<const double> x) {
  struct Visitor {
    std::span<const double> x;
    double operator()(const AffineTask& t) const {
      check_dim(t.w.size(), x.size());
      return t.slope * dot(t.w, x) + t.offset;
    }
    double operator()(const Relu2Task& t) const {
      check_dim(t.w.size(), x.size());
      const double s = dot(t.w, x);
      return t.slope_pos * std::max(s, 0.0) + t.slope_neg * std::max(-s, 0.0) + t.offset;
    }
    double operator()(const CosineTask& t) const {
      check_dim(t.w.size(), x.size());
      return std::cos(t.lipschitz * dot(t.w, x));
    }
    double operator()(const HillsTask& t) const {
      if (x.size() != 2) throw Error(ErrorKind::DegenerateInput, "hills tasks are defined for d = 2 only");
      return t.nu * std::cos(std::atan2(x[1], x[0]) - t.phase);
    }
    double operator()(const LowRankTask& t) const {
      check_dim(t.basis.rows(), x.size());
      const Vector z = transpose_times(t.basis, x);
      const double s = dot(t.a, z);
      switch (t.kind) {
        case TaskKind::LowRankAffine: return s + 2.0;
        case TaskKind::LowRankQuad: return s * s;
        case TaskKind::LowRankCos: return std::cos(4.0 * s);
        case TaskKind::LowRankLin: return s;
        default: break;
      }
      throw Error(ErrorKind::DegenerateInput, "low-rank task with a full-rank kind");
    }
  };
  return std::visit(Visitor{x}, task);
}

double task_lipschitz(const TaskSpec& task) {
  struct Visitor {
    double operator()(const AffineTask& t) const { return std::abs(t.slope); }
    double operator()(const Relu2Task& t) const { return std::max(std::abs(t.slope_pos), std::abs(t.slope_neg)); }
    double operator()(const CosineTask& t) const { return t.lipschitz; }
    // On the circle nu cos(theta - b) is the restriction of a linear map with
    // gradient norm nu.
    double operator()(const HillsTask& t) const { return std::abs(t.nu); }
    double operator()(const LowRankTask& t) const {
      const double na = norm2(t.a);
      switch (t.kind) {
        case TaskKind::LowRankAffine:
        case TaskKind::LowRankLin: return na;
        // |grad| = 2 |a^T B^T x| |B a| <= 2 |a|^2 on the unit ball.
        case TaskKind::LowRankQuad: return 2.0 * na * na;
        case TaskKind::LowRankCos: return 4.0 * na;
        default: break;
      }
      return 0.0;
    }
  };
  return std::visit(Visitor{}, task);
}

std::size_t task_dim(const TaskSpec& task) {
  struct Visitor {
    std::size_t operator()(const AffineTask& t) const { return t.w.size(); }
    std::size_t operator()(const Relu2Task& t) const { return t.w.size(); }
    std::size_t operator()(const CosineTask& t) const { return t.w.size(); }
    std::size_t operator()(const HillsTask&) const { return 2; }
    std::size_t operator()(const LowRankTask& t) const { return t.basis.rows(); }
  };
  return std::visit(Visitor{}, task);
}

std::size_t default_queries(std::size_t n) {
  const auto root = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  return std::max<std::size_t>(1, root);
}

ContextBatch make_context(const TaskSpec& task, const CovariateDist& dist, std::size_t n, std::size_t m, double sigma,
                          RngStream& rng) {
  if (n < 1 || m < 1) throw Error(ErrorKind::DegenerateInput, "make_context: need n >= 1 and m >= 1");
  if (sigma < 0.0) throw Error(ErrorKind::DegenerateInput, "make_context: sigma must be nonnegative");
  const std::size_t d = dist.dim();
  check_dim(task_dim(task), d);

  ContextBatch batch{Matrix(n, d), Vector(n), Vector(n), Matrix(m, d), Vector(m), task};
  for (std::size_t i = 0; i < n; ++i) {
    const Vector x = sample_covariate(dist, rng);
    std::copy(x.begin(), x.end(), batch.X.row(i).begin());
  }
  for (std::size_t j = 0; j < m; ++j) {
    const Vector q = sample_covariate(dist, rng);
    std::copy(q.begin(), q.end(), batch.Q.row(j).begin());
  }
  for (std::size_t i = 0; i < n; ++i) {
    batch.noise[i] = sample_noise(sigma, rng);
    batch.y[i] = evaluate_task(task, batch.X.row(i)) + batch.noise[i];
  }
  for (std::size_t j = 0; j < m; ++j) batch.t[j] = evaluate_task(task, batch.Q.row(j));
  return batch;
}

}  // namespace icl
