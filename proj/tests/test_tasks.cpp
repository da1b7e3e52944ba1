#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "icl/error.hpp"
#include "icl/tasks.hpp"

using namespace icl;

namespace {

Vector e1_scaled(std::size_t d, double v) {
  Vector x(d, 0.0);
  x[0] = v;
  return x;
}

}  // namespace

TEST_CASE("draw_task: affine with L = 0 is the zero function") {
  RngStream r(1);
  const TaskSpec t = draw_task(TaskClass::affine(0.0), 4, r);
  const auto& a = std::get<AffineTask>(t);
  CHECK(a.slope == 0.0);
  CHECK(a.offset == 0.0);
  RngStream xr(2);
  for (int i = 0; i < 10; ++i) CHECK(evaluate_task(t, sample_unit_sphere(4, xr)) == 0.0);
}

TEST_CASE("draw_task: relu parameters respect the class") {
  RngStream r(3);
  for (int i = 0; i < 200; ++i) {
    const auto t = std::get<Relu2Task>(draw_task(TaskClass::relu2(1.5), 5, r));
    CHECK(std::abs(norm2(t.w) - 1.0) < 1e-12);
    for (double v : {t.slope_pos, t.slope_neg, t.offset}) CHECK_UNARY(v >= -1.5 && v <= 1.5);
  }
}

TEST_CASE("draw_task: hills phase lies in [-pi, pi]") {
  RngStream r(4);
  for (int i = 0; i < 200; ++i) {
    const auto t = std::get<HillsTask>(draw_task(TaskClass::hills(1.5), 2, r));
    CHECK_UNARY(t.phase >= -std::numbers::pi && t.phase <= std::numbers::pi);
    CHECK(t.nu == 1.5);
  }
  RngStream bad(5);
  CHECK_THROWS_AS(draw_task(TaskClass::hills(1.5), 3, bad), Error);
}

TEST_CASE("evaluate_task: relu branches by hand") {
  const Relu2Task t{1.0, e1_scaled(3, 1.0), 1.0, -1.0, 0.0};
  CHECK(evaluate_task(t, e1_scaled(3, 0.5)) == doctest::Approx(0.5));
  // Negative side: l2 * (-w^T x)_+ = -1 * 0.5.
  CHECK(evaluate_task(t, e1_scaled(3, -0.5)) == doctest::Approx(-0.5));
  const Relu2Task v{1.0, e1_scaled(3, 1.0), 1.0, 1.0, 0.0};
  CHECK(evaluate_task(v, e1_scaled(3, -0.5)) == doctest::Approx(0.5));
}

TEST_CASE("evaluate_task: low-rank affine is 2 off the subspace") {
  Matrix b(4, 1);
  b(0, 0) = 1.0;
  const LowRankTask t{TaskKind::LowRankAffine, b, Vector{0.7}};
  CHECK(evaluate_task(t, Vector{0, 0.6, 0.8, 0}) == 2.0);
}

TEST_CASE("evaluate_task: cosine is 1 orthogonal to w") {
  const CosineTask t{7.3, e1_scaled(3, 1.0)};
  CHECK(evaluate_task(t, Vector{0, 1, 0}) == 1.0);
}

TEST_CASE("evaluate_task: dimension mismatch is rejected") {
  const CosineTask t{1.0, e1_scaled(3, 1.0)};
  CHECK_THROWS_AS(evaluate_task(t, Vector{1, 0}), Error);
}

TEST_CASE("task_lipschitz: closed forms") {
  CHECK(task_lipschitz(AffineTask{1.0, e1_scaled(2, 1.0), 0.7, 0.1}) == 0.7);
  CHECK(task_lipschitz(Relu2Task{2.0, e1_scaled(2, 1.0), -2.0, 1.0, 0.0}) == 2.0);
  CHECK(task_lipschitz(CosineTask{3.25, e1_scaled(2, 1.0)}) == 3.25);
}

TEST_CASE("task_lipschitz: cosine bound is attained by a finite-difference slope") {
  const double L = 3.0;
  const CosineTask t{L, e1_scaled(2, 1.0)};
  // Steepest point of cos(L s): s = pi / (2L), derivative magnitude L.
  const double s = std::numbers::pi / (2.0 * L), h = 1e-6;
  const double slope = std::abs(std::cos(L * (s + h)) - std::cos(L * (s - h))) / (2.0 * h);
  CHECK(slope == doctest::Approx(L).epsilon(1e-6));
}

TEST_CASE("task_lipschitz bounds every drawn task on random sphere pairs") {
  RngStream r(10);
  const std::size_t d = 5;
  const Subspace s = make_random_subspace(d, 2, r);
  std::vector<TaskClass> classes = {TaskClass::affine(1.3),
                                    TaskClass::relu2(0.7),
                                    TaskClass::cosine(4.0),
                                    TaskClass::low_rank(TaskKind::LowRankAffine, s.basis),
                                    TaskClass::low_rank(TaskKind::LowRankQuad, s.basis),
                                    TaskClass::low_rank(TaskKind::LowRankCos, s.basis),
                                    TaskClass::low_rank(TaskKind::LowRankLin, s.basis)};
  for (const auto& cls : classes) {
    for (int i = 0; i < 1000; ++i) {
      const TaskSpec t = draw_task(cls, d, r);
      const Vector x = sample_unit_sphere(d, r), y = sample_unit_sphere(d, r);
      Vector diff(d);
      for (std::size_t j = 0; j < d; ++j) diff[j] = x[j] - y[j];
      CHECK(std::abs(evaluate_task(t, x) - evaluate_task(t, y)) <= task_lipschitz(t) * norm2(diff) + 1e-9);
    }
  }
  for (int i = 0; i < 1000; ++i) {
    const TaskSpec t = draw_task(TaskClass::hills(6.0), 2, r);
    const Vector x = sample_unit_sphere(2, r), y = sample_unit_sphere(2, r);
    const double dist = std::hypot(x[0] - y[0], x[1] - y[1]);
    CHECK(std::abs(evaluate_task(t, x) - evaluate_task(t, y)) <= task_lipschitz(t) * dist + 1e-9);
  }
}

TEST_CASE("relu with equal slopes on both sides matches affine") {
  RngStream r(11);
  for (int i = 0; i < 200; ++i) {
    const Vector w = sample_unit_sphere(4, r);
    const double l = r.uniform(-2, 2), b = r.uniform(-2, 2);
    // l (s)_+ + (-l) (-s)_+ = l s
    const Relu2Task relu{2.0, w, l, -l, b};
    const AffineTask aff{2.0, w, l, b};
    const Vector x = sample_unit_sphere(4, r);
    CHECK(std::abs(evaluate_task(relu, x) - evaluate_task(aff, x)) < 1e-12);
  }
}

TEST_CASE("low-rank linear ignores the complement component") {
  RngStream r(12);
  const Subspace s = make_random_subspace(6, 2, r);
  const Matrix proj = s.basis * s.basis.transpose();
  for (int i = 0; i < 200; ++i) {
    const TaskSpec t = draw_task(TaskClass::low_rank(TaskKind::LowRankLin, s.basis), 6, r);
    const Vector x = sample_unit_sphere(6, r);
    CHECK(std::abs(evaluate_task(t, x) - evaluate_task(t, proj * x)) < 1e-12);
  }
}

TEST_CASE("cosine outputs stay in [-1, 1]") {
  RngStream r(13);
  const Subspace s = make_random_subspace(5, 2, r);
  for (const auto& cls : {TaskClass::cosine(9.0), TaskClass::low_rank(TaskKind::LowRankCos, s.basis)}) {
    for (int i = 0; i < 1000; ++i) {
      const TaskSpec t = draw_task(cls, 5, r);
      const double v = evaluate_task(t, sample_unit_sphere(5, r));
      CHECK_UNARY(v >= -1.0 && v <= 1.0);
    }
  }
}

TEST_CASE("make_context: noise-free labels and shapes") {
  RngStream r(20);
  const TaskSpec t = draw_task(TaskClass::relu2(1.0), 5, r);
  const ContextBatch b = make_context(t, CovariateDist::uniform_sphere(5), 20, default_queries(20), 0.0, r);
  CHECK(b.X.rows() == 20);
  CHECK(b.X.cols() == 5);
  CHECK(b.y.size() == 20);
  CHECK(b.Q.rows() == 4);
  CHECK(b.Q.cols() == 5);
  CHECK(b.t.size() == 4);
  for (std::size_t i = 0; i < 20; ++i) CHECK(b.y[i] == evaluate_task(t, b.X.row(i)));
  for (std::size_t j = 0; j < 4; ++j) CHECK(b.t[j] == evaluate_task(t, b.Q.row(j)));
}

TEST_CASE("make_context: labels carry the recorded noise") {
  RngStream r(21);
  const TaskSpec t = draw_task(TaskClass::cosine(1.0), 3, r);
  const ContextBatch b = make_context(t, CovariateDist::uniform_sphere(3), 30, 2, 0.1, r);
  for (std::size_t i = 0; i < 30; ++i) CHECK(b.y[i] == evaluate_task(t, b.X.row(i)) + b.noise[i]);
}

TEST_CASE("make_context: replay gives an identical batch") {
  const auto build = [] {
    RngStream r(22);
    const TaskSpec t = draw_task(TaskClass::affine(1.0), 4, r);
    return make_context(t, CovariateDist::anisotropic_default(4), 12, 3, 0.05, r);
  };
  const ContextBatch a = build(), b = build();
  CHECK(a.X == b.X);
  CHECK(a.y == b.y);
  CHECK(a.Q == b.Q);
  CHECK(a.t == b.t);
}

TEST_CASE("default_queries is floor(sqrt n), at least 1") {
  CHECK(default_queries(1) == 1);
  CHECK(default_queries(20) == 4);
  CHECK(default_queries(50) == 7);
  CHECK(default_queries(200) == 14);
}
