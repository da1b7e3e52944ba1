#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "helpers.hpp"
#include "icl/error.hpp"
#include "icl/theory.hpp"

using namespace icl;

namespace {

Matrix sphere_rows(std::size_t n, std::size_t d, RngStream& r) {
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector v = sample_unit_sphere(d, r);
    std::copy(v.begin(), v.end(), x.row(i).begin());
  }
  return x;
}

}  // namespace

TEST_CASE("g_p: r = 0 counts tokens, single-term value") {
  RngStream r(1);
  const Matrix x = sphere_rows(17, 3, r);
  CHECK(g_p(x, sample_unit_sphere(3, r), 0.0, 0.0) == 17.0);
  const Matrix one{{0.0, 1.0}};
  CHECK(g_p(one, Vector{1.0, 0.0}, 2.0, 0.5) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-15));
  // Distance 1 needs a chord of length 1: angle pi/3.
  const Matrix at_one{{std::cos(std::numbers::pi / 3), std::sin(std::numbers::pi / 3)}};
  CHECK(g_p(at_one, Vector{1.0, 0.0}, 2.0, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("g_0 is strictly decreasing in r when some token is away from x") {
  RngStream r(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = sphere_rows(30, 4, r);
    const Vector q = sample_unit_sphere(4, r);
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 30; ++k) {
      const double v = g_p(x, q, 0.0, 0.5 * k);
      CHECK(v < prev);
      prev = v;
    }
  }
}

TEST_CASE("check_g_concentration: r = 0, d = 3 band, regime continuity") {
  const BoundCheck zero = check_g_concentration(3, 64, 0.0, 5, RngStream(3));
  CHECK(zero.measured == 1.0);
  CHECK(zero.pass);
  const BoundCheck c = check_g_concentration(3, 4096, 8.0, 50, RngStream(4));
  CHECK(c.pass);
  CHECK(c.lower == doctest::Approx(std::pow(8.0, -1.5) / 64));
  CHECK(c.upper == doctest::Approx(64 * std::pow(8.0, -1.5)));
  for (std::size_t d : {2, 3, 5, 8}) {
    const double boundary = (static_cast<double>(d) + std::sqrt(static_cast<double>(d))) / 2.0;
    const double hi = std::pow(boundary, -static_cast<double>(d) / 2.0), lo = std::exp(-2.0 * boundary);
    CHECK(std::max(hi, lo) / std::min(hi, lo) <= kThetaBand);
  }
  CHECK_THROWS_AS(check_g_concentration(3, 8, 1.0, 5, RngStream(5)), Error);
}

TEST_CASE("cap_measure_mc: whole sphere, hemisphere of a circle, exact d = 3 area") {
  CHECK(cap_measure_mc(4, 2.0, 10000, RngStream(6)) == 1.0);
  const std::size_t n = 200000;
  const double sd2 = std::sqrt(0.25 / n);
  CHECK(std::abs(cap_measure_mc(2, 1.0, n, RngStream(7)) - 0.5) < 4 * sd2);
  const double sd3 = std::sqrt(0.25 * 0.75 / n);
  CHECK(std::abs(cap_measure_mc(3, 0.5, n, RngStream(8)) - 0.25) < 3 * sd3);
  CHECK_THROWS_AS(cap_measure_mc(3, 0.0, n, RngStream(9)), Error);
  CHECK_THROWS_AS(cap_measure_mc(3, 0.5, 10, RngStream(9)), Error);
}

TEST_CASE("cap_measure_bounds: closed forms for d = 3") {
  const auto [lo1, hi1] = cap_measure_bounds(3, 1.0);
  CHECK(lo1 == doctest::Approx(1.0 / std::sqrt(6 * std::numbers::pi)).epsilon(1e-14));
  CHECK(hi1 == doctest::Approx(1.0));
  CHECK_UNARY(lo1 < 0.5 && 0.5 < hi1);
  const auto [lo2, hi2] = cap_measure_bounds(3, 0.5);
  CHECK(lo2 == doctest::Approx(0.75 / std::sqrt(6 * std::numbers::pi)).epsilon(1e-14));
  CHECK(hi2 == doctest::Approx(0.75));
  CHECK_UNARY(lo2 < 0.25 && 0.25 < hi2);
  const auto [lo3, hi3] = cap_measure_bounds(5, 1e-9);
  CHECK(lo3 < 1e-15);
  CHECK(hi3 < 1e-15);
}

TEST_CASE("check_cap_measure over the d x eps grid") {
  std::uint64_t stream = 0;
  for (std::size_t d : {3, 5, 8}) {
    for (double eps : {0.1, 0.3, 0.5, 1.0}) {
      CAPTURE(d);
      CAPTURE(eps);
      CHECK(check_cap_measure(d, eps, 200000, RngStream(10, stream++)).pass);
    }
  }
}

TEST_CASE("log_gamma matches factorials and lgamma") {
  double log_fact = 0.0;
  for (int k = 1; k <= 30; ++k) {
    CHECK(log_gamma(k) == doctest::Approx(log_fact).epsilon(1e-13));
    log_fact += std::log(static_cast<double>(k));
  }
  for (double x : {0.1, 0.5, 1.5, 3.7, 12.25, 101.0}) CHECK(log_gamma(x) == doctest::Approx(std::lgamma(x)).epsilon(1e-13));
}

TEST_CASE("discrete_gamma: single term, two terms, monotone in m") {
  CHECK(discrete_gamma(0.0, 1.7, 1) == doctest::Approx(std::exp(-1.7)).epsilon(1e-15));
  CHECK(discrete_gamma(1.0, 1.0, 2) == doctest::Approx(std::exp(-1.0) + 2 * std::exp(-2.0)).epsilon(1e-15));
  CHECK(discrete_gamma(1.0, 1.0, 2) == doctest::Approx(0.638550).epsilon(1e-6));
  double prev = 0.0;
  for (std::size_t m = 1; m < 200; ++m) {
    const double v = discrete_gamma(6.0, 1.0, m);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("discrete_gamma matches a long-double direct sum") {
  for (double d : {0.0, 1.0, 5.0, 12.0, 20.0}) {
    for (double alpha : {0.5, 1.0, 2.0}) {
      for (std::size_t m : {1, 7, 100, 10000}) {
        long double direct = 0.0L;
        for (std::size_t i = 1; i <= m; ++i) {
          direct += std::pow(static_cast<long double>(i), static_cast<long double>(d)) *
                    std::exp(-static_cast<long double>(alpha) * i);
        }
        CHECK(icl::test::rel_close(discrete_gamma(d, alpha, m), static_cast<double>(direct), 1e-12));
      }
    }
  }
}

TEST_CASE("discrete_gamma_bounds: both regimes by direct summation") {
  const BoundCheck large = discrete_gamma_bounds(6.0, 1.0, 20);
  CHECK(large.lower == doctest::Approx(360.0));
  CHECK(large.upper == doctest::Approx(1440.0));
  double direct = 0.0;
  for (int i = 1; i <= 20; ++i) direct += std::pow(i, 6) * std::exp(-i);
  CHECK(large.measured == doctest::Approx(direct).epsilon(1e-13));
  CHECK(large.pass);

  const BoundCheck small = discrete_gamma_bounds(6.0, 2.0, 3);
  CHECK(small.lower == doctest::Approx(std::pow(3, 6) * std::exp(-6.5)));
  CHECK(small.upper == doctest::Approx(std::pow(3, 7) * std::exp(-6.5)));
  CHECK(small.pass);

  CHECK_THROWS_AS(discrete_gamma_bounds(5.0, 1.0, 3), Error);
  CHECK_THROWS_AS(discrete_gamma_bounds(6.0, 2.5, 3), Error);
}

TEST_CASE("discrete_gamma_bounds: m = 1 substitutes directly and sits outside the small bracket") {
  for (double d : {6.0, 8.0, 10.0}) {
    for (double alpha : {1.0, 1.5, 2.0}) {
      const BoundCheck b = discrete_gamma_bounds(d, alpha, 1);
      CHECK(b.measured == doctest::Approx(std::exp(-alpha)).epsilon(1e-15));
      // m^d e^{-alpha m - 1/2} at m = 1 is e^{-alpha - 1/2}, and so is the upper end:
      // the bracket is a single point below the true value.
      CHECK(b.lower == doctest::Approx(std::exp(-alpha - 0.5)));
      CHECK(b.upper == doctest::Approx(std::exp(-alpha - 0.5)));
      CHECK_FALSE(b.pass);
    }
  }
}

TEST_CASE("rearrangement_check: hand values, tie, strict on random pairs") {
  const RearrangementCheck hand = rearrangement_check(Vector{1, 2}, Vector{1, 2});
  CHECK(hand.lhs == doctest::Approx(5.0 / 9.0));
  CHECK(hand.rhs == doctest::Approx(17.0 / 25.0));
  CHECK(hand.strict());
  CHECK(hand.as_bound_check().pass);

  const RearrangementCheck tie = rearrangement_check(Vector{0.3, 1.1, 2.0}, Vector{4, 4, 4});
  CHECK(tie.tie);
  CHECK_FALSE(tie.strict());
  CHECK(tie.lhs == doctest::Approx(tie.rhs).epsilon(1e-14));

  RngStream r(11);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 2 + r.next_u64() % 19;
    Vector a(n), b(n);
    for (auto& v : a) v = r.uniform(0.1, 2.0);
    for (auto& v : b) v = r.uniform(0.1, 2.0);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(rearrangement_check(a, b).strict());
  }

  CHECK_THROWS_AS(rearrangement_check(Vector{1, 2}, Vector{2, 1}), Error);
  CHECK_THROWS_AS(rearrangement_check(Vector{1, 2}, Vector{1}), Error);
  CHECK_THROWS_AS(rearrangement_check(Vector{-1, 2}, Vector{1, 2}), Error);
  CHECK_THROWS_AS(rearrangement_check(Vector{}, Vector{}), Error);
}

TEST_CASE("log_grid endpoints and spacing") {
  const Vector g = log_grid(1.0, 100.0, 5);
  REQUIRE(g.size() == 5);
  CHECK(g.front() == 1.0);
  CHECK(g.back() == doctest::Approx(100.0).epsilon(1e-14));
  CHECK(g[2] == doctest::Approx(10.0).epsilon(1e-14));
}

TEST_CASE("bandwidth_sweep: constant tasks favour the widest window") {
  const Vector grid = log_grid(0.01, 50.0, 12);
  const SweepResult s =
      bandwidth_sweep(TaskClass::affine(0.0), CovariateDist::uniform_sphere(3), 16, 0.1, grid, 500, RngStream(12));
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(s.loss_mean[i] >= s.loss_mean[i - 1] * (1 - 1e-12));
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(s.noise[i] >= s.noise[i - 1] * (1 - 1e-12));
  CHECK(s.argmin_index == 0);
  CHECK(s.boundary_minimum);
}

TEST_CASE("bandwidth_sweep: no noise, bias-only curve falls toward large w") {
  const Vector grid = log_grid(0.5, 300.0, 15);
  const SweepResult s =
      bandwidth_sweep(TaskClass::relu2(1.0), CovariateDist::uniform_sphere(5), 64, 0.0, grid, 1000, RngStream(13));
  for (double v : s.noise) CHECK(v == 0.0);
  CHECK(s.loss_mean.back() < s.loss_mean.front());
  CHECK(s.argmin_index >= grid.size() / 2);
  // Bias trend: the second half sits below the first half by more than 3 se.
  CHECK(s.bias.back() + 3 * s.loss_std_error.back() < s.bias.front());
}

TEST_CASE("bandwidth_sweep: fixed seed replays exactly") {
  const Vector grid = log_grid(1.0, 100.0, 8);
  const auto run = [&] {
    return bandwidth_sweep(TaskClass::cosine(1.0), CovariateDist::uniform_sphere(4), 32, 0.05, grid, 300,
                           RngStream(14));
  };
  const SweepResult a = run(), b = run();
  CHECK(a.loss_mean == b.loss_mean);
  CHECK(a.loss_std_error == b.loss_std_error);
  CHECK(a.w_star == b.w_star);
}

TEST_CASE("exponent_fit: exact power law, constant, degenerate input") {
  const Vector lam{10, 100, 1000, 1e4};
  Vector w;
  for (double l : lam) w.push_back(std::pow(l, 0.2));
  CHECK(std::abs(exponent_fit(lam, w) - 0.2) < 1e-10);
  CHECK(std::abs(exponent_fit(lam, Vector(4, 3.0))) < 1e-12);
  CHECK_THROWS_AS(exponent_fit(Vector{1, 2}, Vector{1, 2}), Error);
  CHECK_THROWS_AS(exponent_fit(Vector{1, 1, 1}, Vector{1, 2, 3}), Error);
  CHECK_THROWS_AS(exponent_fit(Vector{1, 2, 3}, Vector{1, 0, 3}), Error);
}

TEST_CASE("reference exponents for d = 5") {
  const double alpha = 1.0 / (5 + 4), beta = 1.0 / (5 + 2);
  CHECK(alpha == doctest::Approx(0.1111).epsilon(1e-3));
  CHECK(beta == doctest::Approx(0.1429).epsilon(1e-3));
  CHECK(2 * beta == doctest::Approx(0.2857).epsilon(1e-3));
}
