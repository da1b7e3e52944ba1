#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "icl/error.hpp"
#include "icl/sampling.hpp"

using namespace icl;

TEST_CASE("rng: same seed and stream replay the same sequence") {
  RngStream a(42, 3), b(42, 3), c(42, 4);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    differs = differs || x != c.next_u64();
  }
  CHECK(differs);
}

TEST_CASE("rng: derived streams do not depend on the parent's position") {
  RngStream a(7);
  const RngStream child_before = a.derive(5);
  for (int i = 0; i < 10; ++i) a.next_u64();
  RngStream before = child_before;
  RngStream after = a.derive(5);
  for (int i = 0; i < 10; ++i) CHECK(before.next_u64() == after.next_u64());
}

TEST_CASE("rng: uniform stays in [0, 1)") {
  RngStream r(1);
  for (int i = 0; i < 100000; ++i) {
    const double u = r.uniform();
    CHECK_UNARY(u >= 0.0 && u < 1.0);
  }
}

TEST_CASE("sample_gaussian: d = 1 is reproducible") {
  RngStream a(9), b(9);
  CHECK(sample_gaussian(1, a) == sample_gaussian(1, b));
}

TEST_CASE("sample_gaussian: mean and variance of 1e5 draws") {
  RngStream r(10);
  const std::size_t n = 100000;
  double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    const Vector g = sample_gaussian(3, r);
    for (int j = 0; j < 3; ++j) {
      sum[j] += g[j];
      sq[j] += g[j] * g[j];
    }
  }
  for (int j = 0; j < 3; ++j) {
    const double mean = sum[j] / n;
    CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(sq[j] / n - mean * mean - 1.0) < 0.05);
  }
}

TEST_CASE("sample_covariate: unit norm for the sphere families") {
  RngStream r(20);
  const Matrix j = make_shaping_matrix(6, r);
  const CovariateDist dists[] = {CovariateDist::uniform_sphere(5), CovariateDist::anisotropic_default(5),
                                 CovariateDist::shaped_sphere(j)};
  for (const auto& dist : dists) {
    for (int i = 0; i < 2000; ++i) CHECK(std::abs(norm2(sample_covariate(dist, r)) - 1.0) < 1e-12);
  }
}

TEST_CASE("sample_covariate: low-rank latent with c_v = 0 stays in col(B)") {
  RngStream r(21);
  const Subspace s = make_random_subspace(6, 2, r);
  const auto dist = CovariateDist::low_rank_latent(s.basis, 1.0, 0.0);
  for (int i = 0; i < 1000; ++i) {
    const Vector x = sample_covariate(dist, r);
    CHECK(norm2(transpose_times(s.complement, x)) < 1e-12);
  }
}

TEST_CASE("sample_covariate: low-rank latent block norms are c_u and c_v") {
  RngStream r(22);
  const Subspace s = make_random_subspace(7, 3, r);
  const auto dist = CovariateDist::low_rank_latent(s.basis, 0.8, 0.3);
  for (int i = 0; i < 1000; ++i) {
    const Vector x = sample_covariate(dist, r);
    CHECK(std::abs(norm2(transpose_times(s.basis, x)) - 0.8) < 1e-12);
    CHECK(std::abs(norm2(transpose_times(s.complement, x)) - 0.3) < 1e-12);
  }
}

TEST_CASE("sample_covariate: anisotropic sphere favours the large-scale axis") {
  RngStream r(23);
  const auto dist = CovariateDist::anisotropic_sphere(Vector{1, 2, 3, 4, 5});
  const std::size_t n = 100000;
  double first = 0, last = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector x = sample_covariate(dist, r);
    first += x[0] * x[0];
    last += x[4] * x[4];
  }
  // Independent oracle: normalize sqrt(S) g by hand from a separate stream.
  RngStream o(123456);
  double o_first = 0, o_last = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Vector g(5);
    for (std::size_t j = 0; j < 5; ++j) g[j] = std::sqrt(static_cast<double>(j + 1)) * o.normal();
    const double nrm = norm2(g);
    o_first += g[0] * g[0] / (nrm * nrm);
    o_last += g[4] * g[4] / (nrm * nrm);
  }
  CHECK(last > first);
  CHECK(std::abs(first / n - o_first / n) < 0.005);
  CHECK(std::abs(last / n - o_last / n) < 0.005);
}

TEST_CASE("sample_covariate: uniform sphere is rotation invariant in the mean") {
  RngStream r(24);
  const std::size_t d = 4, n = 100000;
  const Matrix rot = random_orthogonal(d, r);
  Vector mx(d, 0.0), mrx(d, 0.0);
  const auto dist = CovariateDist::uniform_sphere(d);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector x = sample_covariate(dist, r);
    const Vector y = sample_covariate(dist, r);
    const Vector ry = rot * y;
    for (std::size_t j = 0; j < d; ++j) {
      mx[j] += x[j] / n;
      mrx[j] += ry[j] / n;
    }
  }
  // Each coordinate has variance 1/d; the difference of two means has sd sqrt(2/(d n)).
  const double tol = 4.0 * std::sqrt(2.0 / (static_cast<double>(d) * n));
  for (std::size_t j = 0; j < d; ++j) CHECK(std::abs(mx[j] - mrx[j]) < tol);
}

TEST_CASE("sample_covariate: identical streams give identical sequences") {
  RngStream a(25, 1), b(25, 1);
  const auto dist = CovariateDist::anisotropic_default(6);
  for (int i = 0; i < 100; ++i) CHECK(sample_covariate(dist, a) == sample_covariate(dist, b));
}

TEST_CASE("sample_noise: zero sigma, variance, replay") {
  RngStream r(30);
  CHECK(sample_noise(0.0, r) == 0.0);
  const std::size_t n = 100000;
  double s = 0, sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = sample_noise(0.01, r);
    s += e;
    sq += e * e;
  }
  const double var = sq / n - (s / n) * (s / n);
  CHECK(std::abs(var - 1e-4) < 0.05 * 1e-4);
  RngStream a(31), b(31);
  CHECK(sample_noise(0.3, a) == sample_noise(0.3, b));
  CHECK_THROWS_AS(sample_noise(-1.0, r), Error);
}

TEST_CASE("make_random_subspace: d = 2, k = 1") {
  RngStream r(40);
  const Subspace s = make_random_subspace(2, 1, r);
  CHECK(norm2(s.basis.column(0)) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::abs(s.complement(0, 0)) == doctest::Approx(std::abs(s.basis(1, 0))).epsilon(1e-12));
  CHECK(std::abs(s.complement(1, 0)) == doctest::Approx(std::abs(s.basis(0, 0))).epsilon(1e-12));
}

TEST_CASE("make_random_subspace: d = 10, k = 2 blocks are orthonormal") {
  RngStream r(41);
  const Subspace s = make_random_subspace(10, 2, r);
  CHECK(max_abs_diff(s.basis.transpose() * s.basis, Matrix::identity(2)) < 1e-8);
  CHECK(max_abs(s.basis.transpose() * s.complement) < 1e-8);
  CHECK(s.complement.cols() == 8);
}

TEST_CASE("make_random_subspace: distinct stream ids give distinct bases") {
  RngStream a(42, 0), b(42, 1);
  CHECK(frobenius_norm(make_random_subspace(10, 2, a).basis - make_random_subspace(10, 2, b).basis) > 1e-3);
}

TEST_CASE("make_random_subspace: k outside [1, d) is rejected") {
  RngStream r(43);
  CHECK_THROWS_AS(make_random_subspace(4, 0, r), Error);
  CHECK_THROWS_AS(make_random_subspace(4, 4, r), Error);
}

TEST_CASE("make_shaping_matrix: symmetric PSD square root of a Gram matrix") {
  RngStream r(44);
  const Matrix j = make_shaping_matrix(6, r);
  CHECK(max_abs_diff(j, j.transpose()) < 1e-12);
  CHECK(symmetric_eig(j).values.back() > 0.0);
}
