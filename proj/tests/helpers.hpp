#pragma once

#include <cmath>

#include "icl/linalg.hpp"
#include "icl/rng.hpp"

namespace icl::test {

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, RngStream& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

inline Matrix random_symmetric(std::size_t n, RngStream& rng) {
  const Matrix g = gaussian_matrix(n, n, rng);
  return 0.5 * (g + g.transpose());
}

inline double orthonormality_error(const Matrix& q) { return max_abs_diff(q.transpose() * q, Matrix::identity(q.cols())); }

inline bool rel_close(double a, double b, double rel) { return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)); }

}  // namespace icl::test
