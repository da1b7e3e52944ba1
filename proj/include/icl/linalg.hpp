#pragma once

// Small dense linear algebra: just enough for d <= ~64 key-query matrices,
// subspace bases and covariate shaping matrices.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace icl {

using Vector = std::vector<double>;

namespace tol {
// Every numerical tolerance used by the linear algebra layer lives here so
// tests can cite the same constants.
inline constexpr double kOrthonormal = 1e-10;        // max |Q^T Q - I| after Gram-Schmidt
inline constexpr double kOrthonormalInput = 1e-8;    // accepted |B^T B - I| for complement input
inline constexpr double kGramSchmidtResidual = 1e-10;  // default residual-norm cutoff
inline constexpr double kComplementDrop = 1e-6;      // residual below which a candidate column is dropped
inline constexpr double kSymmetry = 1e-8;            // accepted |S - S^T|_max
inline constexpr double kJacobiOffDiag = 1e-14;      // relative off-diagonal mass at which Jacobi stops
inline constexpr int kJacobiMaxSweeps = 100;
inline constexpr double kPsdReject = 1e-6;           // eigenvalues below -kPsdReject are an error; others clip to 0
inline constexpr int kPowerIters = 20000;
inline constexpr double kPowerTol = 1e-14;
inline constexpr unsigned long long kPowerRestartSeed = 0x5eedf00dULL;
}  // namespace tol

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Row-major entries; throws DimensionMismatch on a size mismatch and
  // DegenerateInput on non-finite entries.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> diag);
  // Columns are the given vectors (all of equal length).
  static Matrix from_columns(const std::vector<Vector>& columns);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }
  Vector column(std::size_t c) const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transpose() const;
  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s) noexcept;

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, std::span<const double> x);

// A^T * x without forming the transpose.
Vector transpose_times(const Matrix& a, std::span<const double> x);
Matrix outer(std::span<const double> u, std::span<const double> v);

double dot(std::span<const double> a, std::span<const double> b) noexcept;
double norm2(std::span<const double> a) noexcept;
double frobenius_norm(const Matrix& m) noexcept;
double max_abs(const Matrix& m) noexcept;
double max_abs_diff(const Matrix& a, const Matrix& b);
double trace(const Matrix& m);

// Column-orthonormal basis of span(A) via modified Gram-Schmidt with one
// reorthogonalization pass. DegenerateInput when a residual column norm is
// <= residual_tol (A is numerically rank deficient).
Matrix gram_schmidt_orthonormalize(const Matrix& a, double residual_tol = tol::kGramSchmidtResidual);

// Orthonormal basis of col(B)^perp, built by Gram-Schmidt over [B | I_d]
// picking identity columns in order of largest residual.
Matrix orthonormal_complement(const Matrix& b);

struct SymmetricEigen {
  Vector values;   // descending
  Matrix vectors;  // column i pairs with values[i]
};

// Cyclic Jacobi rotations. NoConvergence if the off-diagonal mass is still
// above tolerance after tol::kJacobiMaxSweeps sweeps.
SymmetricEigen symmetric_eig(const Matrix& s);

// Largest singular value via power iteration on M^T M.
double spectral_norm(const Matrix& m, int iters = tol::kPowerIters, double rel_tol = tol::kPowerTol);

// Smallest singular value, from the eigenvalues of M^T M.
double min_singular_value(const Matrix& m);

// Symmetric square root of a PSD matrix.
Matrix psd_sqrt(const Matrix& s);

}  // namespace icl
