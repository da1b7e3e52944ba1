#include "icl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "icl/error.hpp"
#include "icl/rng.hpp"

namespace icl {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorKind::DimensionMismatch, "matrix entries: expected " + std::to_string(rows_ * cols_) +
                                                  ", got " + std::to_string(data_.size()));
  }
  if (!all_finite()) throw Error(ErrorKind::DegenerateInput, "matrix entries must be finite");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorKind::DimensionMismatch, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  if (!all_finite()) throw Error(ErrorKind::DegenerateInput, "matrix entries must be finite");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
  Matrix m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Matrix Matrix::from_columns(const std::vector<Vector>& columns) {
  if (columns.empty()) return {};
  const std::size_t rows = columns.front().size();
  Matrix m(rows, columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (columns[c].size() != rows) throw Error(ErrorKind::DimensionMismatch, "columns of unequal length");
    for (std::size_t r = 0; r < rows; ++r) m(r, c) = columns[c][r];
  }
  return m;
}

Vector Matrix::column(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw Error(ErrorKind::DimensionMismatch, "matrix +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (rows_ != other.rows_ || cols_ != other.cols_) throw Error(ErrorKind::DimensionMismatch, "matrix -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
  for (double& x : data_) x *= s;
  return *this;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorKind::DimensionMismatch, "matrix product");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Vector operator*(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw Error(ErrorKind::DimensionMismatch, "matrix-vector product");
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
  return out;
}

Vector transpose_times(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) throw Error(ErrorKind::DimensionMismatch, "transpose-vector product");
  Vector out(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += r[j] * x[i];
  }
  return out;
}

Matrix outer(std::span<const double> u, std::span<const double> v) {
  Matrix out(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out(i, j) = u[i] * v[j];
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

double frobenius_norm(const Matrix& m) noexcept { return norm2(m.data()); }

double max_abs(const Matrix& m) noexcept {
  double best = 0.0;
  for (double x : m.data()) best = std::max(best, std::abs(x));
  return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw Error(ErrorKind::DimensionMismatch, "max_abs_diff");
  double best = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) best = std::max(best, std::abs(a.data()[i] - b.data()[i]));
  return best;
}

double trace(const Matrix& m) {
  if (m.rows() != m.cols()) throw Error(ErrorKind::DimensionMismatch, "trace of non-square matrix");
  double s = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) s += m(i, i);
  return s;
}

namespace {

// Two passes of modified Gram-Schmidt against an orthonormal basis.
void orthogonalize_against(Vector& v, const std::vector<Vector>& basis) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& qv : basis) {
      const double proj = dot(qv, v);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * qv[i];
    }
  }
}

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols()) throw Error(ErrorKind::DimensionMismatch, std::string(what) + ": matrix must be square");
}

}  // namespace

Matrix gram_schmidt_orthonormalize(const Matrix& a, double residual_tol) {
  if (a.cols() > a.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "gram_schmidt: more columns than rows");
  }
  std::vector<Vector> basis;
  basis.reserve(a.cols());
  for (std::size_t c = 0; c < a.cols(); ++c) {
    Vector v = a.column(c);
    orthogonalize_against(v, basis);
    const double nv = norm2(v);
    if (!(nv > residual_tol)) {
      throw Error(ErrorKind::DegenerateInput,
                  "gram_schmidt: column " + std::to_string(c) + " is numerically dependent");
    }
    for (double& x : v) x /= nv;
    basis.push_back(std::move(v));
  }
  if (basis.empty()) return Matrix(a.rows(), 0);
  return Matrix::from_columns(basis);
}

Matrix orthonormal_complement(const Matrix& b) {
  const std::size_t d = b.rows();
  const std::size_t k = b.cols();
  if (k > d) throw Error(ErrorKind::DimensionMismatch, "orthonormal_complement: more columns than rows");
  if (max_abs_diff(b.transpose() * b, Matrix::identity(k)) > tol::kOrthonormalInput) {
    throw Error(ErrorKind::DegenerateInput, "orthonormal_complement: input is not column-orthonormal");
  }
  std::vector<Vector> basis;
  for (std::size_t c = 0; c < k; ++c) basis.push_back(b.column(c));

  std::vector<bool> used(d, false);
  std::vector<Vector> complement;
  while (basis.size() < d) {
    double best_norm = -1.0;
    std::size_t best_idx = 0;
    Vector best;
    for (std::size_t j = 0; j < d; ++j) {
      if (used[j]) continue;
      Vector e(d, 0.0);
      e[j] = 1.0;
      orthogonalize_against(e, basis);
      const double ne = norm2(e);
      if (ne > best_norm) {
        best_norm = ne;
        best_idx = j;
        best = std::move(e);
      }
    }
    if (best_norm <= tol::kComplementDrop) {
      throw Error(ErrorKind::DegenerateInput, "orthonormal_complement: ran out of independent directions");
    }
    used[best_idx] = true;
    for (double& x : best) x /= best_norm;
    basis.push_back(best);
    complement.push_back(std::move(best));
  }
  if (complement.empty()) return Matrix(d, 0);
  return Matrix::from_columns(complement);
}

SymmetricEigen symmetric_eig(const Matrix& s) {
  require_square(s, "symmetric_eig");
  const std::size_t m = s.rows();
  if (m > 64) throw Error(ErrorKind::OutOfRange, "symmetric_eig: dimension above 64");
  const double scale = std::max(1.0, max_abs(s));
  if (max_abs_diff(s, s.transpose()) > tol::kSymmetry * scale) {
    throw Error(ErrorKind::DegenerateInput, "symmetric_eig: matrix is not symmetric");
  }

  Matrix a = s;
  Matrix v = Matrix::identity(m);
  const double total = frobenius_norm(a);

  auto off_diagonal = [&] {
    double acc = 0.0;
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t q = 0; q < m; ++q)
        if (p != q) acc += a(p, q) * a(p, q);
    return std::sqrt(acc);
  };

  bool converged = off_diagonal() <= tol::kJacobiOffDiag * total;
  for (int sweep = 0; sweep < tol::kJacobiMaxSweeps && !converged; ++sweep) {
    for (std::size_t p = 0; p + 1 < m; ++p) {
      for (std::size_t q = p + 1; q < m; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (std::size_t k = 0; k < m; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (std::size_t k = 0; k < m; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
    converged = off_diagonal() <= tol::kJacobiOffDiag * total;
  }
  if (!converged) throw Error(ErrorKind::NoConvergence, "symmetric_eig: Jacobi sweeps exhausted");

  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SymmetricEigen out{Vector(m), Matrix(m, m)};
  for (std::size_t c = 0; c < m; ++c) {
    out.values[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < m; ++r) out.vectors(r, c) = v(r, order[c]);
  }
  return out;
}

namespace {

// Power iteration on M^T M from `start`; returns the converged eigenvalue of M^T M.
double power_iterate(const Matrix& m, Vector v, int iters, double rel_tol) {
  double nv = norm2(v);
  if (nv == 0.0) return 0.0;
  for (double& x : v) x /= nv;
  double lambda = 0.0;
  for (int it = 0; it < iters; ++it) {
    const Vector mv = m * v;
    const double next_lambda = dot(mv, mv);
    Vector w = transpose_times(m, mv);
    const double nw = norm2(w);
    if (nw == 0.0) return next_lambda;
    for (std::size_t i = 0; i < w.size(); ++i) v[i] = w[i] / nw;
    if (std::abs(next_lambda - lambda) <= rel_tol * next_lambda) return next_lambda;
    lambda = next_lambda;
  }
  return lambda;
}

}  // namespace

double spectral_norm(const Matrix& m, int iters, double rel_tol) {
  const std::size_t d = m.cols();
  if (d == 0 || m.rows() == 0) return 0.0;
  if (max_abs(m) == 0.0) return 0.0;
  Vector start(d, 1.0 / std::sqrt(static_cast<double>(d)));
  double lambda = power_iterate(m, start, iters, rel_tol);
  // Restart once from a seeded random vector in case the deterministic start
  // was orthogonal to the top right-singular vector.
  RngStream rng(tol::kPowerRestartSeed);
  Vector perturbed(d);
  for (double& x : perturbed) x = rng.normal();
  lambda = std::max(lambda, power_iterate(m, perturbed, iters, rel_tol));
  return std::sqrt(std::max(lambda, 0.0));
}

double min_singular_value(const Matrix& m) {
  const SymmetricEigen eig = symmetric_eig(m.transpose() * m);
  return std::sqrt(std::max(eig.values.back(), 0.0));
}

Matrix psd_sqrt(const Matrix& s) {
  const SymmetricEigen eig = symmetric_eig(s);
  const std::size_t d = s.rows();
  Matrix r(d, d);
  for (std::size_t c = 0; c < d; ++c) {
    double lambda = eig.values[c];
    if (lambda < -tol::kPsdReject) {
      throw Error(ErrorKind::DegenerateInput, "psd_sqrt: matrix has a negative eigenvalue");
    }
    const double root = std::sqrt(std::max(lambda, 0.0));
    for (std::size_t i = 0; i < d; ++i) {
      const double vi = eig.vectors(i, c) * root;
      for (std::size_t j = 0; j < d; ++j) r(i, j) += vi * eig.vectors(j, c);
    }
  }
  // Symmetrize away rounding so the result is exactly symmetric.
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double avg = 0.5 * (r(i, j) + r(j, i));
      r(i, j) = avg;
      r(j, i) = avg;
    }
  return r;
}

}  // namespace icl
