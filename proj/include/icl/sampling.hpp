#pragma once

#include <cstddef>
#include <utility>
#include <variant>

#include "icl/linalg.hpp"
#include "icl/rng.hpp"

namespace icl {

// Uniform on the unit sphere S^{d-1}.
struct UniformSphere {
  std::size_t d = 1;
};

// x = S^{1/2} g / |S^{1/2} g| for g ~ N(0, I) and S = diag(scale).
struct AnisotropicSphere {
  Vector scale;
};

// x = J g / |J g| for g ~ N(0, I).
struct ShapedSphere {
  Matrix shape;
};

// x = c_u B u + c_v B_perp v with u, v uniform on their spheres.
struct LowRankLatent {
  Matrix basis;       // d x k, column-orthonormal
  Matrix complement;  // d x (d - k)
  double c_u = 1.0;
  double c_v = 0.0;
};

class CovariateDist {
 public:
  using Kind = std::variant<UniformSphere, AnisotropicSphere, ShapedSphere, LowRankLatent>;

  CovariateDist() : kind_(UniformSphere{1}) {}

  static CovariateDist uniform_sphere(std::size_t d);
  static CovariateDist anisotropic_sphere(Vector scale);
  // diag(1, 2, ..., d): the default non-isotropic sphere.
  static CovariateDist anisotropic_default(std::size_t d);
  static CovariateDist shaped_sphere(Matrix shape);
  static CovariateDist low_rank_latent(const Matrix& basis, double c_u, double c_v);

  std::size_t dim() const;
  const Kind& kind() const noexcept { return kind_; }
  const char* name() const;

 private:
  explicit CovariateDist(Kind kind) : kind_(std::move(kind)) {}
  Kind kind_;
};

Vector sample_gaussian(std::size_t d, RngStream& rng);
Vector sample_unit_sphere(std::size_t d, RngStream& rng);
Vector sample_covariate(const CovariateDist& dist, RngStream& rng);
double sample_noise(double sigma, RngStream& rng);

struct Subspace {
  Matrix basis;       // d x k
  Matrix complement;  // d x (d - k)
};

// Gaussian d x k orthonormalized; requires 1 <= k < d.
Subspace make_random_subspace(std::size_t d, std::size_t k, RngStream& rng);

// J = (G^T G)^{1/2} for Gaussian G: the shaping matrix of the low-rank runs.
Matrix make_shaping_matrix(std::size_t d, RngStream& rng);

// Haar-random orthogonal matrix (Gram-Schmidt of a Gaussian matrix).
Matrix random_orthogonal(std::size_t d, RngStream& rng);

}  // namespace icl
