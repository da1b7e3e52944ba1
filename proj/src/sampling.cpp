#include "icl/sampling.hpp"

#include <cmath>
#include <string>

#include "icl/error.hpp"

namespace icl {

namespace {

// Rescales v to unit length; one re-draw is allowed for an exactly-zero draw.
template <typename Draw>
Vector normalized_draw(Draw&& draw) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    Vector v = draw();
    const double nv = norm2(v);
    if (nv > 0.0 && std::isfinite(nv)) {
      for (double& x : v) x /= nv;
      return v;
    }
  }
  throw Error(ErrorKind::DegenerateInput, "sampled a zero vector twice before normalization");
}

}  // namespace

CovariateDist CovariateDist::uniform_sphere(std::size_t d) {
  if (d == 0) throw Error(ErrorKind::DegenerateInput, "uniform_sphere: d must be positive");
  return CovariateDist(UniformSphere{d});
}

CovariateDist CovariateDist::anisotropic_sphere(Vector scale) {
  if (scale.empty()) throw Error(ErrorKind::DegenerateInput, "anisotropic_sphere: empty scale");
  for (double s : scale) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw Error(ErrorKind::DegenerateInput, "anisotropic_sphere: scale entries must be positive");
    }
  }
  return CovariateDist(AnisotropicSphere{std::move(scale)});
}

CovariateDist CovariateDist::anisotropic_default(std::size_t d) {
  Vector scale(d);
  for (std::size_t i = 0; i < d; ++i) scale[i] = static_cast<double>(i + 1);
  return anisotropic_sphere(std::move(scale));
}

CovariateDist CovariateDist::shaped_sphere(Matrix shape) {
  if (shape.rows() != shape.cols() || shape.rows() == 0) {
    throw Error(ErrorKind::DimensionMismatch, "shaped_sphere: shape must be square");
  }
  const SymmetricEigen eig = symmetric_eig(shape.transpose() * shape);
  if (!(eig.values.back() > 1e-12 * eig.values.front())) {
    throw Error(ErrorKind::DegenerateInput, "shaped_sphere: shape matrix is rank deficient");
  }
  return CovariateDist(ShapedSphere{std::move(shape)});
}

CovariateDist CovariateDist::low_rank_latent(const Matrix& basis, double c_u, double c_v) {
  if (c_u == 0.0) throw Error(ErrorKind::DegenerateInput, "low_rank_latent: c_u must be nonzero");
  if (basis.cols() == 0 || basis.cols() >= basis.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "low_rank_latent: need 1 <= k < d");
  }
  Matrix complement = orthonormal_complement(basis);
  return CovariateDist(LowRankLatent{basis, std::move(complement), c_u, c_v});
}

std::size_t CovariateDist::dim() const {
  struct Visitor {
    std::size_t operator()(const UniformSphere& u) const { return u.d; }
    std::size_t operator()(const AnisotropicSphere& a) const { return a.scale.size(); }
    std::size_t operator()(const ShapedSphere& s) const { return s.shape.rows(); }
    std::size_t operator()(const LowRankLatent& l) const { return l.basis.rows(); }
  };
  return std::visit(Visitor{}, kind_);
}

const char* CovariateDist::name() const {
  struct Visitor {
    const char* operator()(const UniformSphere&) const { return "uniform"; }
    const char* operator()(const AnisotropicSphere&) const { return "anisotropic"; }
    const char* operator()(const ShapedSphere&) const { return "shaped"; }
    const char* operator()(const LowRankLatent&) const { return "lowrank-latent"; }
  };
  return std::visit(Visitor{}, kind_);
}

Vector sample_gaussian(std::size_t d, RngStream& rng) {
  Vector v(d);
  for (double& x : v) x = rng.normal();
  return v;
}

Vector sample_unit_sphere(std::size_t d, RngStream& rng) {
  return normalized_draw([&] { return sample_gaussian(d, rng); });
}

Vector sample_covariate(const CovariateDist& dist, RngStream& rng) {
  struct Visitor {
    RngStream& rng;
    Vector operator()(const UniformSphere& u) const { return sample_unit_sphere(u.d, rng); }
    Vector operator()(const AnisotropicSphere& a) const {
      return normalized_draw([&] {
        Vector g = sample_gaussian(a.scale.size(), rng);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= std::sqrt(a.scale[i]);
        return g;
      });
    }
    Vector operator()(const ShapedSphere& s) const {
      return normalized_draw([&] { return s.shape * sample_gaussian(s.shape.cols(), rng); });
    }
    Vector operator()(const LowRankLatent& l) const {
      const Vector u = sample_unit_sphere(l.basis.cols(), rng);
      const Vector v = sample_unit_sphere(l.complement.cols(), rng);
      Vector x = l.basis * u;
      const Vector xv = l.complement * v;
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = l.c_u * x[i] + l.c_v * xv[i];
      return x;
    }
  };
  return std::visit(Visitor{rng}, dist.kind());
}

double sample_noise(double sigma, RngStream& rng) {
  if (sigma < 0.0) throw Error(ErrorKind::DegenerateInput, "sample_noise: sigma must be nonnegative");
  // The draw is consumed even for sigma = 0 so the stream layout does not
  // depend on the noise level.
  const double z = rng.normal();
  return sigma == 0.0 ? 0.0 : sigma * z;
}

Subspace make_random_subspace(std::size_t d, std::size_t k, RngStream& rng) {
  if (k < 1 || k >= d) {
    throw Error(ErrorKind::DegenerateInput,
                "make_random_subspace: need 1 <= k < d, got k=" + std::to_string(k) + ", d=" + std::to_string(d));
  }
  Matrix g(d, k);
  for (double& x : g.data()) x = rng.normal();
  Matrix basis = gram_schmidt_orthonormalize(g);
  Matrix complement = orthonormal_complement(basis);
  return {std::move(basis), std::move(complement)};
}

Matrix make_shaping_matrix(std::size_t d, RngStream& rng) {
  Matrix g(d, d);
  for (double& x : g.data()) x = rng.normal();
  return psd_sqrt(g.transpose() * g);
}

Matrix random_orthogonal(std::size_t d, RngStream& rng) {
  Matrix g(d, d);
  for (double& x : g.data()) x = rng.normal();
  // Gram-Schmidt on Gaussian columns is Haar distributed (the implicit R has
  // a positive diagonal).
  return gram_schmidt_orthonormalize(g);
}

}  // namespace icl
