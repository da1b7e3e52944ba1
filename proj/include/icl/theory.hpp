#pragma once

// Numerical checks of the analytic objects behind the attention-window
// results: kernel sums g_p(r), spherical caps, the discrete incomplete gamma
// sum, the co-sorted ratio inequality, and bandwidth sweeps with exponent fits.

#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "icl/linalg.hpp"
#include "icl/rng.hpp"
#include "icl/sampling.hpp"
#include "icl/tasks.hpp"

namespace icl {

struct BoundCheck {
  std::string quantity;
  double measured = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool pass = false;

  static BoundCheck make(std::string quantity, double measured, double lower, double upper);
};

// Constant-factor band standing in for unstated Theta constants.
inline constexpr double kThetaBand = 64.0;
// Monte Carlo slack (in standard deviations) for cap-measure checks.
inline constexpr double kCapSlackSigmas = 4.0;

// sum_i |x_i - x|^p exp(-r |x_i - x|^2)
double g_p(const Matrix& x_rows, std::span<const double> x, double p, double r);

// r^{-d/2} above the regime boundary r = (d + sqrt d)/2, exp(-2r) below.
double g_regime_reference(std::size_t d, double r);

// Median of g_0(r)/n over `trials` independent uniform-sphere draws, checked
// against [reference/band, reference*band]. Trial t uses rng.derive(t).
BoundCheck check_g_concentration(std::size_t d, std::size_t n, double r, std::size_t trials, const RngStream& rng,
                                 double band = kThetaBand);

// Fraction of uniform-sphere samples inside the cap {x : x^T e_1 > 1 - eps}.
double cap_measure_mc(std::size_t d, double eps, std::size_t samples, const RngStream& rng);

// (lower, upper) = ((2e - e^2)^{(d-1)/2} / sqrt(2 d pi), (2e - e^2)^{(d-1)/2}).
std::pair<double, double> cap_measure_bounds(std::size_t d, double eps);

// cap_measure_mc against cap_measure_bounds widened by kCapSlackSigmas
// binomial standard deviations.
BoundCheck check_cap_measure(std::size_t d, double eps, std::size_t samples, const RngStream& rng);

// ln Gamma(x) for x > 0: Stirling series with five correction terms after
// shifting the argument to at least 15.
double log_gamma(double x);

// sum_{i=1}^m i^d e^{-alpha i}, accumulated in log space.
double discrete_gamma(double d, double alpha, std::size_t m);

// Regime boundary of the discrete gamma bracket: m < d + sqrt(d) is "small".
double discrete_gamma_threshold(double d);

// The two-regime bracket for discrete_gamma. OutOfRange unless d > 5 and
// 1 <= alpha <= 2.
BoundCheck discrete_gamma_bounds(double d, double alpha, std::size_t m);

struct RearrangementCheck {
  double lhs = 0.0;  // sum a^2 / (sum a)^2
  double rhs = 0.0;  // sum a^2 b^2 / (sum a b)^2
  bool tie = false;  // sides equal to rounding (b constant)

  bool strict() const noexcept { return lhs < rhs && !tie; }
  BoundCheck as_bound_check() const;
};

// PreconditionViolated unless a, b are positive, equally long and co-sorted
// (a_i > a_j implies b_i >= b_j and vice versa).
RearrangementCheck rearrangement_check(std::span<const double> a, std::span<const double> b);

struct SweepResult {
  Vector w_grid;
  Vector loss_mean;
  Vector loss_std_error;
  Vector bias;
  Vector noise;
  std::size_t argmin_index = 0;
  double w_star = 0.0;
  double lambda = 0.0;  // n L^2 / sigma^2
  bool boundary_minimum = false;
};

// Number of paired standard errors within which two sweep points count as
// statistically indistinguishable.
inline constexpr double kSweepTieSigmas = 1.0;

// Log-spaced grid, `points` values from lo to hi inclusive.
Vector log_grid(double lo, double hi, std::size_t points);

// Softmax loss at M = w I over one pooled set of contexts reused for every w
// (common random numbers). The argmin is the smallest w whose paired loss
// difference to the best point is within kSweepTieSigmas standard errors.
SweepResult bandwidth_sweep(const TaskClass& task_class, const CovariateDist& dist, std::size_t n, double sigma,
                            std::span<const double> w_grid, std::size_t contexts_per_point, const RngStream& rng,
                            std::size_t queries = 1);

// Least-squares slope of log w* against log Lambda.
double exponent_fit(std::span<const double> lambdas, std::span<const double> w_stars);

}  // namespace icl
