#include "icl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "icl/error.hpp"
#include "icl/kernels.hpp"
#include "loop_errors.hpp"

namespace icl {

BoundCheck BoundCheck::make(std::string quantity, double measured, double lower, double upper) {
  return {std::move(quantity), measured, lower, upper, lower <= measured && measured <= upper};
}

double g_p(const Matrix& x_rows, std::span<const double> x, double p, double r) {
  if (x_rows.cols() != x.size()) throw Error(ErrorKind::DimensionMismatch, "g_p: dimension mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < x_rows.rows(); ++i) {
    const auto xi = x_rows.row(i);
    double dist_sq = 0.0;
    for (std::size_t k = 0; k < xi.size(); ++k) dist_sq += (xi[k] - x[k]) * (xi[k] - x[k]);
    const double dist_pow = p == 0.0 ? 1.0 : std::pow(std::sqrt(dist_sq), p);
    total += dist_pow * std::exp(-r * dist_sq);
  }
  return total;
}

double g_regime_reference(std::size_t d, double r) {
  const double dd = static_cast<double>(d);
  if (r >= (dd + std::sqrt(dd)) / 2.0) return std::pow(r, -dd / 2.0);
  return std::exp(-2.0 * r);
}

BoundCheck check_g_concentration(std::size_t d, std::size_t n, double r, std::size_t trials, const RngStream& rng,
                                 double band) {
  if (n < 32 || d < 2) throw Error(ErrorKind::PreconditionViolated, "check_g_concentration: need n >= 32, d >= 2");
  if (trials < 1) throw Error(ErrorKind::PreconditionViolated, "check_g_concentration: need trials >= 1");
  Vector ratios(trials);
  const auto total = static_cast<std::ptrdiff_t>(trials);
  detail::LoopErrors errors;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t t = 0; t < total; ++t) errors.run(t, [&] {
    RngStream stream = rng.derive(static_cast<std::uint64_t>(t));
    Matrix x_rows(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const Vector xi = sample_unit_sphere(d, stream);
      std::copy(xi.begin(), xi.end(), x_rows.row(i).begin());
    }
    const Vector x = sample_unit_sphere(d, stream);
    ratios[t] = g_p(x_rows, x, 0.0, r) / static_cast<double>(n);
  });
  errors.rethrow();
  std::sort(ratios.begin(), ratios.end());
  const double median = trials % 2 == 1 ? ratios[trials / 2] : 0.5 * (ratios[trials / 2 - 1] + ratios[trials / 2]);
  const double ref = g_regime_reference(d, r);
  return BoundCheck::make("g0_concentration_d" + std::to_string(d) + "_r" + std::to_string(r), median, ref / band,
                          ref * band);
}

double cap_measure_mc(std::size_t d, double eps, std::size_t samples, const RngStream& rng) {
  if (samples < 1000) throw Error(ErrorKind::PreconditionViolated, "cap_measure_mc: need at least 1000 samples");
  if (!(eps > 0.0 && eps <= 2.0)) throw Error(ErrorKind::OutOfRange, "cap_measure_mc: eps must be in (0, 2]");
  return static_cast<double>(kernels::cap_hits(d, eps, samples, rng)) / static_cast<double>(samples);
}

std::pair<double, double> cap_measure_bounds(std::size_t d, double eps) {
  if (!(eps > 0.0 && eps <= 1.0)) throw Error(ErrorKind::OutOfRange, "cap_measure_bounds: eps must be in (0, 1]");
  const double dd = static_cast<double>(d);
  const double upper = std::pow(2.0 * eps - eps * eps, (dd - 1.0) / 2.0);
  const double lower = upper / std::sqrt(2.0 * dd * std::numbers::pi);
  return {lower, upper};
}

BoundCheck check_cap_measure(std::size_t d, double eps, std::size_t samples, const RngStream& rng) {
  const double measured = cap_measure_mc(d, eps, samples, rng);
  const auto [lower, upper] = cap_measure_bounds(d, eps);
  // Binomial standard deviation at the nearer bound keeps the slack nonzero
  // even when the sample fraction is 0.
  const double p = std::clamp(measured, lower, std::min(upper, 1.0));
  const double sd = std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
  return BoundCheck::make("cap_d" + std::to_string(d) + "_eps" + std::to_string(eps), measured,
                          lower - kCapSlackSigmas * sd, upper + kCapSlackSigmas * sd);
}

double log_gamma(double x) {
  if (!(x > 0.0)) throw Error(ErrorKind::OutOfRange, "log_gamma: argument must be positive");
  double shift = 0.0;
  while (x < 15.0) {
    shift += std::log(x);
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  const double series =
      inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
  return (x - 0.5) * std::log(x) - x + 0.5 * std::log(2.0 * std::numbers::pi) + series - shift;
}

double discrete_gamma(double d, double alpha, std::size_t m) {
  if (m < 1) throw Error(ErrorKind::PreconditionViolated, "discrete_gamma: need m >= 1");
  auto log_term = [&](std::size_t i) {
    const double di = static_cast<double>(i);
    return d * std::log(di) - alpha * di;
  };
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i <= m; ++i) top = std::max(top, log_term(i));
  double acc = 0.0;
  for (std::size_t i = 1; i <= m; ++i) acc += std::exp(log_term(i) - top);
  return std::exp(top) * acc;
}

double discrete_gamma_threshold(double d) { return d + std::sqrt(d); }

BoundCheck discrete_gamma_bounds(double d, double alpha, std::size_t m) {
  if (!(d > 5.0) || !(alpha >= 1.0 && alpha <= 2.0)) {
    throw Error(ErrorKind::OutOfRange, "discrete_gamma_bounds: need d > 5 and 1 <= alpha <= 2");
  }
  const double value = discrete_gamma(d, alpha, m);
  const double mm = static_cast<double>(m);
  double lower = 0.0;
  double upper = 0.0;
  if (mm < discrete_gamma_threshold(d)) {
    const double base = std::exp(d * std::log(mm) - alpha * mm - 0.5);
    lower = base;
    upper = base * mm;
  } else {
    const double log_ratio = log_gamma(d + 1.0) - (d + 1.0) * std::log(alpha);
    lower = 0.5 * std::exp(log_ratio);
    upper = 2.0 * std::exp(log_ratio);
  }
  return BoundCheck::make("discrete_gamma_d" + std::to_string(d) + "_a" + std::to_string(alpha) + "_m" +
                              std::to_string(m),
                          value, lower, upper);
}

BoundCheck RearrangementCheck::as_bound_check() const {
  BoundCheck c = BoundCheck::make("rearrangement", lhs, 0.0, rhs);
  c.pass = strict();
  return c;
}

RearrangementCheck rearrangement_check(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(ErrorKind::PreconditionViolated, "rearrangement_check: sequences must be nonempty and equally long");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] > 0.0) || !(b[i] > 0.0)) {
      throw Error(ErrorKind::PreconditionViolated, "rearrangement_check: entries must be positive");
    }
    for (std::size_t j = 0; j < a.size(); ++j) {
      if ((a[i] > a[j] && b[i] < b[j]) || (b[i] > b[j] && a[i] < a[j])) {
        throw Error(ErrorKind::PreconditionViolated, "rearrangement_check: sequences are not co-sorted");
      }
    }
  }
  double sa = 0.0, sa2 = 0.0, sab = 0.0, sa2b2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sa += a[i];
    sa2 += a[i] * a[i];
    sab += a[i] * b[i];
    sa2b2 += a[i] * a[i] * b[i] * b[i];
  }
  RearrangementCheck out;
  out.lhs = sa2 / (sa * sa);
  out.rhs = sa2b2 / (sab * sab);
  const bool b_constant = std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; });
  out.tie = b_constant || std::abs(out.lhs - out.rhs) <= 1e-14 * std::abs(out.rhs);
  return out;
}

Vector log_grid(double lo, double hi, std::size_t points) {
  if (!(lo > 0.0) || !(hi > lo) || points < 2) {
    throw Error(ErrorKind::DegenerateInput, "log_grid: need 0 < lo < hi and at least 2 points");
  }
  Vector grid(points);
  const double step = std::log(hi / lo) / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i) grid[i] = lo * std::exp(step * static_cast<double>(i));
  grid.back() = hi;
  return grid;
}

SweepResult bandwidth_sweep(const TaskClass& task_class, const CovariateDist& dist, std::size_t n, double sigma,
                            std::span<const double> w_grid, std::size_t contexts_per_point, const RngStream& rng,
                            std::size_t queries) {
  if (w_grid.empty()) throw Error(ErrorKind::DegenerateInput, "bandwidth_sweep: empty grid");
  for (std::size_t i = 1; i < w_grid.size(); ++i) {
    if (!(w_grid[i] > w_grid[i - 1])) throw Error(ErrorKind::DegenerateInput, "bandwidth_sweep: grid must increase");
  }
  if (contexts_per_point < 100) {
    throw Error(ErrorKind::PreconditionViolated, "bandwidth_sweep: need at least 100 contexts per point");
  }
  const auto pool = kernels::make_context_pool(task_class, dist, n, queries, sigma, contexts_per_point, rng);
  const kernels::SweepTable table = kernels::sweep_table(pool, w_grid, sigma);

  SweepResult out;
  out.w_grid.assign(w_grid.begin(), w_grid.end());
  const std::size_t g = w_grid.size();
  const std::size_t c = contexts_per_point;
  out.loss_mean.resize(g);
  out.loss_std_error.resize(g);
  out.bias.resize(g);
  out.noise.resize(g);
  for (std::size_t k = 0; k < g; ++k) {
    const std::span<const double> loss_row(table.loss.data() + k * c, c);
    const std::span<const double> bias_row(table.bias.data() + k * c, c);
    const std::span<const double> noise_row(table.noise.data() + k * c, c);
    const LossEstimate est = summarize(loss_row);
    out.loss_mean[k] = est.mean;
    out.loss_std_error[k] = est.std_error;
    out.bias[k] = summarize(bias_row).mean;
    out.noise[k] = summarize(noise_row).mean;
  }

  const std::size_t best =
      static_cast<std::size_t>(std::min_element(out.loss_mean.begin(), out.loss_mean.end()) - out.loss_mean.begin());
  std::size_t chosen = best;
  Vector diff(c);
  for (std::size_t k = 0; k < best; ++k) {
    for (std::size_t i = 0; i < c; ++i) diff[i] = table.at(table.loss, k, i) - table.at(table.loss, best, i);
    const LossEstimate d = summarize(diff);
    if (d.mean <= kSweepTieSigmas * d.std_error) {
      chosen = k;
      break;
    }
  }
  out.argmin_index = chosen;
  out.w_star = w_grid[chosen];
  out.boundary_minimum = chosen == 0 || chosen + 1 == g;
  const double lipschitz = is_low_rank(task_class.kind) ? 1.0 : task_class.scale;
  out.lambda = sigma > 0.0 ? static_cast<double>(n) * lipschitz * lipschitz / (sigma * sigma)
                           : std::numeric_limits<double>::infinity();
  return out;
}

double exponent_fit(std::span<const double> lambdas, std::span<const double> w_stars) {
  if (lambdas.size() != w_stars.size() || lambdas.size() < 3) {
    throw Error(ErrorKind::DegenerateInput, "exponent_fit: need at least 3 paired points");
  }
  const std::size_t k = lambdas.size();
  Vector lx(k), ly(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (!(lambdas[i] > 0.0) || !(w_stars[i] > 0.0)) {
      throw Error(ErrorKind::DegenerateInput, "exponent_fit: values must be positive");
    }
    lx[i] = std::log(lambdas[i]);
    ly[i] = std::log(w_stars[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(k);
  my /= static_cast<double>(k);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  if (sxx == 0.0) throw Error(ErrorKind::DegenerateInput, "exponent_fit: all Lambda values are equal");
  return sxy / sxx;
}

}  // namespace icl
