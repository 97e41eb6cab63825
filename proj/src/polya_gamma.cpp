// Exact PG(1, c) sampler.
//
// PG(1, c) = J*(1, c/2) / 4 where J*(1, z) is the exponentially tilted
// Jacobi distribution. J* is drawn by Devroye's alternating-series method:
// the proposal is a mixture of a truncated inverse Gaussian on (0, t] and a
// truncated exponential on (t, inf), and acceptance is decided by the
// partial sums of the series representation of the target density, which
// alternate around the true value.

#include <cmath>
#include <numbers>

#include "hsmoe/dist.hpp"
#include "hsmoe/error.hpp"

namespace hsmoe {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTrunc = 0.64;  // switch point between the two density expansions

double log_normal_cdf(double x) { return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2)); }

// n-th coefficient of the series expansion of the J*(1) density at x,
// using the left expansion below kTrunc and the right one above.
double series_coefficient(int n, double x) {
  const double k = (n + 0.5) * kPi;
  if (x > kTrunc) return k * std::exp(-0.5 * k * k * x);
  if (x <= 0.0) return 0.0;
  const double log_a = -1.5 * (std::log(0.5 * kPi) + std::log(x)) + std::log(k) -
                       2.0 * (n + 0.5) * (n + 0.5) / x;
  return std::exp(log_a);
}

// Probability that the proposal takes the exponential (right) branch.
double right_branch_mass(double z) {
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double rt = std::sqrt(1.0 / kTrunc);
  const double b = rt * (kTrunc * z - 1.0);
  const double a = -rt * (kTrunc * z + 1.0);
  const double x0 = std::log(fz) + fz * kTrunc;
  const double xb = x0 - z + log_normal_cdf(b);
  const double xa = x0 + z + log_normal_cdf(a);
  const double q_over_p = 4.0 / kPi * (std::exp(xb) + std::exp(xa));
  return 1.0 / (1.0 + q_over_p);
}

// Inverse Gaussian IG(mu = 1/z, shape 1) truncated to (0, kTrunc].
double truncated_inverse_gaussian(double z, RngStream& rng) {
  if (1.0 / kTrunc > z) {
    // mu large: propose from the z = 0 case (a truncated Levy law, drawn
    // via a truncated normal) and accept with exp(-z^2 x / 2).
    for (;;) {
      double e1 = rng.exponential();
      double e2 = rng.exponential();
      while (e1 * e1 > 2.0 * e2 / kTrunc) {
        e1 = rng.exponential();
        e2 = rng.exponential();
      }
      const double r = 1.0 + e1 * kTrunc;
      const double x = kTrunc / (r * r);
      if (rng.uniform() <= std::exp(-0.5 * z * z * x)) return x;
    }
  }
  const double mu = 1.0 / z;
  for (;;) {
    double y = rng.normal();
    y *= y;
    const double mu_y = mu * y;
    double x = mu + 0.5 * mu * mu_y - 0.5 * mu * std::sqrt(4.0 * mu_y + mu_y * mu_y);
    if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    if (x <= kTrunc) return x;
  }
}

}  // namespace

double sample_polya_gamma_1(double c, RngStream& rng) {
  if (!std::isfinite(c)) {
    throw PreconditionError("sample_polya_gamma_1: tilt must be finite");
  }
  const double z = 0.5 * std::fabs(c);
  const double fz = 0.125 * kPi * kPi + 0.5 * z * z;
  const double p_right = right_branch_mass(z);

  for (;;) {
    const double x = rng.uniform() < p_right ? kTrunc + rng.exponential() / fz
                                             : truncated_inverse_gaussian(z, rng);
    double s = series_coefficient(0, x);
    const double u = rng.uniform() * s;
    for (int n = 1;; ++n) {
      if (n % 2 == 1) {
        s -= series_coefficient(n, x);
        if (u <= s) return 0.25 * x;
      } else {
        s += series_coefficient(n, x);
        if (u > s) break;
      }
    }
  }
}

}  // namespace hsmoe
