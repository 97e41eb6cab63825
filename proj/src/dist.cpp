#include "hsmoe/dist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Cholesky>

#include "hsmoe/error.hpp"

namespace hsmoe {

double student_t_logpdf(double y, const StudentTParams& p) {
  if (!(p.nu > 0.0) || !(p.s2 > 0.0)) {
    throw PreconditionError("student_t_logpdf: nu and s2 must be positive");
  }
  const double z2 = (y - p.mu) * (y - p.mu) / (p.nu * p.s2);
  return std::lgamma(0.5 * (p.nu + 1.0)) - std::lgamma(0.5 * p.nu) -
         0.5 * std::log(p.nu * std::numbers::pi * p.s2) -
         0.5 * (p.nu + 1.0) * std::log1p(z2);
}

double sample_inverse_gamma(double shape, double scale, RngStream& rng) {
  if (!(shape > 0.0) || !(scale > 0.0)) {
    throw PreconditionError("sample_inverse_gamma: shape and scale must be positive");
  }
  // Gamma draws can underflow to zero for tiny shapes; redraw in that case
  // so the result stays finite.
  double g = 0.0;
  do {
    g = rng.gamma(shape);
  } while (!(g > 0.0));
  return scale / g;
}

Eigen::VectorXd sample_gaussian_from_precision(const Eigen::VectorXd& h,
                                               const Eigen::MatrixXd& precision,
                                               RngStream& rng) {
  const Eigen::Index d = h.size();
  if (precision.rows() != d || precision.cols() != d) {
    throw PreconditionError("sample_gaussian_from_precision: dimension mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("sample_gaussian_from_precision: precision is not positive definite");
  }
  Eigen::VectorXd z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = rng.normal();
  // precision = L L'; mean = L'^-1 L^-1 h, noise = L'^-1 z has covariance
  // precision^-1.
  Eigen::VectorXd draw = llt.matrixL().solve(h);
  draw += z;
  llt.matrixU().solveInPlace(draw);
  if (!draw.allFinite()) {
    throw NumericalError("sample_gaussian_from_precision: non-finite draw");
  }
  return draw;
}

std::vector<std::size_t> resample_indices(std::span<const double> weights,
                                          std::size_t n_out, ResampleScheme scheme,
                                          RngStream& rng) {
  if (weights.empty()) {
    throw PreconditionError("resample_indices: empty weight vector");
  }
  std::vector<double> cumulative(weights.size());
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw PreconditionError("resample_indices: weights must be finite and nonnegative");
    }
    total += weights[i];
    cumulative[i] = total;
  }
  if (!(total > 0.0)) {
    throw DegeneracyError("resample_indices: all weights are zero");
  }

  std::vector<std::size_t> out(n_out);
  const auto locate = [&](double u) {
    // First index whose cumulative weight exceeds u; zero-weight entries
    // share their predecessor's cumulative value and are never chosen.
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    return static_cast<std::size_t>(it - cumulative.begin());
  };

  switch (scheme) {
    case ResampleScheme::multinomial:
      for (auto& idx : out) idx = locate(rng.uniform() * total);
      break;
    case ResampleScheme::systematic: {
      const double spacing = total / static_cast<double>(n_out);
      const double offset = rng.uniform() * spacing;
      std::size_t i = 0;
      for (std::size_t j = 0; j < n_out; ++j) {
        const double u = offset + static_cast<double>(j) * spacing;
        while (i + 1 < cumulative.size() && cumulative[i] <= u) ++i;
        out[j] = i;
      }
      break;
    }
  }
  return out;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (const double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

std::size_t sample_from_log_weights(std::span<const double> log_weights,
                                    RngStream& rng) {
  if (log_weights.empty()) {
    throw PreconditionError("sample_from_log_weights: empty input");
  }
  const double m = *std::max_element(log_weights.begin(), log_weights.end());
  if (!std::isfinite(m)) {
    throw DegeneracyError("sample_from_log_weights: no finite log weight");
  }
  std::vector<double> w(log_weights.size());
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    total += std::exp(log_weights[k] - m);
    w[k] = total;
  }
  const double u = rng.uniform() * total;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (u < w[k]) return k;
  }
  // u == total after rounding: last positive entry.
  for (std::size_t k = w.size(); k-- > 0;) {
    if (std::isfinite(log_weights[k])) return k;
  }
  return w.size() - 1;
}

}  // namespace hsmoe
