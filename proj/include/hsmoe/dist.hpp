#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hsmoe/rng.hpp"

namespace hsmoe {

/// Location-scale Student-t: nu degrees of freedom, location mu, squared
/// scale s2.
struct StudentTParams {
  double nu;
  double mu;
  double s2;
};

double student_t_logpdf(double y, const StudentTParams& p);

/// Draw from PG(1, c) with the exact alternating-series sampler (Devroye's
/// method as specialised to Polya-Gamma variables by Polson, Scott and
/// Windle).
double sample_polya_gamma_1(double c, RngStream& rng);

/// Inverse-gamma with density proportional to x^-(shape+1) exp(-scale/x).
double sample_inverse_gamma(double shape, double scale, RngStream& rng);

/// Draw from N(precision^-1 h, precision^-1) using a Cholesky factor of the
/// precision; no explicit inverse is formed. Throws NumericalError if the
/// precision is not positive definite.
Eigen::VectorXd sample_gaussian_from_precision(const Eigen::VectorXd& h,
                                               const Eigen::MatrixXd& precision,
                                               RngStream& rng);

enum class ResampleScheme { multinomial, systematic };

/// Draw `n_out` ancestor indices with probabilities proportional to the
/// (unnormalized, nonnegative) weights. Systematic resampling uses a single
/// uniform offset. Throws DegeneracyError when every weight is zero.
std::vector<std::size_t> resample_indices(std::span<const double> weights,
                                          std::size_t n_out,
                                          ResampleScheme scheme,
                                          RngStream& rng);

/// Categorical draw from unnormalized log-probabilities.
std::size_t sample_from_log_weights(std::span<const double> log_weights,
                                    RngStream& rng);

double log_sum_exp(std::span<const double> values);

inline std::span<const double> as_span(const Eigen::VectorXd& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

}  // namespace hsmoe
