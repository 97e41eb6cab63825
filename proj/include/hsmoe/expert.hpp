#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "hsmoe/dist.hpp"

namespace hsmoe {

struct Observation {
  Eigen::VectorXd x;
  double y = 0.0;
};

/// Normal-inverse-gamma sufficient statistics of one Gaussian linear expert:
///   beta | sigma2 ~ N(mean, sigma2 * precision^-1),  sigma2 ~ IG(shape, scale).
/// The expert parameters themselves are integrated out.
struct NIGStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;
  double shape = 1.0;
  double scale = 1.0;

  std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
};

/// Lower bound applied to the IG scale when rounding drives it nonpositive.
inline constexpr double kScaleFloor = 1e-300;

/// Prior with covariance factor V0; stores precision = V0^-1. Throws
/// ConfigError if V0 is not symmetric positive definite.
NIGStats nig_prior(const Eigen::VectorXd& m0, const Eigen::MatrixXd& V0,
                   double a0, double b0);

/// Student-t one-step predictive at covariate x.
StudentTParams predictive_params(const NIGStats& s, const Eigen::VectorXd& x);

/// Rank-one conjugate update with one observation. If the updated scale is
/// not positive after rounding it is clamped to kScaleFloor and
/// `*clamp_count` (when given) is incremented.
NIGStats nig_update(const NIGStats& s, const Observation& obs,
                    std::uint64_t* clamp_count = nullptr);

double nig_log_predictive(const NIGStats& s, const Observation& obs);

}  // namespace hsmoe
