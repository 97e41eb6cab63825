#include "hsmoe/expert.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "hsmoe/error.hpp"

namespace hsmoe {

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_precision(const NIGStats& s, const char* where) {
  Eigen::LLT<Eigen::MatrixXd> llt(s.precision);
  if (llt.info() != Eigen::Success) {
    throw NumericalError(std::string(where) + ": precision is not positive definite");
  }
  return llt;
}

void check_dims(const NIGStats& s, const Eigen::VectorXd& x, const char* where) {
  if (x.size() != s.mean.size()) {
    throw PreconditionError(std::string(where) + ": covariate dimension mismatch");
  }
}

}  // namespace

NIGStats nig_prior(const Eigen::VectorXd& m0, const Eigen::MatrixXd& V0, double a0,
                   double b0) {
  const Eigen::Index d = m0.size();
  if (V0.rows() != d || V0.cols() != d) {
    throw ConfigError("nig_prior: V0 must be d x d");
  }
  if (!(a0 > 0.0) || !(b0 > 0.0)) {
    throw ConfigError("nig_prior: a0 and b0 must be positive");
  }
  if (!V0.isApprox(V0.transpose(), 1e-12)) {
    throw ConfigError("nig_prior: V0 is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(V0);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("nig_prior: V0 is not positive definite");
  }
  NIGStats s;
  s.mean = m0;
  s.precision = llt.solve(Eigen::MatrixXd::Identity(d, d));
  s.precision = 0.5 * (s.precision + s.precision.transpose()).eval();
  s.shape = a0;
  s.scale = b0;
  return s;
}

StudentTParams predictive_params(const NIGStats& s, const Eigen::VectorXd& x) {
  check_dims(s, x, "predictive_params");
  const auto llt = factor_precision(s, "predictive_params");
  // x' P^-1 x = |L^-1 x|^2 with P = L L'.
  const double quad = llt.matrixL().solve(x).squaredNorm();
  return {2.0 * s.shape, x.dot(s.mean), s.scale / s.shape * (1.0 + quad)};
}

NIGStats nig_update(const NIGStats& s, const Observation& obs,
                    std::uint64_t* clamp_count) {
  check_dims(s, obs.x, "nig_update");
  NIGStats out;
  out.precision = s.precision;
  out.precision.noalias() += obs.x * obs.x.transpose();
  out.precision = 0.5 * (out.precision + out.precision.transpose()).eval();

  const Eigen::VectorXd prior_h = s.precision * s.mean;
  Eigen::LLT<Eigen::MatrixXd> llt(out.precision);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("nig_update: updated precision is not positive definite");
  }
  const Eigen::VectorXd h = prior_h + obs.x * obs.y;
  out.mean = llt.solve(h);
  out.shape = s.shape + 0.5;
  // m' P' m' = h' m' since P' m' = h.
  out.scale = s.scale + 0.5 * (obs.y * obs.y + s.mean.dot(prior_h) - out.mean.dot(h));
  if (!(out.scale > 0.0)) {
    out.scale = kScaleFloor;
    if (clamp_count != nullptr) ++*clamp_count;
  }
  return out;
}

double nig_log_predictive(const NIGStats& s, const Observation& obs) {
  return student_t_logpdf(obs.y, predictive_params(s, obs.x));
}

}  // namespace hsmoe
