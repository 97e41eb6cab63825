#include "hsmoe/gate.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>

#include "hsmoe/dist.hpp"
#include "hsmoe/error.hpp"

namespace hsmoe {

namespace {

// log sigma(u) and log(1 - sigma(u)) = log sigma(-u), stable for large |u|.
double log_sigmoid(double u) {
  return u >= 0.0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u));
}

}  // namespace

Eigen::MatrixXd GateState::phi_matrix() const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(sticks.size()),
                      static_cast<Eigen::Index>(dim()));
  for (std::size_t k = 0; k < sticks.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = sticks[k].phi.transpose();
  }
  return out;
}

Eigen::VectorXd GateState::prior_precision_diag(std::size_t k) const {
  return (hs.tau2 * hs.lambda2.row(static_cast<Eigen::Index>(k)).transpose().array())
      .inverse()
      .matrix();
}

Eigen::MatrixXd GateState::posterior_precision(std::size_t k) const {
  Eigen::MatrixXd lambda = sticks[k].data_precision;
  lambda.diagonal() += prior_precision_diag(k);
  return lambda;
}

Eigen::VectorXd log_stick_probabilities(const Eigen::MatrixXd& phi_all,
                                        const Eigen::VectorXd& x) {
  if (phi_all.rows() > 0 && phi_all.cols() != x.size()) {
    throw PreconditionError("stick_probabilities: dimension mismatch");
  }
  const Eigen::Index n_sticks = phi_all.rows();
  Eigen::VectorXd out(n_sticks + 1);
  double remaining = 0.0;  // log of the stick length still unbroken
  for (Eigen::Index k = 0; k < n_sticks; ++k) {
    const double eta = phi_all.row(k).dot(x);
    out[k] = remaining + log_sigmoid(eta);
    remaining += log_sigmoid(-eta);
  }
  out[n_sticks] = remaining;
  return out;
}

Eigen::VectorXd stick_probabilities(const Eigen::MatrixXd& phi_all,
                                    const Eigen::VectorXd& x) {
  return log_stick_probabilities(phi_all, x).array().exp().matrix();
}

std::vector<StickLabel> visited_sticks(std::size_t z, std::size_t n_experts) {
  if (n_experts == 0 || z >= n_experts) {
    throw PreconditionError("visited_sticks: allocation out of range");
  }
  std::vector<StickLabel> out;
  if (n_experts == 1) return out;
  const std::size_t last = std::min(z, n_experts - 2);
  out.reserve(last + 1);
  for (std::size_t k = 0; k <= last; ++k) out.push_back({k, k == z ? 1 : 0});
  return out;
}

void accumulate_polya_gamma(StickState& s, const Eigen::VectorXd& x, int label,
                            RngStream& rng) {
  if (label != 0 && label != 1) {
    throw PreconditionError("accumulate_polya_gamma: label must be 0 or 1");
  }
  if (x.size() != s.h.size()) {
    throw PreconditionError("accumulate_polya_gamma: dimension mismatch");
  }
  const double omega = sample_polya_gamma_1(x.dot(s.phi), rng);
  const double kappa = label - 0.5;
  s.data_precision.noalias() += omega * x * x.transpose();
  s.h += kappa * x;
}

void refresh_phi(StickState& s, const Eigen::VectorXd& prior_precision_diag,
                 PhiRefresh policy, RngStream& rng) {
  Eigen::MatrixXd lambda = s.data_precision;
  lambda.diagonal() += prior_precision_diag;
  switch (policy) {
    case PhiRefresh::sample:
      s.phi = sample_gaussian_from_precision(s.h, lambda, rng);
      break;
    case PhiRefresh::mean: {
      Eigen::LLT<Eigen::MatrixXd> llt(lambda);
      if (llt.info() != Eigen::Success) {
        throw NumericalError("refresh_phi: stick precision is not positive definite");
      }
      s.phi = llt.solve(s.h);
      break;
    }
  }
}

StickState pg_stick_update(StickState s, const Eigen::VectorXd& prior_precision_diag,
                           const Eigen::VectorXd& x, int label, PhiRefresh policy,
                           RngStream& rng) {
  accumulate_polya_gamma(s, x, label, rng);
  refresh_phi(s, prior_precision_diag, policy, rng);
  return s;
}

HorseshoeState sample_horseshoe_prior(std::size_t n_sticks, std::size_t dim,
                                      RngStream& rng) {
  HorseshoeState hs;
  const auto rows = static_cast<Eigen::Index>(n_sticks);
  const auto cols = static_cast<Eigen::Index>(dim);
  hs.nu.resize(rows, cols);
  hs.lambda2.resize(rows, cols);
  for (Eigen::Index k = 0; k < rows; ++k) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      hs.nu(k, j) = sample_inverse_gamma(0.5, 1.0, rng);
      hs.lambda2(k, j) = sample_inverse_gamma(0.5, 1.0 / hs.nu(k, j), rng);
    }
  }
  hs.xi = sample_inverse_gamma(0.5, 1.0, rng);
  hs.tau2 = sample_inverse_gamma(0.5, 1.0 / hs.xi, rng);
  return hs;
}

GateState gate_prior(std::size_t n_sticks, std::size_t dim, RngStream& rng) {
  GateState g;
  g.hs = sample_horseshoe_prior(n_sticks, dim, rng);
  const auto d = static_cast<Eigen::Index>(dim);
  g.sticks.resize(n_sticks);
  for (std::size_t k = 0; k < n_sticks; ++k) {
    StickState& s = g.sticks[k];
    s.data_precision = Eigen::MatrixXd::Zero(d, d);
    s.h = Eigen::VectorXd::Zero(d);
    const Eigen::VectorXd sd = g.prior_precision_diag(k).array().rsqrt().matrix();
    s.phi.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) s.phi[j] = sd[j] * rng.normal();
  }
  return g;
}

GateState horseshoe_rejuvenate(GateState g, RngStream& rng) {
  HorseshoeState& hs = g.hs;
  const Eigen::Index rows = hs.lambda2.rows();
  const Eigen::Index cols = hs.lambda2.cols();

  for (Eigen::Index k = 0; k < rows; ++k) {
    const Eigen::VectorXd& phi = g.sticks[static_cast<std::size_t>(k)].phi;
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double phi2 = phi[j] * phi[j];
      hs.lambda2(k, j) =
          sample_inverse_gamma(1.0, 1.0 / hs.nu(k, j) + phi2 / (2.0 * hs.tau2), rng);
      hs.nu(k, j) = sample_inverse_gamma(1.0, 1.0 + 1.0 / hs.lambda2(k, j), rng);
    }
  }

  double ss = 0.0;
  for (Eigen::Index k = 0; k < rows; ++k) {
    const Eigen::VectorXd& phi = g.sticks[static_cast<std::size_t>(k)].phi;
    for (Eigen::Index j = 0; j < cols; ++j) ss += phi[j] * phi[j] / (2.0 * hs.lambda2(k, j));
  }
  const double p = static_cast<double>(rows * cols);
  hs.tau2 = sample_inverse_gamma(0.5 * (p + 1.0), 1.0 / hs.xi + ss, rng);
  hs.xi = sample_inverse_gamma(1.0, 1.0 + 1.0 / hs.tau2, rng);
  return g;
}

}  // namespace hsmoe
