#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "hsmoe/rng.hpp"

namespace hsmoe {

// Stick-breaking logistic gate over K experts with K-1 binary sticks
// eta_k(x) = x' phi_k. Expert and stick indices are 0-based throughout.

/// Gaussian posterior accumulators for one stick's coefficients. The prior
/// precision from the horseshoe scales is kept out of `data_precision`; the
/// posterior precision is prior + data_precision.
struct StickState {
  Eigen::MatrixXd data_precision;
  Eigen::VectorXd h;
  Eigen::VectorXd phi;
};

/// Horseshoe scales in inverse-gamma mixture form. `lambda2` and `nu` are
/// (K-1) x d; row k belongs to stick k.
struct HorseshoeState {
  double tau2 = 1.0;
  double xi = 1.0;
  Eigen::MatrixXd lambda2;
  Eigen::MatrixXd nu;
};

struct GateState {
  std::vector<StickState> sticks;
  HorseshoeState hs;

  std::size_t n_sticks() const { return sticks.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(hs.lambda2.cols()); }
  /// Current phi draws stacked as rows, (K-1) x d.
  Eigen::MatrixXd phi_matrix() const;
  /// Diagonal of the prior precision (tau2 * diag(lambda2_k))^-1 of stick k.
  Eigen::VectorXd prior_precision_diag(std::size_t k) const;
  /// Full posterior precision of stick k: prior + accumulated data.
  Eigen::MatrixXd posterior_precision(std::size_t k) const;
};

enum class PhiRefresh { sample, mean };

/// log P(z = k | x) for k = 0..K-1, where phi_all has one stick per row.
Eigen::VectorXd log_stick_probabilities(const Eigen::MatrixXd& phi_all,
                                        const Eigen::VectorXd& x);

/// exp of log_stick_probabilities; a point on the K-simplex.
Eigen::VectorXd stick_probabilities(const Eigen::MatrixXd& phi_all,
                                    const Eigen::VectorXd& x);

struct StickLabel {
  std::size_t stick;
  int label;

  friend bool operator==(const StickLabel&, const StickLabel&) = default;
};

/// Sticks visited by allocation z among K experts: (k, 1{z == k}) for
/// k = 0..min(z, K-2).
std::vector<StickLabel> visited_sticks(std::size_t z, std::size_t n_experts);

/// Draw omega ~ PG(1, x' phi) at the current phi and add omega x x' and
/// (label - 1/2) x to the accumulators. phi is left untouched.
void accumulate_polya_gamma(StickState& s, const Eigen::VectorXd& x, int label,
                            RngStream& rng);

/// Redraw phi from N(Lambda^-1 h, Lambda^-1) with Lambda = diag(prior) +
/// data_precision, or set it to the mean.
void refresh_phi(StickState& s, const Eigen::VectorXd& prior_precision_diag,
                 PhiRefresh policy, RngStream& rng);

/// One augmented update of a visited stick: accumulate, then refresh phi.
StickState pg_stick_update(StickState s, const Eigen::VectorXd& prior_precision_diag,
                           const Eigen::VectorXd& x, int label, PhiRefresh policy,
                           RngStream& rng);

/// Scales drawn from the prior: nu, xi ~ IG(1/2, 1), lambda2 ~ IG(1/2, 1/nu),
/// tau2 ~ IG(1/2, 1/xi), which makes lambda and tau half-Cauchy.
HorseshoeState sample_horseshoe_prior(std::size_t n_sticks, std::size_t dim,
                                      RngStream& rng);

/// Gate initialised from its prior: horseshoe scales, empty accumulators,
/// phi_k ~ N(0, tau2 diag(lambda2_k)).
GateState gate_prior(std::size_t n_sticks, std::size_t dim, RngStream& rng);

/// One Gibbs sweep over (lambda2, nu, tau2, xi) conditional on the current
/// phi draws. The prior precision used by later phi draws follows
/// automatically since it is derived from the scales.
GateState horseshoe_rejuvenate(GateState g, RngStream& rng);

}  // namespace hsmoe
