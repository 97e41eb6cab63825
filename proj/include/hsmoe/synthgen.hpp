#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hsmoe/expert.hpp"

namespace hsmoe {

/// Sparse softmax-gated mixture of Gaussian linear experts. Defaults are
/// the K = 10, s = 3 reference setup.
struct SynthConfig {
  std::size_t n_experts = 10;
  std::size_t n_active = 3;
  std::size_t n = 500;
  std::size_t dim = 5;
  double b_inactive = -3.0;
  double temperature = 0.70;
  double sigma2 = 0.25;
  /// Standard deviation of active-expert gate coefficients; 0 removes the
  /// input dependence of the gate.
  double gate_scale = 1.0;
  std::uint64_t seed = 0;
};

void validate(const SynthConfig& cfg);

struct GroundTruth {
  Eigen::MatrixXd betas;        // K x d
  Eigen::VectorXd sigma2s;      // K
  Eigen::MatrixXd gate_coeffs;  // K x d
  Eigen::VectorXd gate_bias;    // K
  double temperature = 1.0;

  /// softmax((C x + b) / T)
  Eigen::VectorXd gate_probabilities(const Eigen::VectorXd& x) const;
};

struct SyntheticData {
  std::vector<Observation> observations;
  GroundTruth truth;
  std::vector<std::size_t> z;  // 0-based true allocations
};

/// Deterministic in cfg.seed.
SyntheticData generate(const SynthConfig& cfg);

/// Normalized counts of 0-based allocations. Throws PreconditionError on an
/// empty sequence or an out-of-range index.
Eigen::VectorXd empirical_allocation_frequencies(std::span<const std::size_t> z,
                                                 std::size_t n_experts);

}  // namespace hsmoe
