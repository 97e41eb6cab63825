#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hsmoe/dist.hpp"
#include "hsmoe/expert.hpp"
#include "hsmoe/gate.hpp"

namespace hsmoe {

struct FilterConfig {
  std::size_t n_particles = 1000;
  std::size_t n_experts = 1;

  // Expert prior: m0 = prior_mean * 1, V0 = prior_v_scale * I, IG(a0, b0).
  double prior_mean = 0.0;
  double prior_v_scale = 1.0;
  double a0 = 1.0;
  double b0 = 1.0;

  ResampleScheme resample = ResampleScheme::systematic;
  /// Resample when ESS < threshold * N. Values >= 1 resample every step.
  double resample_threshold = 1.0;
  PhiRefresh phi_refresh = PhiRefresh::sample;
  /// Horseshoe Gibbs sweep after every r-th observation; 0 disables it.
  std::size_t rejuvenate_every = 1;
  /// Keep the full allocation path per particle (O(n) memory each).
  bool store_paths = false;
  std::uint64_t seed = 0;
  /// Worker threads for per-particle work; 0 uses every core. Results do
  /// not depend on this value.
  int threads = 0;
};

/// Throws ConfigError on an unusable configuration.
void validate(const FilterConfig& config);

struct Particle {
  std::vector<NIGStats> experts;
  GateState gate;
  std::vector<std::uint64_t> alloc_counts;
  std::optional<std::size_t> last_z;
  std::vector<std::uint32_t> path;
  std::uint64_t scale_clamps = 0;
};

struct FilterState {
  FilterConfig config;
  std::size_t dim = 0;
  std::vector<Particle> particles;
  /// Normalized log weights carried between steps; uniform right after a
  /// resampling step.
  std::vector<double> log_weights;
  double log_ml = 0.0;
  std::size_t t = 0;
  std::vector<double> ess_history;

  std::uint64_t scale_clamps() const;
};

/// Particles drawn from the prior; log_ml = 0, t = 0.
FilterState init_filter(const FilterConfig& config, std::size_t dim);

/// log g_k(x; phi) + log p(y | z = k, S) for every expert k.
Eigen::VectorXd allocation_log_weights(const Particle& p, const Observation& obs);

/// log p(y | S) = log sum_k g_k(x; phi) p(y | z = k, S).
double predictive_weight(const Particle& p, const Observation& obs);

/// Draw z from p(z | y, S), proportional to g_z(x; phi) p(y | z, S).
std::size_t allocate(const Particle& p, const Observation& obs, RngStream& rng);

/// Fold the allocated observation into a particle: expert update, visited
/// stick updates, scheduled horseshoe sweep, allocation bookkeeping.
void propagate(Particle& p, const Observation& obs, std::size_t z,
               const FilterConfig& config, std::size_t t, RngStream& rng);

/// One resample-allocate-propagate step; accumulates the log marginal
/// likelihood increment and records the ESS. Throws DegeneracyError when
/// every predictive weight underflows to zero.
void step(FilterState& fs, const Observation& obs);

FilterState run(const FilterConfig& config, std::span<const Observation> data,
                std::size_t dim);

/// Weighted particle average of alloc_counts / t. Requires t >= 1.
Eigen::VectorXd allocation_frequencies(const FilterState& fs);

struct ScoreOptions {
  double alpha = 0.0;
  /// Add the within-particle posterior variance x' Lambda_k^-1 x of each
  /// stick logit to the across-particle variance.
  bool within_particle_variance = false;
};

/// Uncertainty-aware routing scores mean - alpha * sd. Expert k < K-1 uses
/// its stick logit x' phi_k across particles; the last expert, which has no
/// logit of its own, uses log P(z = K-1 | x).
Eigen::VectorXd expert_scores(const FilterState& fs, const Eigen::VectorXd& x,
                              const ScoreOptions& options);

/// Indices of the k largest scores, best first; ties go to the lower index.
std::vector<std::size_t> top_k(const Eigen::VectorXd& scores, std::size_t k);

struct SelectionRow {
  std::size_t n_experts;
  double log_ml;
};

struct Selection {
  std::vector<SelectionRow> rows;  // sorted by n_experts
  std::size_t winner;              // n_experts with the largest log_ml
};

/// Run the filter once per candidate expert count with otherwise identical
/// settings. Ties in log_ml go to the smaller K.
Selection select_n_experts(const FilterConfig& base,
                           std::span<const std::size_t> candidates,
                           std::span<const Observation> data, std::size_t dim);

/// Exact log evidence of the single-expert conjugate model as a chain of
/// one-step Student-t predictives.
double prequential_log_evidence(const NIGStats& prior,
                                std::span<const Observation> data);

}  // namespace hsmoe
