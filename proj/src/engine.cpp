#include "hsmoe/engine.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>
#include <omp.h>

#include "hsmoe/error.hpp"

namespace hsmoe {

namespace {

// Stream roles; every draw in the filter comes from a stream keyed by
// (seed, role, step, particle slot) so results are independent of the
// thread count and of scheduling.
enum StreamRole : std::uint64_t { kInitStream = 1, kResampleStream = 2, kPropagateStream = 3 };

int thread_count(const FilterConfig& config) {
  return config.threads > 0 ? config.threads : omp_get_max_threads();
}

// Runs body(i) for i in [0, n) on the configured threads and rethrows the
// first exception on the calling thread.
template <typename Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  std::exception_ptr error;
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for num_threads(threads) schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(hsmoe_parallel_for_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

std::vector<double> normalized_weights(const FilterState& fs) {
  std::vector<double> w(fs.log_weights.size());
  std::transform(fs.log_weights.begin(), fs.log_weights.end(), w.begin(),
                 [](double lw) { return std::exp(lw); });
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& v : w) v /= total;
  return w;
}

}  // namespace

void validate(const FilterConfig& config) {
  if (config.n_particles < 1) throw ConfigError("n_particles must be at least 1");
  if (config.n_experts < 1) throw ConfigError("n_experts must be at least 1");
  if (!(config.a0 > 0.0) || !(config.b0 > 0.0)) {
    throw ConfigError("prior a0 and b0 must be positive");
  }
  if (!(config.prior_v_scale > 0.0)) throw ConfigError("prior V0 scale must be positive");
  if (!std::isfinite(config.prior_mean)) throw ConfigError("prior mean must be finite");
  if (!(config.resample_threshold >= 0.0)) {
    throw ConfigError("resample threshold must be nonnegative");
  }
  if (config.threads < 0) throw ConfigError("threads must be nonnegative");
}

std::uint64_t FilterState::scale_clamps() const {
  std::uint64_t total = 0;
  for (const auto& p : particles) total += p.scale_clamps;
  return total;
}

FilterState init_filter(const FilterConfig& config, std::size_t dim) {
  validate(config);
  if (dim < 1) throw ConfigError("covariate dimension must be at least 1");
  const auto d = static_cast<Eigen::Index>(dim);
  const NIGStats prior = nig_prior(Eigen::VectorXd::Constant(d, config.prior_mean),
                                   config.prior_v_scale * Eigen::MatrixXd::Identity(d, d),
                                   config.a0, config.b0);

  FilterState fs;
  fs.config = config;
  fs.dim = dim;
  fs.particles.resize(config.n_particles);
  for (std::size_t i = 0; i < config.n_particles; ++i) {
    RngStream rng(config.seed, derive_stream_id({kInitStream, i}));
    Particle& p = fs.particles[i];
    p.experts.assign(config.n_experts, prior);
    p.gate = gate_prior(config.n_experts - 1, dim, rng);
    p.alloc_counts.assign(config.n_experts, 0);
  }
  fs.log_weights.assign(config.n_particles,
                        -std::log(static_cast<double>(config.n_particles)));
  return fs;
}

Eigen::VectorXd allocation_log_weights(const Particle& p, const Observation& obs) {
  Eigen::VectorXd out =
      p.gate.n_sticks() == 0
          ? Eigen::VectorXd::Zero(1)
          : log_stick_probabilities(p.gate.phi_matrix(), obs.x);
  for (std::size_t k = 0; k < p.experts.size(); ++k) {
    out[static_cast<Eigen::Index>(k)] += nig_log_predictive(p.experts[k], obs);
  }
  return out;
}

double predictive_weight(const Particle& p, const Observation& obs) {
  const Eigen::VectorXd lw = allocation_log_weights(p, obs);
  return log_sum_exp(as_span(lw));
}

std::size_t allocate(const Particle& p, const Observation& obs, RngStream& rng) {
  const Eigen::VectorXd lw = allocation_log_weights(p, obs);
  return sample_from_log_weights(as_span(lw), rng);
}

void propagate(Particle& p, const Observation& obs, std::size_t z,
               const FilterConfig& config, std::size_t t, RngStream& rng) {
  const std::size_t n_experts = p.experts.size();
  p.experts[z] = nig_update(p.experts[z], obs, &p.scale_clamps);
  for (const auto& [k, label] : visited_sticks(z, n_experts)) {
    StickState& stick = p.gate.sticks[k];
    accumulate_polya_gamma(stick, obs.x, label, rng);
    refresh_phi(stick, p.gate.prior_precision_diag(k), config.phi_refresh, rng);
  }
  if (config.rejuvenate_every > 0 && p.gate.n_sticks() > 0 &&
      (t + 1) % config.rejuvenate_every == 0) {
    p.gate = horseshoe_rejuvenate(std::move(p.gate), rng);
  }
  ++p.alloc_counts[z];
  p.last_z = z;
  if (config.store_paths) p.path.push_back(static_cast<std::uint32_t>(z));
}

void step(FilterState& fs, const Observation& obs) {
  const FilterConfig& config = fs.config;
  const std::size_t n = fs.particles.size();
  if (n == 0) throw PreconditionError("step: filter has no particles");
  if (static_cast<std::size_t>(obs.x.size()) != fs.dim) {
    throw PreconditionError("step: covariate dimension mismatch");
  }
  if (!obs.x.allFinite() || !std::isfinite(obs.y)) {
    throw PreconditionError("step: observation must be finite");
  }
  const int threads = thread_count(config);

  // Predictive weights from S_{t-1}; the per-expert terms are kept for the
  // allocation draw of each offspring.
  std::vector<Eigen::VectorXd> components(n);
  std::vector<double> log_w(n);
  parallel_for(n, threads, [&](std::size_t i) {
    components[i] = allocation_log_weights(fs.particles[i], obs);
    log_w[i] = log_sum_exp(as_span(components[i]));
  });

  std::vector<double> combined(n);
  for (std::size_t i = 0; i < n; ++i) combined[i] = fs.log_weights[i] + log_w[i];
  const double increment = log_sum_exp(combined);
  if (std::isnan(increment)) {
    throw NumericalError("step " + std::to_string(fs.t + 1) + ": NaN predictive weight");
  }
  if (!std::isfinite(increment)) {
    throw DegeneracyError("step " + std::to_string(fs.t + 1) +
                          ": every particle assigns zero predictive density to the observation");
  }
  fs.log_ml += increment;

  std::vector<double> w(n);
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    combined[i] -= increment;
    w[i] = std::exp(combined[i]);
    sum_sq += w[i] * w[i];
  }
  const double sum_w = std::accumulate(w.begin(), w.end(), 0.0);
  const double ess =
      std::clamp(sum_w * sum_w / sum_sq, 1.0, static_cast<double>(n));
  fs.ess_history.push_back(ess);

  std::vector<std::size_t> ancestors;
  const bool resample =
      config.resample_threshold >= 1.0 || ess < config.resample_threshold * static_cast<double>(n);
  if (resample) {
    RngStream rng(config.seed, derive_stream_id({kResampleStream, fs.t}));
    ancestors = resample_indices(w, n, config.resample, rng);
    fs.log_weights.assign(n, -std::log(static_cast<double>(n)));
  } else {
    ancestors.resize(n);
    std::iota(ancestors.begin(), ancestors.end(), std::size_t{0});
    fs.log_weights = std::move(combined);
  }

  std::vector<Particle> next(n);
  parallel_for(n, threads, [&](std::size_t i) {
    const std::size_t a = ancestors[i];
    next[i] = fs.particles[a];
    RngStream rng(config.seed, derive_stream_id({kPropagateStream, fs.t, i}));
    const std::size_t z = sample_from_log_weights(as_span(components[a]), rng);
    propagate(next[i], obs, z, config, fs.t, rng);
  });
  fs.particles = std::move(next);
  ++fs.t;
}

FilterState run(const FilterConfig& config, std::span<const Observation> data,
                std::size_t dim) {
  FilterState fs = init_filter(config, dim);
  for (const auto& obs : data) step(fs, obs);
  return fs;
}

Eigen::VectorXd allocation_frequencies(const FilterState& fs) {
  if (fs.t == 0) throw PreconditionError("allocation_frequencies: no observations processed");
  const auto w = normalized_weights(fs);
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fs.config.n_experts));
  for (std::size_t i = 0; i < fs.particles.size(); ++i) {
    const auto& counts = fs.particles[i].alloc_counts;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      freq[static_cast<Eigen::Index>(k)] += w[i] * static_cast<double>(counts[k]);
    }
  }
  return freq / static_cast<double>(fs.t);
}

Eigen::VectorXd expert_scores(const FilterState& fs, const Eigen::VectorXd& x,
                              const ScoreOptions& options) {
  if (static_cast<std::size_t>(x.size()) != fs.dim) {
    throw PreconditionError("expert_scores: covariate dimension mismatch");
  }
  if (!(options.alpha >= 0.0)) throw PreconditionError("expert_scores: alpha must be >= 0");
  const std::size_t n_experts = fs.config.n_experts;
  const auto w = normalized_weights(fs);
  const auto K = static_cast<Eigen::Index>(n_experts);

  // Per-particle values: stick logits for k < K-1, last-category log
  // probability for k = K-1.
  Eigen::MatrixXd values(static_cast<Eigen::Index>(fs.particles.size()), K);
  Eigen::VectorXd within = Eigen::VectorXd::Zero(K);
  for (std::size_t i = 0; i < fs.particles.size(); ++i) {
    const GateState& g = fs.particles[i].gate;
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t k = 0; k < g.n_sticks(); ++k) {
      values(row, static_cast<Eigen::Index>(k)) = x.dot(g.sticks[k].phi);
      if (options.within_particle_variance) {
        Eigen::LLT<Eigen::MatrixXd> llt(g.posterior_precision(k));
        if (llt.info() != Eigen::Success) {
          throw NumericalError("expert_scores: stick precision is not positive definite");
        }
        within[static_cast<Eigen::Index>(k)] += w[i] * llt.matrixL().solve(x).squaredNorm();
      }
    }
    values(row, K - 1) =
        g.n_sticks() == 0 ? 0.0 : log_stick_probabilities(g.phi_matrix(), x)[K - 1];
  }

  Eigen::VectorXd scores(K);
  for (Eigen::Index k = 0; k < K; ++k) {
    double mean = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) mean += w[i] * values(static_cast<Eigen::Index>(i), k);
    double var = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double dev = values(static_cast<Eigen::Index>(i), k) - mean;
      var += w[i] * dev * dev;
    }
    var += within[k];
    scores[k] = var > 0.0 ? mean - options.alpha * std::sqrt(var) : mean;
  }
  return scores;
}

std::vector<std::size_t> top_k(const Eigen::VectorXd& scores, std::size_t k) {
  const auto n = static_cast<std::size_t>(scores.size());
  if (k < 1 || k > n) throw PreconditionError("top_k: k must lie in [1, K]");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)];
  });
  order.resize(k);
  return order;
}

Selection select_n_experts(const FilterConfig& base, std::span<const std::size_t> candidates,
                           std::span<const Observation> data, std::size_t dim) {
  if (candidates.empty()) throw PreconditionError("select_n_experts: no candidate K");
  std::vector<std::size_t> ks(candidates.begin(), candidates.end());
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  Selection out;
  for (const std::size_t k : ks) {
    FilterConfig config = base;
    config.n_experts = k;
    out.rows.push_back({k, run(config, data, dim).log_ml});
  }
  const SelectionRow* best = &out.rows.front();
  for (const auto& row : out.rows) {
    if (row.log_ml > best->log_ml) best = &row;
  }
  out.winner = best->n_experts;
  return out;
}

double prequential_log_evidence(const NIGStats& prior, std::span<const Observation> data) {
  NIGStats s = prior;
  double total = 0.0;
  for (const auto& obs : data) {
    total += nig_log_predictive(s, obs);
    s = nig_update(s, obs);
  }
  return total;
}

}  // namespace hsmoe
