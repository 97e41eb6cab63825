#include "hsmoe/synthgen.hpp"

#include <cmath>

#include "hsmoe/dist.hpp"
#include "hsmoe/error.hpp"
#include "hsmoe/rng.hpp"

namespace hsmoe {

namespace {

constexpr std::uint64_t kTruthStream = 0;
constexpr std::uint64_t kDataStream = 1;

}  // namespace

void validate(const SynthConfig& cfg) {
  if (cfg.n_experts < 1) throw ConfigError("K must be at least 1");
  if (cfg.n_active < 1 || cfg.n_active > cfg.n_experts) {
    throw ConfigError("active experts s must satisfy 1 <= s <= K");
  }
  if (cfg.dim < 1) throw ConfigError("d must be at least 1");
  if (!(cfg.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (!(cfg.sigma2 > 0.0)) throw ConfigError("noise variance must be positive");
  if (!(cfg.gate_scale >= 0.0)) throw ConfigError("gate scale must be nonnegative");
  if (!std::isfinite(cfg.b_inactive)) throw ConfigError("inactive bias must be finite");
}

Eigen::VectorXd GroundTruth::gate_probabilities(const Eigen::VectorXd& x) const {
  Eigen::VectorXd logits = (gate_coeffs * x + gate_bias) / temperature;
  logits.array() -= logits.maxCoeff();
  Eigen::VectorXd p = logits.array().exp().matrix();
  return p / p.sum();
}

SyntheticData generate(const SynthConfig& cfg) {
  validate(cfg);
  const auto K = static_cast<Eigen::Index>(cfg.n_experts);
  const auto d = static_cast<Eigen::Index>(cfg.dim);
  const auto s = static_cast<Eigen::Index>(cfg.n_active);

  SyntheticData out;
  GroundTruth& truth = out.truth;
  RngStream truth_rng(cfg.seed, kTruthStream);
  truth.betas.resize(K, d);
  for (Eigen::Index k = 0; k < K; ++k) {
    for (Eigen::Index j = 0; j < d; ++j) truth.betas(k, j) = truth_rng.normal();
  }
  truth.sigma2s = Eigen::VectorXd::Constant(K, cfg.sigma2);
  truth.gate_coeffs = Eigen::MatrixXd::Zero(K, d);
  for (Eigen::Index k = 0; k < s; ++k) {
    for (Eigen::Index j = 0; j < d; ++j) {
      truth.gate_coeffs(k, j) = cfg.gate_scale * truth_rng.normal();
    }
  }
  truth.gate_bias = Eigen::VectorXd::Zero(K);
  truth.gate_bias.tail(K - s).setConstant(cfg.b_inactive);
  truth.temperature = cfg.temperature;

  RngStream rng(cfg.seed, kDataStream);
  out.observations.reserve(cfg.n);
  out.z.reserve(cfg.n);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    Observation obs;
    obs.x.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) obs.x[j] = rng.normal();
    const Eigen::VectorXd probs = truth.gate_probabilities(obs.x);
    const Eigen::VectorXd log_probs = probs.array().log().matrix();
    const std::size_t z = sample_from_log_weights(as_span(log_probs), rng);
    const auto zk = static_cast<Eigen::Index>(z);
    obs.y = obs.x.dot(truth.betas.row(zk)) + std::sqrt(truth.sigma2s[zk]) * rng.normal();
    out.observations.push_back(std::move(obs));
    out.z.push_back(z);
  }
  return out;
}

Eigen::VectorXd empirical_allocation_frequencies(std::span<const std::size_t> z,
                                                 std::size_t n_experts) {
  if (z.empty()) throw PreconditionError("empirical_allocation_frequencies: empty sequence");
  Eigen::VectorXd freq = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_experts));
  for (const std::size_t k : z) {
    if (k >= n_experts) {
      throw PreconditionError("empirical_allocation_frequencies: allocation out of range");
    }
    freq[static_cast<Eigen::Index>(k)] += 1.0;
  }
  return freq / static_cast<double>(z.size());
}

}  // namespace hsmoe
