#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "chains.hpp"
#include "hsmoe/error.hpp"
#include "hsmoe/gate.hpp"
#include "oracles.hpp"

using namespace hsmoe;

namespace {

StickState empty_stick(Eigen::Index d) {
  return {Eigen::MatrixXd::Zero(d, d), Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d)};
}

}  // namespace

TEST_CASE("stick probabilities with zero coefficients halve repeatedly") {
  const Eigen::VectorXd x = Eigen::Vector2d(0.3, -1.2);
  const Eigen::VectorXd p3 = stick_probabilities(Eigen::MatrixXd::Zero(2, 2), x);
  REQUIRE(p3.size() == 3);
  CHECK(p3[0] == doctest::Approx(0.5));
  CHECK(p3[1] == doctest::Approx(0.25));
  CHECK(p3[2] == doctest::Approx(0.25));

  for (Eigen::Index K = 1; K <= 8; ++K) {
    const Eigen::VectorXd p = stick_probabilities(Eigen::MatrixXd::Zero(K - 1, 2), x);
    REQUIRE(p.size() == K);
    for (Eigen::Index k = 0; k + 1 < K; ++k) CHECK(p[k] == doctest::Approx(std::ldexp(1.0, -int(k) - 1)));
    CHECK(p[K - 1] == doctest::Approx(std::ldexp(1.0, -int(K) + 1)));
  }
}

TEST_CASE("stick probabilities saturate on the first stick") {
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(3, 1);
  phi(0, 0) = 1e4;
  const Eigen::VectorXd p = stick_probabilities(phi, Eigen::VectorXd::Ones(1));
  CHECK(p[0] == doctest::Approx(1.0));
  CHECK(p.tail(3).maxCoeff() < 1e-300);
  CHECK(p.minCoeff() >= 0.0);
}

TEST_CASE("stick probabilities form a simplex") {
  std::mt19937_64 gen(1);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 1000; ++rep) {
    const Eigen::Index K = 1 + rep % 12, d = 1 + rep % 5;
    const double scale = std::pow(10.0, rep % 4);
    Eigen::MatrixXd phi(K - 1, d);
    Eigen::VectorXd x(d);
    for (Eigen::Index i = 0; i < phi.size(); ++i) phi.data()[i] = scale * n01(gen);
    for (Eigen::Index j = 0; j < d; ++j) x[j] = n01(gen);
    const Eigen::VectorXd p = stick_probabilities(phi, x);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(std::abs(p.sum() - 1.0) <= 1e-12);
  }
}

TEST_CASE("visited sticks and labels") {
  using L = std::vector<StickLabel>;
  CHECK(visited_sticks(0, 4) == L{{0, 1}});
  CHECK(visited_sticks(2, 4) == L{{0, 0}, {1, 0}, {2, 1}});
  CHECK(visited_sticks(3, 4) == L{{0, 0}, {1, 0}, {2, 0}});
  CHECK(visited_sticks(0, 1).empty());
  CHECK_THROWS_AS(visited_sticks(4, 4), PreconditionError);
  CHECK_THROWS_AS(visited_sticks(0, 0), PreconditionError);
}

TEST_CASE("pg stick update increments") {
  RngStream rng(3, 0);
  const Eigen::VectorXd x = Eigen::Vector3d(0.5, -1.0, 2.0);
  const Eigen::VectorXd prior = Eigen::VectorXd::Ones(3);
  StickState s = empty_stick(3);
  s.phi << 0.1, 0.2, -0.3;

  const StickState one = pg_stick_update(s, prior, x, 1, PhiRefresh::sample, rng);
  CHECK((one.h - s.h - 0.5 * x).norm() < 1e-15);
  const StickState zero = pg_stick_update(s, prior, x, 0, PhiRefresh::sample, rng);
  CHECK((zero.h - s.h + 0.5 * x).norm() < 1e-15);

  // Lambda' - Lambda = omega x x' with omega > 0.
  const Eigen::MatrixXd delta = one.data_precision - s.data_precision;
  const double omega = delta(0, 0) / (x[0] * x[0]);
  CHECK(omega > 0.0);
  CHECK((delta - omega * x * x.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(delta);
  CHECK(eig.eigenvalues().minCoeff() > -1e-12);
  CHECK(eig.eigenvalues().maxCoeff() > 0.0);
}

TEST_CASE("pg stick update with zero covariate only redraws phi") {
  RngStream rng(4, 0);
  StickState s = empty_stick(2);
  s.data_precision << 2.0, 0.5, 0.5, 1.0;
  s.h << 0.3, -0.1;
  s.phi << 5.0, 5.0;
  const StickState t = pg_stick_update(s, Eigen::Vector2d(1.0, 1.0), Eigen::VectorXd::Zero(2), 1,
                                       PhiRefresh::sample, rng);
  CHECK(t.data_precision == s.data_precision);
  CHECK(t.h == s.h);
  CHECK(t.phi != s.phi);

  const StickState m = pg_stick_update(s, Eigen::Vector2d(1.0, 1.0), Eigen::VectorXd::Zero(2), 1,
                                       PhiRefresh::mean, rng);
  Eigen::MatrixXd lambda = s.data_precision;
  lambda.diagonal() += Eigen::Vector2d(1.0, 1.0);
  CHECK((m.phi - lambda.inverse() * s.h).norm() < 1e-14);
}

TEST_CASE("accumulators stay symmetric positive semidefinite") {
  RngStream rng(5, 0);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n01;
  StickState s = empty_stick(4);
  const Eigen::VectorXd prior = Eigen::VectorXd::Constant(4, 0.1);
  for (int i = 0; i < 2000; ++i) {
    Eigen::VectorXd x(4);
    for (int j = 0; j < 4; ++j) x[j] = n01(gen);
    s = pg_stick_update(std::move(s), prior, x, i % 3 == 0, PhiRefresh::sample, rng);
  }
  CHECK((s.data_precision - s.data_precision.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.data_precision);
  CHECK(eig.eigenvalues().minCoeff() >= -1e-9);
}

TEST_CASE("gate prior has consistent dimensions and positive scales") {
  RngStream rng(6, 0);
  const GateState g = gate_prior(4, 3, rng);
  CHECK(g.n_sticks() == 4);
  CHECK(g.dim() == 3);
  CHECK(g.hs.lambda2.rows() == 4);
  CHECK(g.hs.nu.cols() == 3);
  CHECK(g.hs.tau2 > 0.0);
  CHECK(g.hs.lambda2.minCoeff() > 0.0);
  CHECK(g.phi_matrix().rows() == 4);
  for (const auto& s : g.sticks) {
    CHECK(s.data_precision.isZero());
    CHECK(s.h.isZero());
  }
}

TEST_CASE("rejuvenation with zero coefficients: lambda2 | nu ~ IG(1, 1/nu)") {
  // The median of IG(1, b) is b / ln 2.
  RngStream rng(7, 0);
  GateState g = gate_prior(1, 1, rng);
  g.sticks[0].phi.setZero();
  g.hs.nu(0, 0) = 2.0;
  const double median = 0.5 / std::log(2.0);
  const int n = 50000;
  int below = 0;
  for (int i = 0; i < n; ++i) below += horseshoe_rejuvenate(g, rng).hs.lambda2(0, 0) <= median;
  CHECK(std::abs(below / double(n) - 0.5) <= 3.0 * std::sqrt(0.25 / n));
}

TEST_CASE("tau2 stays finite and positive over a long data-free chain") {
  RngStream rng(8, 0);
  GateState g = gate_prior(1, 1, rng);
  bool ok = true;
  for (int it = 0; it < 1000000; ++it) {
    g = horseshoe_rejuvenate(std::move(g), rng);
    refresh_phi(g.sticks[0], g.prior_precision_diag(0), PhiRefresh::sample, rng);
    ok = ok && std::isfinite(g.hs.tau2) && g.hs.tau2 > 0.0 && g.hs.xi > 0.0 &&
         g.hs.lambda2(0, 0) > 0.0 && std::isfinite(g.hs.lambda2(0, 0));
  }
  CHECK(ok);
}

TEST_CASE("data-free horseshoe chain reproduces the prior (short run)") {
  const auto draws = chains::geweke_chain(2, 2, 20000, 1000, 11);
  const auto reference = chains::horseshoe_prior_direct(20000, 12);
  for (double p : {0.25, 0.5, 0.75}) {
    const auto c = chains::compare_quantile(draws.phi, reference, p);
    CAPTURE(p);
    CAPTURE(c.chain_cdf);
    CAPTURE(c.se);
    CHECK(c.pass);
  }
  // Local scale median of C+(0, 1) is 1.
  std::vector<double> ind(draws.lambda.size());
  for (std::size_t i = 0; i < ind.size(); ++i) ind[i] = draws.lambda[i] <= 1.0;
  CHECK(std::abs(oracle::sample_mean(ind) - 0.5) <= 3.0 * oracle::batch_means_se(ind));
}

TEST_CASE("polya-gamma Gibbs matches the quadrature posterior (short run)") {
  const auto exact = oracle::logistic_posterior_moments(7, 3);
  const auto chain = chains::polya_gamma_gibbs(7, 3, 20000, 500, 13);
  const auto m = chains::chain_moments(chain);
  CHECK(std::abs(m.mean - exact.mean) <= 3.0 * m.se_mean);
  CHECK(std::abs(m.sd - exact.sd) <= 3.0 * m.se_sd);
}
