#include <catch2/catch_amalgamated.hpp>

#include "elegant/oracle.hpp"
#include "elegant/value.hpp"
#include "testutil.hpp"

using namespace elegant;
using oracle::DiscreteChain;
using oracle::TiltedChain;

namespace {

DiscreteChain uniform_two_state(double alpha) {
  DiscreteChain c;
  c.n = 2;
  c.H = 1;
  c.alpha = alpha;
  c.P.resize(1);
  c.P[0] = Tensor(2, 2, 0.5);
  c.rho0 = {0.5, 0.5};
  c.r = {0.0, alpha * std::log(3.0)};
  return c;
}

}  // namespace

TEST_CASE("soft values: hand-computed two-state chain", "[oracle]") {
  for (double alpha : {1.0, 0.3}) {
    DiscreteChain c = uniform_two_state(alpha);
    auto v = oracle::soft_values(c);
    // exp(v0/alpha) = 0.5 * 1 + 0.5 * 3 = 2 in both states
    REQUIRE(v[0][0] == Catch::Approx(alpha * std::log(2.0)).margin(1e-12));
    REQUIRE(v[0][1] == Catch::Approx(alpha * std::log(2.0)).margin(1e-12));
    REQUIRE(v[1][0] == Catch::Approx(0.0).margin(1e-15));
    REQUIRE(v[1][1] == Catch::Approx(alpha * std::log(3.0)).margin(1e-12));
  }
}

TEST_CASE("soft values: constant rewards are fixed points; H=0 boundary", "[oracle]") {
  DiscreteChain c = oracle::random_chain(5, 4, 11, 0.7);
  for (int i = 0; i < 5; ++i) c.r[i] = 1.234;
  auto v = oracle::soft_values(c);
  for (const auto& row : v)
    for (double x : row) REQUIRE(x == Catch::Approx(1.234).margin(1e-12));

  DiscreteChain c0;
  c0.n = 3;
  c0.H = 0;
  c0.alpha = 0.5;
  c0.rho0 = {0.2, 0.3, 0.5};
  c0.r = {1.0, -2.0, 0.5};
  auto v0 = oracle::soft_values(c0);
  REQUIRE(v0[0] == c0.r);
}

TEST_CASE("soft values: alpha must be positive", "[oracle]") {
  DiscreteChain c = uniform_two_state(1.0);
  c.alpha = 0.0;
  REQUIRE_THROWS_AS(oracle::soft_value_backward(c), Error);
}

TEST_CASE("tilt_chain: constant reward leaves the chain unchanged", "[oracle]") {
  DiscreteChain c = oracle::random_chain(6, 5, 13, 1.0);
  for (int i = 0; i < 6; ++i) c.r[i] = -0.4;
  TiltedChain t = oracle::tilt_chain(c);
  for (int k = 0; k < c.H; ++k)
    for (size_t i = 0; i < t.P[k].v.size(); ++i)
      REQUIRE(t.P[k].v[i] == Catch::Approx(c.P[k].v[i]).margin(1e-13));
  for (int i = 0; i < 6; ++i) REQUIRE(t.rho0[i] == Catch::Approx(c.rho0[i]).margin(1e-13));
}

TEST_CASE("tilt_chain: rows remain stochastic on random chains", "[oracle]") {
  for (uint64_t seed : {1u, 2u, 3u}) {
    DiscreteChain c = oracle::random_chain(20, 10, seed, 0.5);
    TiltedChain t = oracle::tilt_chain(c);
    for (int k = 0; k < c.H; ++k)
      for (int i = 0; i < c.n; ++i) {
        double s = 0.0;
        for (int j = 0; j < c.n; ++j) s += t.P[k].at(i, j);
        REQUIRE(std::abs(s - 1.0) <= 1e-12);
      }
  }
}

TEST_CASE("tilt_chain: small alpha concentrates on the best terminal state", "[oracle]") {
  DiscreteChain c;
  c.n = 4;
  c.H = 3;
  c.alpha = 1e-3;
  c.P.assign(3, Tensor(4, 4, 0.25));
  c.rho0 = {0.25, 0.25, 0.25, 0.25};
  c.r = {0.0, 0.1, 0.05, 1.0};
  TiltedChain t = oracle::tilt_chain(c);
  auto rho = oracle::detail::marginals(t.rho0, t.P);
  REQUIRE(rho[3][3] >= 0.99);
}

TEST_CASE("verify_identities: constant-reward chain deviates by zero", "[oracle]") {
  DiscreteChain c = oracle::random_chain(4, 3, 17, 1.0);
  for (int i = 0; i < 4; ++i) c.r[i] = 0.8;
  auto dev = oracle::verify_identities(c, oracle::tilt_chain(c));
  for (const auto& [name, d] : dev) {
    INFO(name);
    REQUIRE(d <= 1e-12);
  }
}

TEST_CASE("verify_identities: random chains at machine precision", "[oracle]") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    DiscreteChain c = oracle::random_chain(20, 10, 100 + seed, seed % 2 ? 1.0 : 0.25);
    auto dev = oracle::verify_identities(c, oracle::tilt_chain(c));
    REQUIRE(dev.size() >= 6);
    for (const auto& [name, d] : dev) {
      INFO("seed " << seed << " " << name);
      REQUIRE(d <= 1e-10);
    }
  }
}

TEST_CASE("verify_identities: exhaustive bridge enumeration on a small chain", "[oracle]") {
  DiscreteChain c = oracle::random_chain(6, 5, 33, 0.5);
  auto dev = oracle::verify_identities(c, oracle::tilt_chain(c));
  REQUIRE(dev.count("bridge") == 1);
  REQUIRE(dev.at("bridge") <= 1e-10);
}

TEST_CASE("verify_identities: a corrupted tilt is detected", "[oracle]") {
  DiscreteChain c = oracle::random_chain(8, 6, 55, 1.0);
  TiltedChain t = oracle::tilt_chain(c);
  t.P[2].at(1, 3) += 1e-6;
  auto dev = oracle::verify_identities(c, t);
  double worst = 0.0;
  for (const auto& [name, d] : dev) worst = std::max(worst, d);
  REQUIRE(worst > 1e-10);
}

TEST_CASE("analytic_value: boundary, stationary closed form, MC cross-check", "[oracle]") {
  const PretrainedModel model{testutil::standard_normal_1d(), 5.0};
  Reward r = Reward::linear({0.7});
  const double alpha = 1.0;
  for (double x : {-1.0, 0.4, 3.0})
    REQUIRE(oracle::analytic_value(model, r, alpha, 5.0, {x}) == Catch::Approx(0.7 * x));

  // stationary: v_t(x) = e^{-s/2} b x + b^2 (1 - e^{-s}) / (2 alpha), s = T - t
  for (double t : {0.0, 2.0, 4.5})
    for (double x : {-2.0, 0.0, 1.3}) {
      const double s = 5.0 - t;
      const double expected =
          std::exp(-0.5 * s) * 0.7 * x + 0.49 * (1.0 - std::exp(-s)) / (2.0 * alpha);
      REQUIRE(oracle::analytic_value(model, r, alpha, t, {x}) ==
              Catch::Approx(expected).margin(1e-12));
    }

  // mixture case vs Monte-Carlo log-mean-exp
  const PretrainedModel mix{testutil::canonical_mixture(), 5.0};
  Reward rb = Reward::linear({1.0});
  const TimeGrid grid(0.0, 5.0, 100);
  const SdeSpec spec = pretrained_sde(mix);
  for (double x : {-1.0, 0.0, 0.8}) {
    const int n = 20000;
    std::vector<double> ex(n);
    for (int i = 0; i < n; ++i)
      ex[i] = std::exp(simulate(spec, {x}, grid, RngStream(7100, i)).terminal()[0] / 1.0);
    const double mean = testutil::mean(ex);
    const double mc = std::log(mean);
    const double se = std::sqrt(testutil::variance(ex) / n) / mean;
    const double an = oracle::analytic_value(mix, rb, 1.0, 0.0, {x});
    INFO("x " << x << " mc " << mc << " an " << an << " se " << se);
    // Euler discretization adds a small bias on top of MC noise
    REQUIRE(std::abs(an - mc) <= 3.0 * se + 0.02);
  }
}

TEST_CASE("analytic_optimal_drift: boundary value and gradient consistency", "[oracle]") {
  const PretrainedModel model{testutil::canonical_mixture(), 5.0};
  Reward r = Reward::linear({1.3});
  const double alpha = 0.8;
  REQUIRE(oracle::analytic_optimal_drift(model, r, alpha, 5.0, {0.4})[0] ==
          Catch::Approx(1.3 / alpha));

  Reward zero = Reward::linear({0.0});
  for (double t : {1.0, 3.0})
    REQUIRE(oracle::analytic_optimal_drift(model, zero, alpha, t, {0.7})[0] == 0.0);

  for (double t : {0.0, 2.0, 4.9})
    for (double x : {-2.2, -0.3, 1.7}) {
      auto f = [&](double xx) { return oracle::analytic_value(model, r, alpha, t, {xx}); };
      const double fd = testutil::central_diff(f, x, 1e-6) / alpha;
      const double an = oracle::analytic_optimal_drift(model, r, alpha, t, {x})[0];
      REQUIRE(testutil::rel_err(an, fd) <= 1e-6);
    }
}

TEST_CASE("analytic_optimal_initial: zero reward recovers nu_ini", "[oracle]") {
  const PretrainedModel model{testutil::canonical_mixture(), 5.0};
  oracle::OptimalInitial oi = oracle::analytic_optimal_initial(model, Reward::linear({0.0}), 1.0);
  for (int i = 0; i < oi.grid.n; i += 100)
    REQUIRE(oi.density[i] ==
            Catch::Approx(testutil::normal_pdf(oi.grid.x[i], 0.0, 1.0)).margin(1e-10));
}

TEST_CASE("analytic_optimal_initial: stationary case is the shifted Gaussian", "[oracle]") {
  const PretrainedModel model{testutil::standard_normal_1d(), 5.0};
  const double b = 0.9, alpha = 1.0;
  oracle::OptimalInitial oi = oracle::analytic_optimal_initial(model, Reward::linear({b}), alpha);
  REQUIRE(oi.gaussian);
  REQUIRE(oi.mean[0] == Catch::Approx(std::exp(-2.5) * b / alpha).margin(1e-12));
  REQUIRE(oi.var == 1.0);
  for (double x : {-1.0, 0.0, 0.5, 2.0}) {
    const int i = static_cast<int>((x - oi.grid.lo) / oi.grid.h());
    REQUIRE(oi.density[i] ==
            Catch::Approx(testutil::normal_pdf(oi.grid.x[i], oi.mean[0], 1.0)).margin(1e-8));
  }
}

TEST_CASE("analytic_optimal_initial: normalizer equals C_tar from the tilted target",
          "[oracle]") {
  const GaussianMixture gm = testutil::canonical_mixture();
  const PretrainedModel model{gm, 5.0};
  Reward r = Reward::linear({1.0});
  const double alpha = 1.0;
  TiltedTarget tt = make_tilted_target(gm, r, alpha);

  // Along the forward-marginal chain the normalizer at t = 0 is exactly C_tar.
  Grid1D grid;
  const GaussianMixture q_T = forward_marginal(gm, 5.0);
  std::vector<double> integrand(grid.n);
  for (int i = 0; i < grid.n; ++i)
    integrand[i] = std::exp(oracle::analytic_value(model, r, alpha, 0.0, {grid.x[i]}) / alpha) *
                   density(q_T, {grid.x[i]});
  REQUIRE(std::abs(simpson(integrand, grid) - std::exp(tt.log_C)) <= 1e-6);

  // The nu_ini-based normalizer differs only by the designed prior mismatch
  // (nu_ini = N(0, I) rather than Q_T); at T = 5 that is a few 1e-4.
  oracle::OptimalInitial oi = oracle::analytic_optimal_initial(model, r, alpha);
  const double mismatch = std::abs(std::exp(oi.log_C) - std::exp(tt.log_C));
  REQUIRE(mismatch <= 5e-4);
  REQUIRE(mismatch > 0.0);
}

TEST_CASE("continuous C_tar is t-independent under quadrature", "[oracle]") {
  const GaussianMixture gm = testutil::canonical_mixture();
  const PretrainedModel model{gm, 5.0};
  Reward r = Reward::linear({1.0});
  const double alpha = 1.0;
  Grid1D grid;
  std::vector<double> cs;
  for (double t : {0.0, 2.5, 4.0}) {
    const GaussianMixture marg = forward_marginal(gm, 5.0 - t);
    std::vector<double> integrand(grid.n);
    for (int i = 0; i < grid.n; ++i)
      integrand[i] = std::exp(oracle::analytic_value(model, r, alpha, t, {grid.x[i]}) / alpha) *
                     density(marg, {grid.x[i]});
    cs.push_back(simpson(integrand, grid));
  }
  for (size_t i = 1; i < cs.size(); ++i) REQUIRE(std::abs(cs[i] - cs[0]) <= 1e-6);
}

TEST_CASE("HJB residual vanishes under grid refinement", "[oracle]") {
  const PretrainedModel model{testutil::canonical_mixture(), 5.0};
  Reward r = Reward::linear({1.0});
  const double alpha = 1.0;
  std::vector<double> worst;
  for (double h : {0.2, 0.1, 0.05}) {
    double w = 0.0;
    for (double t : {1.0, 2.5, 4.0})
      for (double x = -3.0; x <= 3.0; x += 0.5)
        w = std::max(w, std::abs(oracle::hjb_residual(model, r, alpha, t, x, h)));
    worst.push_back(w);
  }
  REQUIRE(worst[1] < worst[0]);
  REQUIRE(worst[2] < worst[1]);
  REQUIRE(worst[2] <= 1e-2);
}
