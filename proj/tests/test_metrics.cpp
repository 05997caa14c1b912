#include <catch2/catch_amalgamated.hpp>

#include "elegant/metrics.hpp"
#include "elegant/svg.hpp"
#include "testutil.hpp"

using namespace elegant;

TEST_CASE("diversity: degenerate and two-point cases", "[metrics]") {
  std::vector<std::vector<double>> same(50, {1.3, -0.2});
  REQUIRE(diversity(same) == 0.0);

  std::vector<std::vector<double>> pair = {{0.0}, {0.75}};
  REQUIRE(diversity(pair) == Catch::Approx(0.75));

  REQUIRE_THROWS_AS(diversity({{1.0}}), Error);
}

TEST_CASE("diversity: standard normal pairwise distance is 2/sqrt(pi)", "[metrics]") {
  const int n = 1000;
  std::vector<std::vector<double>> xs(n);
  RngStream rng(2718, 0);
  for (int i = 0; i < n; ++i) xs[i] = {rng.normal(i)};
  const double d = diversity(xs);
  const double expected = 2.0 / std::sqrt(M_PI);
  // sd(|X - Y|) ~ 0.85; pairs are correlated, so use the conservative per-n SE
  const double se = 0.85 / std::sqrt(static_cast<double>(n));
  REQUIRE(std::abs(d - expected) <= 3.0 * se);
}

TEST_CASE("diversity: translation invariance and linear scaling", "[metrics]") {
  SeqRng rng(12);
  std::vector<std::vector<double>> xs(64), shifted(64), doubled(64);
  for (int i = 0; i < 64; ++i) {
    xs[i] = {rng.normal(), rng.normal()};
    shifted[i] = {xs[i][0] + 3.7, xs[i][1] - 1.2};
    doubled[i] = {2.0 * xs[i][0], 2.0 * xs[i][1]};
  }
  REQUIRE(std::abs(diversity(xs) - diversity(shifted)) <= 1e-9);
  REQUIRE(diversity(doubled) == Catch::Approx(2.0 * diversity(xs)).margin(1e-12));
}

TEST_CASE("wasserstein1: point masses and mean shifts", "[metrics]") {
  GaussianMixture peaked;
  peaked.dim = 1;
  peaked.weights = {1.0};
  peaked.means = {{1.0}};
  peaked.vars = {1e-8};
  std::vector<std::vector<double>> at_zero(200, {0.0});
  // CDF-integral route resolves jumps at the grid resolution h = 0.005
  REQUIRE(w1_to_mixture(at_zero, peaked) == Catch::Approx(1.0).margin(0.01));

  GaussianMixture shifted = testutil::standard_normal_1d();
  shifted.means = {{1.0}};
  const int n = 10000;
  std::vector<std::vector<double>> xs(n);
  RngStream rng(31415, 0);
  for (int i = 0; i < n; ++i) xs[i] = {rng.normal(i)};
  REQUIRE(w1_to_mixture(xs, shifted) == Catch::Approx(1.0).margin(0.05));
}

TEST_CASE("wasserstein1: samples from the target itself", "[metrics]") {
  const GaussianMixture gm = testutil::canonical_mixture();
  const int n = 10000;
  std::vector<std::vector<double>> xs(n);
  RngStream rng(99, 0);
  for (int i = 0; i < n; ++i) xs[i] = sample(gm, rng, i);
  REQUIRE(w1_to_mixture(xs, gm) <= 0.05);
}

TEST_CASE("wasserstein1: empirical distance shrinks with n", "[metrics]") {
  const GaussianMixture gm = testutil::standard_normal_1d();
  std::vector<double> medians;
  for (int n : {100, 1000, 10000}) {
    std::vector<double> w1s;
    for (uint64_t seed = 0; seed < 10; ++seed) {
      std::vector<std::vector<double>> xs(n);
      RngStream rng(400 + seed, 0);
      for (int i = 0; i < n; ++i) xs[i] = {rng.normal(i)};
      w1s.push_back(w1_to_mixture(xs, gm));
    }
    std::sort(w1s.begin(), w1s.end());
    medians.push_back(w1s[5]);
  }
  REQUIRE(medians[1] < medians[0]);
  REQUIRE(medians[2] < medians[1]);
}

TEST_CASE("wasserstein1: density-on-grid target route agrees with the mixture route",
          "[metrics]") {
  const GaussianMixture gm = testutil::canonical_mixture();
  Grid1D grid;
  std::vector<double> dens(grid.n);
  for (int i = 0; i < grid.n; ++i) dens[i] = density(gm, {grid.x[i]});
  std::vector<std::vector<double>> xs(2000);
  RngStream rng(17, 0);
  for (int i = 0; i < 2000; ++i) xs[i] = sample(gm, rng, i);
  const double a = w1_to_mixture(xs, gm);
  const double b = w1_to_density(xs, dens, grid);
  REQUIRE(std::abs(a - b) <= 1e-3);
}

TEST_CASE("sliced Wasserstein for d=2 targets", "[metrics]") {
  GaussianMixture gm;
  gm.dim = 2;
  gm.weights = {0.5, 0.5};
  gm.means = {{-1.0, 0.0}, {1.0, 0.5}};
  gm.vars = {0.3, 0.3};
  std::vector<std::vector<double>> xs(4000);
  RngStream rng(23, 0);
  for (int i = 0; i < 4000; ++i) xs[i] = sample(gm, rng, i);
  REQUIRE(w1_to_mixture(xs, gm) <= 0.05);

  std::vector<std::vector<double>> wrong_dim(10, {0.0, 0.0, 0.0});
  REQUIRE_THROWS_AS(w1_to_mixture(wrong_dim, gm), Error);
}

TEST_CASE("path-KL: zero drift, constant drift, and partition invariance", "[metrics]") {
  SdeSpec s;
  s.dim = 1;
  s.drift = nullptr;
  s.sigma = [](double) { return 1.0; };
  const TimeGrid grid(0.0, 5.0, 50);
  std::vector<Trajectory> trajs;
  for (int i = 0; i < 16; ++i)
    trajs.push_back(simulate(s, {0.0}, grid, RngStream(5, i)));

  REQUIRE(path_kl_term(trajs, nullptr, s.sigma) == 0.0);

  DriftEval c = [](double, const double*, double* out) { out[0] = 0.7; };
  const double expected = 5.0 * 0.49 / 2.0;
  REQUIRE(path_kl_term(trajs, c, s.sigma) == Catch::Approx(expected).margin(1e-12));

  std::vector<Trajectory> reversed(trajs.rbegin(), trajs.rend());
  REQUIRE(std::abs(path_kl_term(trajs, c, s.sigma) - path_kl_term(reversed, c, s.sigma)) <=
          1e-12);
}

TEST_CASE("bootstrap SEs are nonnegative and shrink with n", "[metrics]") {
  SeqRng rng(8);
  std::vector<double> small(50), large(5000);
  for (double& x : small) x = rng.normal();
  for (double& x : large) x = rng.normal();
  const double se_small = bootstrap_se(small, 200, 1);
  const double se_large = bootstrap_se(large, 200, 1);
  REQUIRE(se_small >= 0.0);
  REQUIRE(se_large < se_small);
}

TEST_CASE("histogram: counts, CSV and SVG round trip", "[metrics]") {
  std::vector<double> vals = {0.0, 0.1, 0.9, 1.0, 0.5, 0.51};
  Histogram h = make_histogram(vals, 4);
  int total = 0;
  for (int c : h.counts) total += c;
  REQUIRE(total == 6);
  REQUIRE(h.edges.front() == 0.0);
  REQUIRE(h.edges.back() == 1.0);

  write_histogram_csv(h, "hist_test.csv");
  std::ifstream in("hist_test.csv");
  std::string line;
  std::getline(in, line);
  REQUIRE(line == "bin_lo,bin_hi,count");
  write_histogram_svg({{"series", "#3366cc", h}}, "test", "hist_test.svg");
  std::ifstream svg("hist_test.svg");
  std::getline(svg, line);
  REQUIRE(line.find("<svg") != std::string::npos);
  std::remove("hist_test.csv");
  std::remove("hist_test.svg");
}

TEST_CASE("evaluate: pretrained sampler reports zero KL and the target W1", "[metrics]") {
  const PretrainedModel model{testutil::canonical_mixture(), 5.0};
  Sampler sampler = pretrained_sampler(model, TimeGrid(0.0, 5.0, 60));
  Reward r = Reward::linear({1.0});
  EvalSpec spec;
  spec.n = 1500;
  spec.seed = 5150;
  spec.target = &model.data;
  EvalReport rep = evaluate(sampler, r, spec);
  REQUIRE(rep.kl_stage2 == 0.0);
  REQUIRE(rep.kl_stage1_surrogate == 0.0);
  REQUIRE(rep.kl_total == 0.0);
  REQUIRE(rep.has_w1);
  REQUIRE(rep.w1 <= 0.12);
  REQUIRE(rep.reward_se > 0.0);
  REQUIRE(rep.div > 0.0);
}
