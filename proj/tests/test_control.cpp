#include <catch2/catch_amalgamated.hpp>

#include "elegant/control.hpp"
#include "elegant/metrics.hpp"
#include "elegant/oracle.hpp"
#include "testutil.hpp"

using namespace elegant;

namespace {

ValueModel affine_value(double slope, double intercept) {
  // hidden = {} gives a single linear layer: exact affine value nets for
  // oracle-backed stage-1 tests.
  ValueModel vm;
  vm.spec.in = 1;
  vm.spec.out = 1;
  vm.spec.hidden = {};
  vm.params.insert("value.W0", Tensor::scalar(slope));
  vm.params.insert("value.b0", Tensor::scalar(intercept));
  return vm;
}

BatchInit gaussian_init(int dim) {
  return [dim](uint64_t master, uint64_t stream0, int batch) {
    std::vector<std::vector<double>> xs;
    for (int j = 0; j < batch; ++j)
      xs.push_back(draw_standard_normal_init(RngStream(master, stream0 + j), dim));
    return xs;
  };
}

bool params_equal(const ad::ParamSet& a, const ad::ParamSet& b) {
  for (const auto& [name, t] : a.values)
    if (t.v != b.values.at(name).v) return false;
  return true;
}

}  // namespace

TEST_CASE("drift net: zero-initialized output layer means zero drift", "[control]") {
  DriftNet net = DriftNet::create(2, {16, 16}, 0.0, 5.0, 9);
  double out[2];
  for (double t : {0.0, 2.2, 5.0})
    for (double x : {-3.0, 0.0, 1.4}) {
      const double xv[2] = {x, -x};
      net.eval(t, xv, out);
      REQUIRE(out[0] == 0.0);
      REQUIRE(out[1] == 0.0);
    }
}

TEST_CASE("drift net: recorded evaluation matches plain bit-exactly", "[control]") {
  DriftNet net = DriftNet::create(1, {8, 8}, -5.0, 0.0, 10);
  SeqRng rng(4);
  for (auto& [name, t] : net.params.values)
    for (double& v : t.v) v += 0.5 * (2.0 * rng.uniform() - 1.0);
  for (double t : {-5.0, -2.3, -0.1}) {
    Tensor X(1, 4);
    for (double& v : X.v) v = 3.0 * (2.0 * rng.uniform() - 1.0);
    ad::Graph g;
    ad::Id node = net.record(g, t, g.constant(X), false);
    for (int j = 0; j < 4; ++j) {
      double out;
      const double xv = X.at(0, j);
      net.eval(t, &xv, &out);
      REQUIRE(g.value(node).at(0, j) == out);
    }
  }
}

TEST_CASE("neural_sde_solve: zero epochs returns the drift unchanged", "[control]") {
  DriftNet net = DriftNet::create(1, {8}, 0.0, 1.0, 1);
  const ad::ParamSet before = net.params;
  SolveObjective obj;
  obj.sigma = [](double) { return 1.0; };
  obj.include_cost = true;
  StageConfig cfg;
  cfg.epochs = 0;
  cfg.batch = 4;
  TrainLog log = neural_sde_solve(obj, net, gaussian_init(1), TimeGrid(0.0, 1.0, 10), cfg);
  REQUIRE(log.epoch_loss.empty());
  REQUIRE(params_equal(before, net.params));
}

TEST_CASE("neural_sde_solve: penalty-only objective drives the drift to zero", "[control]") {
  DriftNet net = DriftNet::create(1, {12}, 0.0, 1.0, 2);
  SeqRng rng(8);
  for (auto& [name, t] : net.params.values)
    for (double& v : t.v) v += 0.5 * (2.0 * rng.uniform() - 1.0);

  SolveObjective obj;  // L = -y only
  obj.sigma = [](double) { return 1.0; };
  obj.include_cost = true;
  StageConfig cfg;
  cfg.alpha = 1.0;
  cfg.batch = 32;
  cfg.epochs = 30;
  cfg.steps_per_epoch = 10;
  cfg.lr = 1e-2;
  cfg.seed = 3;
  const TimeGrid grid(0.0, 1.0, 20);
  neural_sde_solve(obj, net, gaussian_init(1), grid, cfg);

  // mean ||u|| over fresh rollouts
  SdeSpec s;
  s.dim = 1;
  s.drift = net.as_eval();
  s.sigma = [](double) { return 1.0; };
  double acc = 0.0;
  int count = 0;
  for (int i = 0; i < 32; ++i) {
    Trajectory t = simulate(s, draw_standard_normal_init(RngStream(91, i), 1), grid,
                            RngStream(91, i));
    double out;
    for (int k = 0; k <= grid.n_steps; ++k) {
      net.eval(grid.time(std::min(k, grid.n_steps - 1)), t.x[k].data(), &out);
      acc += std::abs(out);
      ++count;
    }
  }
  REQUIRE(acc / count <= 0.01);
}

TEST_CASE("neural_sde_solve: Brownian base with linear reward recovers the constant drift",
          "[control]") {
  // f = 0, sigma = 1, T = 1, r(x) = x, alpha = 1: optimal drift is u = 1.
  DriftNet net = DriftNet::create(1, {16, 16}, 0.0, 1.0, 5);
  Reward r = Reward::linear({1.0});
  SolveObjective obj;
  obj.terminal = [&r](ad::Graph& g, ad::Id xT) { return r.record(g, xT); };
  obj.sigma = [](double) { return 1.0; };
  obj.include_cost = true;
  StageConfig cfg;
  cfg.alpha = 1.0;
  cfg.batch = 64;
  cfg.epochs = 40;
  cfg.steps_per_epoch = 10;
  cfg.lr = 1e-2;
  cfg.seed = 6;
  const TimeGrid grid(0.0, 1.0, 30);
  neural_sde_solve(obj, net, gaussian_init(1), grid, cfg);

  SdeSpec s;
  s.dim = 1;
  s.drift = net.as_eval();
  s.sigma = [](double) { return 1.0; };
  double worst = 0.0;
  for (int i = 0; i < 64; ++i) {
    Trajectory t = simulate(s, draw_standard_normal_init(RngStream(92, i), 1), grid,
                            RngStream(92, i));
    double out;
    for (int k = 0; k < grid.n_steps; ++k) {
      net.eval(grid.time(k), t.x[k].data(), &out);
      worst = std::max(worst, std::abs(out - 1.0));
    }
  }
  INFO("max |u - 1| on visited states: " << worst);
  REQUIRE(worst <= 0.1);
}

TEST_CASE("solve_stage1: constant value leaves q at zero and nu_hat at nu_ini", "[control]") {
  ValueModel vm = affine_value(0.0, 2.0);
  DriftNet q = DriftNet::create(1, {16}, -1.0, 0.0, 7, "q");
  const ad::ParamSet before = q.params;
  StageConfig cfg;
  cfg.alpha = 1.0;
  cfg.batch = 16;
  cfg.epochs = 5;
  cfg.steps_per_epoch = 5;
  cfg.lr = 1e-2;
  const TimeGrid grid(-1.0, 0.0, 20);
  solve_stage1(vm, 1.0, {0.0}, grid, cfg, q);
  // constant terminal: zero gradient everywhere, so parameters never move
  REQUIRE(params_equal(before, q.params));

  // nu_hat with q = 0 is exactly N(0, sigma_tilde^2 T) = N(0, 1)
  SdeSpec s;
  s.dim = 1;
  s.drift = q.as_eval();
  s.sigma = [](double) { return 1.0; };
  const int n = 4000;
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) xs[i] = simulate(s, {0.0}, grid, RngStream(93, i)).terminal()[0];
  REQUIRE(std::abs(testutil::mean(xs)) <= 3.0 / std::sqrt(n));
  REQUIRE(std::abs(testutil::variance(xs) - 1.0) <= 3.0 * std::sqrt(2.0 / n));
}

TEST_CASE("solve_stage1: linear value tilts nu_ini to N(b, 1)", "[control]") {
  const double b = 1.0;
  ValueModel vm = affine_value(b, 0.0);
  DriftNet q = DriftNet::create(1, {16, 16}, -1.0, 0.0, 8, "q");
  StageConfig cfg;
  cfg.alpha = 1.0;
  cfg.batch = 64;
  cfg.epochs = 60;
  cfg.steps_per_epoch = 10;
  cfg.lr = 1e-2;
  cfg.seed = 9;
  const TimeGrid grid(-1.0, 0.0, 30);
  solve_stage1(vm, 1.0, {0.0}, grid, cfg, q);

  SdeSpec s;
  s.dim = 1;
  s.drift = q.as_eval();
  s.sigma = [](double) { return 1.0; };
  const int n = 2000;
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i)
    xs[i] = simulate(s, {0.0}, grid, RngStream(94, i)).terminal()[0];
  const double m = testutil::mean(xs);
  const double v = testutil::variance(xs);
  INFO("mean " << m << " var " << v);
  REQUIRE(std::abs(m - b) <= 3.0 / std::sqrt(static_cast<double>(n)) + 0.03);
  REQUIRE(v >= 0.95);
  REQUIRE(v <= 1.05);
}

TEST_CASE("solve_stage1 reruns bit-identically under the same seed", "[control]") {
  ValueModel vm = affine_value(0.8, 0.1);
  StageConfig cfg;
  cfg.alpha = 1.0;
  cfg.batch = 16;
  cfg.epochs = 4;
  cfg.steps_per_epoch = 3;
  cfg.lr = 1e-2;
  cfg.seed = 10;
  const TimeGrid grid(-1.0, 0.0, 15);
  DriftNet q1 = DriftNet::create(1, {8, 8}, -1.0, 0.0, 11, "q");
  DriftNet q2 = DriftNet::create(1, {8, 8}, -1.0, 0.0, 11, "q");
  solve_stage1(vm, 1.0, {0.0}, grid, cfg, q1);
  solve_stage1(vm, 1.0, {0.0}, grid, cfg, q2);
  REQUIRE(params_equal(q1.params, q2.params));
}

TEST_CASE("solve_stage2: constant reward keeps the sampler pretrained", "[control]") {
  const PretrainedModel model{testutil::canonical_mixture(), 5.0};
  Reward zero = Reward::linear({0.0});
  DriftNet u = DriftNet::create(1, {8, 8}, 0.0, 5.0, 12, "u");
  const ad::ParamSet before = u.params;
  StageConfig cfg;
  cfg.alpha = 1.0;
  cfg.batch = 8;
  cfg.epochs = 3;
  cfg.steps_per_epoch = 3;
  cfg.lr = 1e-2;
  const TimeGrid grid(0.0, 5.0, 25);
  const RecordedDrift base = reverse_drift_recorded(model);
  solve_stage2(model, zero, gaussian_init(1), grid, cfg, u, base);
  REQUIRE(params_equal(before, u.params));
}

TEST_CASE("solve_stage2: huge alpha forces a negligible drift", "[control]") {
  const PretrainedModel model{testutil::canonical_mixture(), 5.0};
  Reward r = Reward::linear({1.0});
  DriftNet u = DriftNet::create(1, {8, 8}, 0.0, 5.0, 13, "u");
  StageConfig cfg;
  cfg.alpha = 1e6;
  cfg.batch = 16;
  cfg.epochs = 5;
  cfg.steps_per_epoch = 5;
  cfg.lr = 1e-3;
  const TimeGrid grid(0.0, 5.0, 25);
  const RecordedDrift base = reverse_drift_recorded(model);
  solve_stage2(model, r, gaussian_init(1), grid, cfg, u, base);
  double acc = 0.0;
  int count = 0;
  double out;
  for (double t : {0.5, 2.5, 4.5})
    for (double x = -3.0; x <= 3.0; x += 0.5) {
      u.eval(t, &x, &out);
      acc += std::abs(out);
      ++count;
    }
  REQUIRE(acc / count <= 0.01);
}

TEST_CASE("zero-init equivalence: every sampler reproduces the pretrained one", "[control]") {
  const PretrainedModel model{testutil::canonical_mixture(), 5.0};
  const TimeGrid grid(0.0, 5.0, 40);
  const Sampler reference = pretrained_sampler(model, grid);
  const SampleBatch ref = reference.draw(16, 4242);

  // untrained two-stage model
  FineTunedModel ft;
  ft.model = &model;
  ft.alpha = 1.0;
  ft.q = DriftNet::create(1, {16, 16}, -5.0, 0.0, 1, "q");
  ft.u = DriftNet::create(1, {16, 16}, 0.0, 5.0, 2, "u");
  ft.grid1 = TimeGrid(-5.0, 0.0, 40);
  ft.grid2 = grid;
  ft.sigma_tilde = sigma_tilde_for(5.0);
  ft.x_fix = {0.0};
  REQUIRE(sample_finetuned(ft, 16, 4242).x_T == ref.x_T);

  // untrained no-KL net
  NoKlResult nokl;
  nokl.u = DriftNet::create(1, {16, 16}, 0.0, 5.0, 3, "u");
  REQUIRE(no_kl_sampler(model, nokl, grid).draw(16, 4242).x_T == ref.x_T);

  // naive sampler with a constant reward
  Reward zero = Reward::linear({0.0});
  REQUIRE(naive_drift_sampler(model, zero, 1.0, grid).draw(16, 4242).x_T == ref.x_T);

  // guidance at gamma = 0
  TimeRewardModel mu;
  mu.net = DriftNet::create(1, {8}, 0.0, 5.0, 4, "mu");
  REQUIRE(guidance_sampler(model, mu, 0.0, 1.0, 1.0, grid).draw(16, 4242).x_T == ref.x_T);
}

TEST_CASE("objective decomposition: recorded loss equals reward minus running cost",
          "[control]") {
  const PretrainedModel model{testutil::canonical_mixture(), 5.0};
  Reward r = Reward::linear({1.0});
  DriftNet net = DriftNet::create(1, {8, 8}, 0.0, 5.0, 14, "u");
  SeqRng rng(15);
  for (auto& [name, t] : net.params.values)
    for (double& v : t.v) v += 0.3 * (2.0 * rng.uniform() - 1.0);

  const RecordedDrift base = reverse_drift_recorded(model);
  RecordedDrift control;
  control.plain = net.as_eval();
  control.record = [&](ad::Graph& g, double t, ad::Id X) { return net.record(g, t, X, true); };
  std::vector<std::vector<double>> inits = {{0.1}, {-0.7}, {1.2}};
  const TimeGrid grid(0.0, 5.0, 30);
  const double alpha = 0.7;
  RecordedRollout roll = simulate_recorded(&base, control, [](double) { return 1.0; }, alpha,
                                           inits, grid, 71, 0);
  ad::Graph& g = roll.graph;
  ad::Id L = g.sub(r.record(g, roll.x_terminal), roll.cost_terminal);
  for (int j = 0; j < 3; ++j) {
    const double reward_term = r(roll.trajectories[j].terminal());
    const double cost = running_cost(roll.trajectories[j], net.as_eval(),
                                     [](double) { return 1.0; }, alpha);
    REQUIRE(g.value(L).at(0, j) == reward_term - cost);
  }
}

TEST_CASE("train_no_kl: constant reward leaves parameters untouched", "[control]") {
  const PretrainedModel model{testutil::canonical_mixture(), 5.0};
  Reward zero = Reward::linear({0.0});
  StageConfig cfg;
  cfg.batch = 8;
  cfg.epochs = 3;
  cfg.steps_per_epoch = 2;
  cfg.lr = 1e-2;
  cfg.hidden = {8, 8};
  NoKlResult res = train_no_kl(model, zero, TimeGrid(0.0, 5.0, 20), cfg);
  DriftNet fresh = DriftNet::create(1, cfg.hidden, 0.0, 5.0, cfg.seed ^ 0x20ull, "u");
  REQUIRE(params_equal(res.u.params, fresh.params));
}

TEST_CASE("train_no_kl: truncation gates the sampler drift before K", "[control]") {
  const PretrainedModel model{testutil::canonical_mixture(), 5.0};
  Reward r = Reward::linear({1.0});
  StageConfig cfg;
  cfg.batch = 16;
  cfg.epochs = 4;
  cfg.steps_per_epoch = 2;
  cfg.lr = 1e-2;
  cfg.hidden = {8, 8};
  const TimeGrid grid(0.0, 5.0, 20);
  NoKlResult res = train_no_kl(model, r, grid, cfg, NoKlMode::Truncation, 0.8);
  REQUIRE(res.gate_time == Catch::Approx(4.0));
  Sampler s = no_kl_sampler(model, res, grid);
  double out;
  const double x = 0.5;
  s.u_drift(1.0, &x, &out);
  REQUIRE(out == 0.0);
  // beyond the gate the trained net is active (may be nonzero)
  s.u_drift(4.5, &x, &out);
  double direct;
  res.u.eval(4.5, &x, &direct);
  REQUIRE(out == direct);

  NoKlResult rnd = train_no_kl(model, r, grid, cfg, NoKlMode::RandomK, 0.8);
  REQUIRE(rnd.gate_time == -1.0);
}

TEST_CASE("naive sampler trivia: constant reward and huge alpha", "[control]") {
  const PretrainedModel model{testutil::canonical_mixture(), 5.0};
  const TimeGrid grid(0.0, 5.0, 40);
  const SampleBatch ref = pretrained_sampler(model, grid).draw(12, 777);

  Reward lin = Reward::linear({1.0});
  const SampleBatch big_alpha = naive_drift_sampler(model, lin, 1e12, grid).draw(12, 777);
  for (int i = 0; i < 12; ++i)
    REQUIRE(std::abs(big_alpha.x_T[i][0] - ref.x_T[i][0]) <= 1e-9);
}

TEST_CASE("guidance wiring matches the closed-form perturbation", "[control]") {
  const PretrainedModel model{testutil::standard_normal_1d(), 5.0};
  TimeRewardModel mu;
  mu.net = DriftNet::create(1, {8}, 0.0, 5.0, 16, "mu");
  mu.net.spec.out = 1;
  SeqRng rng(17);
  for (auto& [name, t] : mu.net.params.values)
    for (double& v : t.v) v += 0.4 * (2.0 * rng.uniform() - 1.0);

  const double gamma = 2.0, y_con = 1.5, sigma_g = 0.8;
  Sampler s = guidance_sampler(model, mu, gamma, y_con, sigma_g, TimeGrid(0.0, 5.0, 20));
  for (double t : {0.5, 3.0})
    for (double x : {-1.0, 0.4}) {
      double out;
      s.u_drift(t, &x, &out);
      const double mv = mu.mu(t, {x});
      const double gv = mu.grad_x(t, {x})[0];
      const double expected = gamma * (y_con - mv) / (sigma_g * sigma_g) * gv;
      REQUIRE(out == Catch::Approx(expected).margin(1e-12));
    }
  REQUIRE_THROWS_AS(guidance_sampler(model, mu, -1.0, 0.0, 1.0, TimeGrid(0.0, 5.0, 20)), Error);
}

TEST_CASE("the approximate mean-gradient drift is exact in the stationary linear case",
          "[control]") {
  // With N(0,1) data and a linear reward, sigma^2/alpha * grad_x E[r(x_T)|x_t=x]
  // = e^{-(T-t)/2} b / alpha, which coincides with the exact optimal drift.
  const PretrainedModel model{testutil::standard_normal_1d(), 5.0};
  Reward r = Reward::linear({0.9});
  const double alpha = 1.3;
  for (double t : {0.0, 2.0, 4.5})
    for (double x : {-2.0, 0.3, 1.1}) {
      const double approx = std::exp(-0.5 * (5.0 - t)) * 0.9 / alpha;
      const double exact = oracle::analytic_optimal_drift(model, r, alpha, t, {x})[0];
      REQUIRE(std::abs(exact - approx) <= 1e-12);
    }
}

TEST_CASE("fit_time_reward_model: constant and terminal regression", "[control]") {
  const PretrainedModel model{testutil::standard_normal_1d(), 2.0};
  const TimeGrid grid(0.0, 2.0, 25);
  TrainConfig tc;
  tc.epochs = 60;
  tc.batch = 128;
  tc.lr = 1e-2;
  tc.seed = 18;

  Reward cst = Reward::bumps({0.0}, {0.0}, 0.6, {});
  TimeRewardModel mc = fit_time_reward_model(model, cst, 64, grid, {16, 16}, tc);
  for (double t : {0.0, 1.0, 2.0})
    for (double x : {-1.0, 0.0, 1.0}) REQUIRE(std::abs(mc.mu(t, {x}) - 0.6) <= 0.05);

  Reward lin = Reward::linear({1.0});
  TimeRewardModel ml = fit_time_reward_model(model, lin, 256, grid, {16, 16}, tc);
  // mu(T, x) regresses the deterministic terminal target r(x) = x
  double worst_T = 0.0;
  for (double x : {-1.5, -0.5, 0.5, 1.5})
    worst_T = std::max(worst_T, std::abs(ml.mu(2.0, {x}) - x));
  REQUIRE(worst_T <= 0.1);
  // and the interior matches the OU conditional mean e^{-(T-t)/2} x loosely
  double worst = 0.0;
  for (double t : {0.5, 1.0, 1.5})
    for (double x : {-1.0, 0.0, 1.0})
      worst = std::max(worst, std::abs(ml.mu(t, {x}) - std::exp(-0.5 * (2.0 - t)) * x));
  REQUIRE(worst <= 0.15);
}

TEST_CASE("elegant_finetune smoke: stages run, logs fill, sampling works", "[control]") {
  const PretrainedModel model{testutil::canonical_mixture(), 5.0};
  Reward r = Reward::linear({1.0});
  ValueFitConfig vcfg;
  vcfg.probes = 32;
  vcfg.rollouts = 16;
  vcfg.hidden = {16, 16};
  vcfg.train.epochs = 30;
  vcfg.train.batch = 16;
  vcfg.train.lr = 1e-2;
  vcfg.train.seed = 19;
  StageConfig s1;
  s1.batch = 16;
  s1.epochs = 3;
  s1.steps_per_epoch = 2;
  s1.lr = 1e-2;
  s1.hidden = {8, 8};
  s1.seed = 20;
  StageConfig s2 = s1;
  s2.seed = 21;
  FineTunedModel ft = elegant_finetune(model, r, 1.0, vcfg, s1, s2, 25);
  REQUIRE(ft.stage1_log.epoch_loss.size() == 3);
  REQUIRE(ft.stage2_log.epoch_loss.size() == 3);
  SampleBatch batch = sample_finetuned(ft, 8, 31337);
  REQUIRE(batch.x_T.size() == 8);
  SampleBatch batch2 = sample_finetuned(ft, 8, 31337);
  REQUIRE(batch.x_T == batch2.x_T);
}
