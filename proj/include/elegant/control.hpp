#pragma once

// The control stack: parameterized drift nets, the neural-SDE solver
// (pathwise gradients through the unrolled Euler-Maruyama recursion), stage-1
// initial-distribution learning on [-T, 0], stage-2 drift learning on [0, T],
// the two-stage fine-tune orchestration, the two-phase sampler, and the
// no-KL / truncation / random / naive / guidance baselines.
//
// Every sampler here is an instance of the same two-phase construction
// (phase 1 from x_fix on [-T, 0], phase 2 on [0, T]); the pretrained
// reference is the zero-drift instance. Phase 1 uses the trajectory stream
// with its top bit set so the two phases never share noise counters.

#include <cmath>
#include <functional>
#include <vector>

#include "elegant/nets.hpp"
#include "elegant/pretrained.hpp"
#include "elegant/rewards.hpp"
#include "elegant/sde.hpp"
#include "elegant/value.hpp"

namespace elegant {

inline constexpr uint64_t kPhase1StreamBit = uint64_t(1) << 63;

inline void time_features(double t, double span, double* out3) {
  out3[0] = t;
  out3[1] = std::sin(2.0 * M_PI * t / span);
  out3[2] = std::cos(2.0 * M_PI * t / span);
}

// Feed-forward drift u(t, x) with input [x, t, sin(2 pi t / span),
// cos(2 pi t / span)] and a zero-initialized output layer, so an untrained
// net is exactly the zero drift.
struct DriftNet {
  int dim = 1;
  double t_lo = 0.0;
  double t_hi = 1.0;
  MlpSpec spec;
  ad::ParamSet params;
  std::string prefix = "drift";

  static DriftNet create(int dim, std::vector<int> hidden, double t_lo, double t_hi,
                         uint64_t seed, std::string prefix = "drift") {
    DriftNet net;
    net.dim = dim;
    net.t_lo = t_lo;
    net.t_hi = t_hi;
    net.prefix = std::move(prefix);
    net.spec.in = dim + 3;
    net.spec.out = dim;
    net.spec.hidden = std::move(hidden);
    net.spec.zero_init_last = true;
    mlp_init(net.params, net.prefix, net.spec, seed);
    return net;
  }

  double span() const { return t_hi - t_lo; }

  void eval(double t, const double* x, double* out) const {
    std::vector<double> feat(dim + 3);
    for (int c = 0; c < dim; ++c) feat[c] = x[c];
    time_features(t, span(), feat.data() + dim);
    Tensor o = mlp_forward(params, prefix, spec, Tensor::column(feat));
    for (int c = 0; c < dim; ++c) out[c] = o.v[c];
  }

  ad::Id record(ad::Graph& g, double t, ad::Id X, bool trainable) const {
    const int B = g.value(X).cols;
    Tensor tf(3, B);
    double row[3];
    time_features(t, span(), row);
    for (int rr = 0; rr < 3; ++rr)
      for (int j = 0; j < B; ++j) tf.at(rr, j) = row[rr];
    ad::Id input = g.concat_rows(X, g.constant(std::move(tf)));
    return mlp_record(g, params, prefix, spec, input, trainable);
  }

  DriftEval as_eval() const {
    return [this](double t, const double* x, double* out) { eval(t, x, out); };
  }
};

struct StageConfig {
  double alpha = 1.0;
  int batch = 128;
  int epochs = 50;
  int steps_per_epoch = 1;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;
  uint64_t seed = 0;
  std::vector<int> hidden = {64, 64};

  void validate() const {
    if (!(alpha > 0.0)) throw Error("StageConfig: alpha must be positive");
    if (batch < 1) throw Error("StageConfig: batch must be >= 1");
    if (epochs < 0) throw Error("StageConfig: epochs must be nonnegative");
    if (steps_per_epoch < 1) throw Error("StageConfig: steps_per_epoch must be >= 1");
  }
};

// Draws a batch of initial states, one per trajectory column; column j of
// update u must use stream stream0 + j so rollouts replay exactly.
using BatchInit = std::function<std::vector<std::vector<double>>(uint64_t master,
                                                                 uint64_t stream0, int batch)>;

struct SolveObjective {
  const RecordedDrift* base = nullptr;  // added to the state update, not penalized
  std::function<ad::Id(ad::Graph&, ad::Id xT)> terminal;  // [1 x B]; null = 0
  SigmaEval sigma;
  bool include_cost = true;  // subtract the recorded running cost from L
  // Controlled drift active only from this step onward (truncation); -1 = all.
  std::function<int(int epoch)> gate_step;
};

// Maximizes E[L] with L = terminal(x_T) - y_T over the drift parameters by
// Adam on pathwise gradients. Logs the per-epoch mean objective.
inline TrainLog neural_sde_solve(const SolveObjective& objective, DriftNet& drift,
                                 const BatchInit& init, const TimeGrid& grid,
                                 const StageConfig& cfg) {
  cfg.validate();
  TrainLog log;
  const double dt = grid.dt();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const int gate = objective.gate_step ? objective.gate_step(epoch) : -1;
    const double gate_time = gate <= 0 ? grid.t_start - 1.0 : grid.time(gate) - 0.25 * dt;
    RecordedDrift control;
    control.plain = [&](double t, const double* x, double* out) {
      if (t < gate_time) {
        for (int c = 0; c < drift.dim; ++c) out[c] = 0.0;
        return;
      }
      drift.eval(t, x, out);
    };
    control.record = [&](ad::Graph& g, double t, ad::Id X) {
      if (t < gate_time) return g.constant(Tensor(drift.dim, g.value(X).cols));
      return drift.record(g, t, X, /*trainable=*/true);
    };
    double epoch_obj = 0.0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      const uint64_t update = static_cast<uint64_t>(epoch) * cfg.steps_per_epoch + step;
      const uint64_t stream0 = update * cfg.batch;
      auto x_init = init(cfg.seed, stream0, cfg.batch);
      RecordedRollout roll = simulate_recorded(objective.base, control, objective.sigma,
                                               cfg.alpha, x_init, grid, cfg.seed, stream0);
      ad::Graph& g = roll.graph;
      ad::Id L = -1;
      if (objective.terminal) L = objective.terminal(g, roll.x_terminal);
      if (objective.include_cost)
        L = (L < 0) ? g.scalar_mul(-1.0, roll.cost_terminal) : g.sub(L, roll.cost_terminal);
      if (L < 0) throw Error("neural_sde_solve: objective has neither terminal nor cost term");
      ad::Id neg_mean = g.scalar_mul(-1.0 / cfg.batch, g.sum(L));
      const double obj = -g.value(neg_mean).v[0];
      if (!std::isfinite(obj))
        throw Error("neural_sde_solve: non-finite loss at epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(step));
      g.backward(neg_mean);
      ad::GradMap grads = g.param_grads();
      ad::clip_global_norm(grads, cfg.clip_norm);
      ad::adam_step(drift.params, grads, {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});
      epoch_obj += obj;
    }
    log.epoch_loss.push_back(epoch_obj / cfg.steps_per_epoch);
  }
  return log;
}

// ---- stage 1: initial-distribution learning on [-T, 0] ----

inline std::vector<double> default_x_fix(int dim) { return std::vector<double>(dim, 0.0); }

// Reference sigma on [-T, 0] chosen so the zero-drift law at t = 0 is exactly
// nu_ini = N(0, I): constant 1/sqrt(T).
inline double sigma_tilde_for(double horizon) { return 1.0 / std::sqrt(horizon); }

inline BatchInit fixed_init(std::vector<double> x_fix) {
  return [x_fix](uint64_t, uint64_t, int batch) {
    return std::vector<std::vector<double>>(batch, x_fix);
  };
}

inline TrainLog solve_stage1(const ValueModel& value, double sigma_tilde,
                             const std::vector<double>& x_fix, const TimeGrid& grid,
                             const StageConfig& cfg, DriftNet& q) {
  SolveObjective obj;
  obj.terminal = [&value](ad::Graph& g, ad::Id xT) { return value.record(g, xT); };
  obj.sigma = [sigma_tilde](double) { return sigma_tilde; };
  obj.include_cost = true;
  return neural_sde_solve(obj, q, fixed_init(x_fix), grid, cfg);
}

// ---- stage 2: drift learning on [0, T] ----

inline RecordedDrift reverse_drift_recorded(const PretrainedModel& model) {
  RecordedDrift rd;
  rd.plain = [&model](double t, const double* x, double* out) { model.reverse_drift(t, x, out); };
  rd.record = [&model](ad::Graph& g, double t, ad::Id X) {
    return model.record_reverse_drift(g, t, X);
  };
  return rd;
}

inline TrainLog solve_stage2(const PretrainedModel& model, const Reward& reward,
                             const BatchInit& init, const TimeGrid& grid, const StageConfig& cfg,
                             DriftNet& u, const RecordedDrift& base) {
  SolveObjective obj;
  obj.base = &base;
  obj.terminal = [&reward](ad::Graph& g, ad::Id xT) { return reward.record(g, xT); };
  obj.sigma = [](double) { return 1.0; };
  obj.include_cost = true;
  (void)model;
  return neural_sde_solve(obj, u, init, grid, cfg);
}

// ---- two-phase samplers ----

struct SampleBatch {
  std::vector<std::vector<double>> x_T;
  std::vector<Trajectory> phase1;
  std::vector<Trajectory> phase2;
};

struct Sampler {
  int dim = 1;
  TimeGrid grid1, grid2;
  double sigma_tilde = 1.0;
  std::vector<double> x_fix;
  const PretrainedModel* model = nullptr;
  DriftEval q_drift;  // phase-1 control (null = zero)
  DriftEval u_drift;  // phase-2 control on top of the pretrained drift (null = zero)

  SampleBatch draw(int n, uint64_t seed) const {
    SampleBatch out;
    out.x_T.reserve(n);
    out.phase1.reserve(n);
    out.phase2.reserve(n);
    SdeSpec phase1_spec;
    phase1_spec.dim = dim;
    phase1_spec.drift = q_drift;
    const double st = sigma_tilde;
    phase1_spec.sigma = [st](double) { return st; };
    SdeSpec phase2_spec;
    phase2_spec.dim = dim;
    const PretrainedModel* m = model;
    const DriftEval& u = u_drift;
    const int d = dim;
    phase2_spec.drift = [m, &u, d](double t, const double* x, double* outv) {
      m->reverse_drift(t, x, outv);
      if (u) {
        double tmp[8];
        u(t, x, tmp);
        for (int c = 0; c < d; ++c) outv[c] = outv[c] + tmp[c];
      }
    };
    phase2_spec.sigma = [](double) { return 1.0; };
    for (int i = 0; i < n; ++i) {
      Trajectory t1 = simulate(phase1_spec, x_fix, grid1,
                               RngStream(seed, static_cast<uint64_t>(i) | kPhase1StreamBit));
      Trajectory t2 = simulate(phase2_spec, t1.terminal(), grid2, RngStream(seed, i));
      out.x_T.push_back(t2.terminal());
      out.phase1.push_back(std::move(t1));
      out.phase2.push_back(std::move(t2));
    }
    return out;
  }
};

inline Sampler pretrained_sampler(const PretrainedModel& model, const TimeGrid& grid2) {
  Sampler s;
  s.dim = model.dim();
  s.model = &model;
  s.grid2 = grid2;
  s.grid1 = TimeGrid(-model.horizon, 0.0, grid2.n_steps);
  s.sigma_tilde = sigma_tilde_for(model.horizon);
  s.x_fix = default_x_fix(model.dim());
  return s;
}

// ---- orchestration ----

struct ValueFitConfig {
  std::string variant = "soft";  // "soft" or "mean"
  int probes = 512;
  int rollouts = 128;
  double probe_scale = 1.0;
  std::vector<int> hidden = {64, 64};
  TrainConfig train;
};

struct FineTunedModel {
  const PretrainedModel* model = nullptr;
  double alpha = 1.0;
  ValueModel value;
  DriftNet q;
  DriftNet u;
  TimeGrid grid1, grid2;
  double sigma_tilde = 1.0;
  std::vector<double> x_fix;
  TrainLog stage1_log, stage2_log;
};

inline ValueModel fit_value(const PretrainedModel& model, const Reward& reward, double alpha,
                            const TimeGrid& grid, const ValueFitConfig& cfg) {
  if (cfg.variant == "soft")
    return fit_value_soft(model, reward, alpha, cfg.probes, cfg.rollouts, grid, cfg.hidden,
                          cfg.train, cfg.probe_scale);
  if (cfg.variant == "mean") {
    ValueDataset ds = generate_value_dataset(model, reward, cfg.probes, grid, cfg.train.seed);
    return fit_value_mean(ds, cfg.hidden, cfg.train);
  }
  throw Error("fit_value: unknown variant '" + cfg.variant + "'");
}

inline BatchInit stage1_rollout_init(const FineTunedModel& ft) {
  // Stage-2 initial states come from phase-1 rollouts under the learned q,
  // replayable per stream.
  const FineTunedModel* p = &ft;
  return [p](uint64_t master, uint64_t stream0, int batch) {
    SdeSpec spec;
    spec.dim = p->q.dim;
    spec.drift = p->q.as_eval();
    const double st = p->sigma_tilde;
    spec.sigma = [st](double) { return st; };
    std::vector<std::vector<double>> out;
    out.reserve(batch);
    for (int j = 0; j < batch; ++j) {
      Trajectory t1 = simulate(spec, p->x_fix, p->grid1,
                               RngStream(master, (stream0 + j) | kPhase1StreamBit));
      out.push_back(t1.terminal());
    }
    return out;
  };
}

// Value fit, then Eq.-style stage 1 (initial law), then stage 2 (drift), all
// at a shared alpha. Stage failures abort with the stage named.
inline FineTunedModel elegant_finetune(const PretrainedModel& model, const Reward& reward,
                                       double alpha, const ValueFitConfig& value_cfg,
                                       StageConfig stage1_cfg, StageConfig stage2_cfg,
                                       int n_steps) {
  FineTunedModel ft;
  ft.model = &model;
  ft.alpha = alpha;
  ft.grid1 = TimeGrid(-model.horizon, 0.0, n_steps);
  ft.grid2 = TimeGrid(0.0, model.horizon, n_steps);
  ft.sigma_tilde = sigma_tilde_for(model.horizon);
  ft.x_fix = default_x_fix(model.dim());
  stage1_cfg.alpha = alpha;
  stage2_cfg.alpha = alpha;

  try {
    ft.value = fit_value(model, reward, alpha, ft.grid2, value_cfg);
  } catch (const Error& e) {
    throw Error(std::string("value stage: ") + e.what());
  }
  ft.q = DriftNet::create(model.dim(), stage1_cfg.hidden, ft.grid1.t_start, ft.grid1.t_end,
                          stage1_cfg.seed ^ 0x51ull, "q");
  try {
    ft.stage1_log = solve_stage1(ft.value, ft.sigma_tilde, ft.x_fix, ft.grid1, stage1_cfg, ft.q);
  } catch (const Error& e) {
    throw Error(std::string("stage1: ") + e.what());
  }
  ft.u = DriftNet::create(model.dim(), stage2_cfg.hidden, ft.grid2.t_start, ft.grid2.t_end,
                          stage2_cfg.seed ^ 0x52ull, "u");
  try {
    const RecordedDrift base = reverse_drift_recorded(model);
    ft.stage2_log =
        solve_stage2(model, reward, stage1_rollout_init(ft), ft.grid2, stage2_cfg, ft.u, base);
  } catch (const Error& e) {
    throw Error(std::string("stage2: ") + e.what());
  }
  return ft;
}

inline Sampler make_sampler(const FineTunedModel& ft) {
  Sampler s = pretrained_sampler(*ft.model, ft.grid2);
  s.grid1 = ft.grid1;
  s.sigma_tilde = ft.sigma_tilde;
  s.x_fix = ft.x_fix;
  s.q_drift = ft.q.as_eval();
  s.u_drift = ft.u.as_eval();
  return s;
}

inline SampleBatch sample_finetuned(const FineTunedModel& ft, int count, uint64_t seed) {
  return make_sampler(ft).draw(count, seed);
}

// ---- baselines ----

enum class NoKlMode { Full, Truncation, RandomK };

struct NoKlResult {
  DriftNet u;
  TrainLog log;
  double gate_time = -1.0;  // sampling-time gate (Truncation only)
};

// Reward-only training (no running-cost term, initial law fixed at nu_ini).
// Truncation trains and samples the drift only on [K, T]; RandomK draws K
// per epoch during training and samples ungated.
inline NoKlResult train_no_kl(const PretrainedModel& model, const Reward& reward,
                              const TimeGrid& grid, const StageConfig& cfg,
                              NoKlMode mode = NoKlMode::Full, double k_fraction = 0.8) {
  NoKlResult out;
  out.u = DriftNet::create(model.dim(), cfg.hidden, grid.t_start, grid.t_end, cfg.seed ^ 0x20ull,
                           "u");
  SolveObjective obj;
  const RecordedDrift base = reverse_drift_recorded(model);
  obj.base = &base;
  obj.terminal = [&reward](ad::Graph& g, ad::Id xT) { return reward.record(g, xT); };
  obj.sigma = [](double) { return 1.0; };
  obj.include_cost = false;
  if (mode == NoKlMode::Truncation) {
    const int gate = static_cast<int>(std::llround(k_fraction * grid.n_steps));
    obj.gate_step = [gate](int) { return gate; };
    out.gate_time = grid.time(gate);
  } else if (mode == NoKlMode::RandomK) {
    const uint64_t seed = cfg.seed;
    const int n = grid.n_steps;
    obj.gate_step = [seed, n](int epoch) {
      RngStream rng(seed ^ 0x4Bull, epoch);
      return static_cast<int>(rng.uniform(0) * n) % n;
    };
  }
  const int dim = model.dim();
  BatchInit init = [dim](uint64_t master, uint64_t stream0, int batch) {
    std::vector<std::vector<double>> xs;
    xs.reserve(batch);
    for (int j = 0; j < batch; ++j)
      xs.push_back(draw_standard_normal_init(RngStream(master, stream0 + j), dim));
    return xs;
  };
  out.log = neural_sde_solve(obj, out.u, init, grid, cfg);
  return out;
}

inline Sampler no_kl_sampler(const PretrainedModel& model, const NoKlResult& trained,
                             const TimeGrid& grid) {
  Sampler s = pretrained_sampler(model, grid);
  const DriftNet* net = &trained.u;
  const double gate = trained.gate_time;
  const double dt = grid.dt();
  const int d = model.dim();
  s.u_drift = [net, gate, dt, d](double t, const double* x, double* outv) {
    if (gate >= 0.0 && t < gate - 0.25 * dt) {
      for (int c = 0; c < d; ++c) outv[c] = 0.0;
      return;
    }
    net->eval(t, x, outv);
  };
  return s;
}

// Remark-style naive drift f + grad r / alpha; exists to demonstrate failure.
inline Sampler naive_drift_sampler(const PretrainedModel& model, const Reward& reward,
                                   double alpha, const TimeGrid& grid) {
  Sampler s = pretrained_sampler(model, grid);
  const Reward* r = &reward;
  const int d = model.dim();
  s.u_drift = [r, alpha, d](double, const double* x, double* outv) {
    std::vector<double> g = r->grad(std::vector<double>(x, x + d));
    for (int c = 0; c < d; ++c) outv[c] = g[c] / alpha;
  };
  return s;
}

// Per-time mean-reward model mu(t, x) regressed on pretrained rollouts.
struct TimeRewardModel {
  DriftNet net;  // reused shape machinery; out dim 1

  double mu(double t, const std::vector<double>& x) const {
    std::vector<double> feat(net.dim + 3);
    for (int c = 0; c < net.dim; ++c) feat[c] = x[c];
    time_features(t, net.span(), feat.data() + net.dim);
    return mlp_forward_scalar(net.params, net.prefix, net.spec, feat);
  }

  std::vector<double> grad_x(double t, const std::vector<double>& x) const {
    std::vector<double> feat(net.dim + 3);
    for (int c = 0; c < net.dim; ++c) feat[c] = x[c];
    time_features(t, net.span(), feat.data() + net.dim);
    std::vector<double> g = mlp_input_grad(net.params, net.prefix, net.spec, feat);
    return std::vector<double>(g.begin(), g.begin() + net.dim);
  }
};

inline TimeRewardModel fit_time_reward_model(const PretrainedModel& model, const Reward& reward,
                                             int n_rollouts, const TimeGrid& grid,
                                             std::vector<int> hidden, const TrainConfig& cfg) {
  if (n_rollouts < 1) throw Error("fit_time_reward_model: need at least one rollout");
  TimeRewardModel trm;
  trm.net = DriftNet::create(model.dim(), std::move(hidden), grid.t_start, grid.t_end,
                             cfg.seed ^ 0x77ull, "mu");
  trm.net.spec.out = 1;
  trm.net.spec.zero_init_last = false;
  trm.net.params = ad::ParamSet();
  mlp_init(trm.net.params, trm.net.prefix, trm.net.spec, cfg.seed ^ 0x77ull);

  const SdeSpec spec = pretrained_sde(model);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < n_rollouts; ++i) {
    RngStream rng(cfg.seed, i);
    Trajectory traj = simulate(spec, draw_standard_normal_init(rng, model.dim()), grid, rng);
    const double r = reward(traj.terminal());
    for (int k = 0; k <= grid.n_steps; ++k) {
      std::vector<double> feat(model.dim() + 3);
      for (int c = 0; c < model.dim(); ++c) feat[c] = traj.x[k][c];
      time_features(grid.time(k), trm.net.span(), feat.data() + model.dim());
      xs.push_back(std::move(feat));
      ys.push_back(r);
    }
  }
  train_regression(trm.net.params, trm.net.prefix, trm.net.spec, xs, ys, cfg);
  return trm;
}

// Classifier-style guided sampling: drift perturbation
// gamma sigma^2(t) (y_con - mu(t, x)) / sigma_g^2 * grad_x mu(t, x).
inline Sampler guidance_sampler(const PretrainedModel& model, const TimeRewardModel& mu,
                                double gamma, double y_con, double sigma_g,
                                const TimeGrid& grid) {
  if (gamma < 0.0) throw Error("guidance_sampler: gamma must be nonnegative");
  if (!(sigma_g > 0.0)) throw Error("guidance_sampler: sigma_g must be positive");
  Sampler s = pretrained_sampler(model, grid);
  if (gamma == 0.0) return s;  // exactly the pretrained sampler
  const TimeRewardModel* m = &mu;
  const int d = model.dim();
  s.u_drift = [m, gamma, y_con, sigma_g, d](double t, const double* x, double* outv) {
    const std::vector<double> xv(x, x + d);
    const double mv = m->mu(t, xv);
    const std::vector<double> g = m->grad_x(t, xv);
    const double coef = gamma * 1.0 * (y_con - mv) / (sigma_g * sigma_g);
    for (int c = 0; c < d; ++c) outv[c] = coef * g[c];
  };
  return s;
}

}  // namespace elegant
