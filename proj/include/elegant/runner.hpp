#pragma once

// Orchestration behind the CLI subcommands: build the model and rewards from
// a config, run the configured method end to end, persist checkpoints and
// manifests, evaluate samplers, verify the oracle identities, and sweep
// alpha. One experiment per process; all outputs deterministic given
// (config, seeds) apart from manifest wall-clock timings.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "elegant/config.hpp"
#include "elegant/control.hpp"
#include "elegant/metrics.hpp"
#include "elegant/oracle.hpp"
#include "elegant/svg.hpp"

namespace elegant {

inline constexpr const char* kLibraryVersion = "0.1.0";

namespace fsys = std::filesystem;

struct RunManifest {
  std::string config_hash;
  std::string method;
  std::map<std::string, std::string> artifacts;
  std::map<std::string, double> timings_sec;
  std::string library_version = kLibraryVersion;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["library_version"] = library_version;
    j["config_hash"] = config_hash;
    j["method"] = method;
    j["artifacts"] = artifacts;
    j["timings_sec"] = timings_sec;
    return j;
  }
};

namespace rundetail {

inline void write_json(const nlohmann::ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for writing: " + path);
  out << j.dump(1) << "\n";
}

inline nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  nlohmann::json j;
  in >> j;
  return j;
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

}  // namespace rundetail

// ---- net persistence (checkpoint + reconstruction metadata) ----

inline nlohmann::ordered_json driftnet_to_json(const DriftNet& net) {
  nlohmann::ordered_json j;
  j["dim"] = net.dim;
  j["t_lo"] = net.t_lo;
  j["t_hi"] = net.t_hi;
  j["hidden"] = net.spec.hidden;
  j["out"] = net.spec.out;
  j["prefix"] = net.prefix;
  j["params"] = ad::checkpoint_to_json(net.params);
  return j;
}

inline DriftNet driftnet_from_json(const nlohmann::json& j) {
  DriftNet net;
  net.dim = j.at("dim").get<int>();
  net.t_lo = j.at("t_lo").get<double>();
  net.t_hi = j.at("t_hi").get<double>();
  net.prefix = j.at("prefix").get<std::string>();
  net.spec.in = net.dim + 3;
  net.spec.out = j.at("out").get<int>();
  net.spec.hidden = j.at("hidden").get<std::vector<int>>();
  net.spec.zero_init_last = true;
  net.params = ad::checkpoint_from_json(j.at("params"));
  return net;
}

inline nlohmann::ordered_json value_model_to_json(const ValueModel& vm) {
  nlohmann::ordered_json j;
  j["in"] = vm.spec.in;
  j["hidden"] = vm.spec.hidden;
  j["prefix"] = vm.prefix;
  j["params"] = ad::checkpoint_to_json(vm.params);
  j["loss_curve"] = vm.log.epoch_loss;
  return j;
}

inline ValueModel value_model_from_json(const nlohmann::json& j) {
  ValueModel vm;
  vm.spec.in = j.at("in").get<int>();
  vm.spec.out = 1;
  vm.spec.hidden = j.at("hidden").get<std::vector<int>>();
  vm.prefix = j.at("prefix").get<std::string>();
  vm.params = ad::checkpoint_from_json(j.at("params"));
  return vm;
}

// ---- context: model + rewards realized from the config ----

struct RunContext {
  ExperimentConfig cfg;
  PretrainedModel model;
  Reward nominal = Reward::linear({1.0});
  std::optional<Reward> genuine;
  double nominal_holdout_mse = -1.0;
  TimeGrid grid1{-5.0, 0.0, 100}, grid2{0.0, 5.0, 100};
};

inline Reward build_analytic_reward(const RewardSpec& spec, int dim) {
  if (spec.kind == "linear") {
    if (static_cast<int>(spec.coeffs.size()) != dim)
      throw ConfigError("reward: coeffs dimension != mixture dimension");
    return Reward::linear(spec.coeffs);
  }
  if (spec.kind == "quadratic") return Reward::quadratic(spec.diag, spec.coeffs, spec.constant);
  if (spec.kind == "bumps")
    return Reward::bumps(spec.diag, spec.coeffs, spec.constant, spec.bump_list);
  if (spec.kind == "net") {
    MlpSpec ms;
    ms.in = dim;
    ms.out = 1;
    ms.hidden = spec.hidden;
    ms.relu = spec.relu;
    return Reward::net(ad::load_checkpoint(spec.checkpoint), ms, "reward");
  }
  throw ConfigError("reward kind '" + spec.kind + "' cannot be built analytically");
}

// Truncated-support protocol: draw x from the selected mixture components,
// label with the genuine reward, fit a net.
inline NominalFit run_nominal_fit(const RewardSpec& spec, const GaussianMixture& mixture,
                                  const Reward& genuine) {
  GaussianMixture support = mixture;
  if (!spec.fit_components.empty()) {
    GaussianMixture sub;
    sub.dim = mixture.dim;
    double total = 0.0;
    for (int idx : spec.fit_components) {
      if (idx < 0 || idx >= mixture.n_components())
        throw ConfigError("reward.components: index out of range");
      sub.weights.push_back(mixture.weights[idx]);
      sub.means.push_back(mixture.means[idx]);
      sub.vars.push_back(mixture.vars[idx]);
      total += mixture.weights[idx];
    }
    for (double& w : sub.weights) w /= total;
    support = std::move(sub);
  }
  RngStream rng(spec.fit_seed, 0xF17DA7Aull);
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  xs.reserve(spec.fit_n);
  for (int i = 0; i < spec.fit_n; ++i) {
    xs.push_back(sample(support, rng, i));
    ys.push_back(genuine(xs.back()));
  }
  TrainConfig tc;
  tc.epochs = spec.fit_epochs;
  tc.batch = spec.fit_batch;
  tc.lr = spec.fit_lr;
  tc.clip_norm = spec.fit_clip;
  tc.seed = spec.fit_seed;
  return fit_nominal_reward(xs, ys, spec.hidden, tc, spec.holdout_fraction, spec.relu);
}

inline RunContext build_context(const ExperimentConfig& cfg) {
  RunContext ctx;
  ctx.cfg = cfg;
  ctx.model.data = cfg.mixture;
  ctx.model.horizon = cfg.horizon;
  ctx.grid1 = TimeGrid(-cfg.horizon, 0.0, cfg.n_steps);
  ctx.grid2 = TimeGrid(0.0, cfg.horizon, cfg.n_steps);
  if (cfg.has_genuine) ctx.genuine = build_analytic_reward(cfg.genuine, cfg.mixture.dim);
  if (cfg.reward.kind == "fit_from_genuine") {
    NominalFit fit = run_nominal_fit(cfg.reward, cfg.mixture, *ctx.genuine);
    ctx.nominal = std::move(fit.reward);
    ctx.nominal_holdout_mse = fit.holdout_mse;
  } else {
    ctx.nominal = build_analytic_reward(cfg.reward, cfg.mixture.dim);
  }
  return ctx;
}

inline StageConfig to_stage_config(const StageSpec& s, double alpha) {
  StageConfig c;
  c.alpha = alpha;
  c.batch = s.batch;
  c.epochs = s.epochs;
  c.steps_per_epoch = s.steps_per_epoch;
  c.lr = s.lr;
  c.clip_norm = s.clip_norm;
  c.seed = s.seed;
  c.hidden = s.hidden;
  return c;
}

inline ValueFitConfig to_value_cfg(const ValueFitSpec& v) {
  ValueFitConfig c;
  c.variant = v.variant;
  c.probes = v.probes;
  c.rollouts = v.rollouts;
  c.probe_scale = v.probe_scale;
  c.hidden = v.hidden;
  c.train.epochs = v.epochs;
  c.train.batch = v.batch;
  c.train.lr = v.lr;
  c.train.clip_norm = v.clip_norm;
  c.train.seed = v.seed;
  return c;
}

// ---- finetune ----

inline RunManifest cmd_finetune(const ExperimentConfig& cfg) {
  RunContext ctx = build_context(cfg);
  const fsys::path out_dir(cfg.output_dir);
  fsys::create_directories(out_dir);
  RunManifest manifest;
  manifest.config_hash = config_hash(cfg);
  manifest.method = cfg.method.name;
  rundetail::Timer total;

  rundetail::write_json(serialize_config(cfg), (out_dir / "config.json").string());
  manifest.artifacts["config"] = (out_dir / "config.json").string();
  if (ctx.nominal_holdout_mse >= 0.0) {
    nlohmann::ordered_json fj;
    fj["holdout_mse"] = ctx.nominal_holdout_mse;
    rundetail::write_json(fj, (out_dir / "nominal_fit.json").string());
    manifest.artifacts["nominal_fit"] = (out_dir / "nominal_fit.json").string();
    ad::save_checkpoint(ctx.nominal.params(), (out_dir / "nominal_reward.json").string());
    manifest.artifacts["nominal_reward"] = (out_dir / "nominal_reward.json").string();
  }

  const std::string& m = cfg.method.name;
  if (m == "elegant") {
    rundetail::Timer t;
    FineTunedModel ft =
        elegant_finetune(ctx.model, ctx.nominal, cfg.alpha, to_value_cfg(cfg.value_fit),
                         to_stage_config(cfg.stage1, cfg.alpha),
                         to_stage_config(cfg.stage2, cfg.alpha), cfg.n_steps);
    manifest.timings_sec["finetune"] = t.seconds();
    rundetail::write_json(value_model_to_json(ft.value), (out_dir / "value.json").string());
    rundetail::write_json(driftnet_to_json(ft.q), (out_dir / "q.json").string());
    rundetail::write_json(driftnet_to_json(ft.u), (out_dir / "u.json").string());
    manifest.artifacts["value"] = (out_dir / "value.json").string();
    manifest.artifacts["q"] = (out_dir / "q.json").string();
    manifest.artifacts["u"] = (out_dir / "u.json").string();
    nlohmann::ordered_json logs;
    logs["stage1_objective"] = ft.stage1_log.epoch_loss;
    logs["stage2_objective"] = ft.stage2_log.epoch_loss;
    logs["value_loss"] = ft.value.log.epoch_loss;
    rundetail::write_json(logs, (out_dir / "training_log.json").string());
    manifest.artifacts["training_log"] = (out_dir / "training_log.json").string();
  } else if (m == "no_kl" || m == "truncation" || m == "random_k") {
    rundetail::Timer t;
    NoKlMode mode = m == "no_kl" ? NoKlMode::Full
                                 : (m == "truncation" ? NoKlMode::Truncation : NoKlMode::RandomK);
    NoKlResult res = train_no_kl(ctx.model, ctx.nominal, ctx.grid2,
                                 to_stage_config(cfg.stage2, cfg.alpha), mode,
                                 cfg.method.k_fraction);
    manifest.timings_sec["finetune"] = t.seconds();
    nlohmann::ordered_json uj = driftnet_to_json(res.u);
    uj["gate_time"] = res.gate_time;
    rundetail::write_json(uj, (out_dir / "u.json").string());
    manifest.artifacts["u"] = (out_dir / "u.json").string();
    nlohmann::ordered_json logs;
    logs["objective"] = res.log.epoch_loss;
    rundetail::write_json(logs, (out_dir / "training_log.json").string());
    manifest.artifacts["training_log"] = (out_dir / "training_log.json").string();
  } else if (m == "guidance") {
    rundetail::Timer t;
    TrainConfig tc;
    tc.epochs = cfg.method.guidance_epochs;
    tc.batch = cfg.method.guidance_batch;
    tc.lr = cfg.method.guidance_lr;
    tc.seed = cfg.method.guidance_seed;
    TimeRewardModel trm = fit_time_reward_model(ctx.model, ctx.nominal,
                                                cfg.method.guidance_rollouts, ctx.grid2,
                                                cfg.method.guidance_hidden, tc);
    manifest.timings_sec["finetune"] = t.seconds();
    rundetail::write_json(driftnet_to_json(trm.net), (out_dir / "mu.json").string());
    manifest.artifacts["mu"] = (out_dir / "mu.json").string();
  } else if (m == "naive" || m == "pretrained") {
    // Nothing to train; the manifest references only the analytic model spec.
  } else {
    throw ConfigError("unknown method '" + m + "'");
  }

  manifest.timings_sec["total"] = total.seconds();
  for (const auto& [name, path] : manifest.artifacts)
    if (!fsys::exists(path)) throw Error("manifest artifact missing on completion: " + path);
  rundetail::write_json(manifest.to_json(), (out_dir / "manifest.json").string());
  return manifest;
}

// ---- sampler reconstruction from a run directory ----

inline Sampler build_sampler(const RunContext& ctx, const std::string& run_dir,
                             std::vector<std::shared_ptr<void>>& keepalive) {
  const std::string& m = ctx.cfg.method.name;
  const fsys::path dir(run_dir);
  auto need = [&](const char* name) {
    const fsys::path p = dir / name;
    if (!fsys::exists(p)) throw Error("missing artifact: " + p.string());
    return p.string();
  };
  if (m == "pretrained") return pretrained_sampler(ctx.model, ctx.grid2);
  if (m == "naive") return naive_drift_sampler(ctx.model, ctx.nominal, ctx.cfg.alpha, ctx.grid2);
  if (m == "guidance") {
    auto trm = std::make_shared<TimeRewardModel>();
    trm->net = driftnet_from_json(rundetail::read_json(need("mu.json")));
    keepalive.push_back(trm);
    return guidance_sampler(ctx.model, *trm, ctx.cfg.method.gamma, ctx.cfg.method.y_con,
                            ctx.cfg.method.sigma_g, ctx.grid2);
  }
  if (m == "no_kl" || m == "truncation" || m == "random_k") {
    auto res = std::make_shared<NoKlResult>();
    const nlohmann::json uj = rundetail::read_json(need("u.json"));
    res->u = driftnet_from_json(uj);
    res->gate_time = uj.value("gate_time", -1.0);
    keepalive.push_back(res);
    return no_kl_sampler(ctx.model, *res, ctx.grid2);
  }
  if (m == "elegant") {
    auto ft = std::make_shared<FineTunedModel>();
    ft->model = &ctx.model;
    ft->alpha = ctx.cfg.alpha;
    ft->q = driftnet_from_json(rundetail::read_json(need("q.json")));
    ft->u = driftnet_from_json(rundetail::read_json(need("u.json")));
    ft->grid1 = ctx.grid1;
    ft->grid2 = ctx.grid2;
    ft->sigma_tilde = sigma_tilde_for(ctx.model.horizon);
    ft->x_fix = default_x_fix(ctx.model.dim());
    keepalive.push_back(ft);
    return make_sampler(*ft);
  }
  throw ConfigError("unknown method '" + m + "'");
}

// ---- evaluate ----

struct EvaluateResult {
  EvalReport report;
  std::string report_path;
};

inline EvaluateResult evaluate_run(const RunContext& ctx, const std::string& run_dir) {
  std::vector<std::shared_ptr<void>> keepalive;
  Sampler sampler = build_sampler(ctx, run_dir, keepalive);
  EvalSpec spec;
  spec.n = ctx.cfg.evaluation.n;
  spec.seed = ctx.cfg.evaluation.seed;
  spec.bootstrap_resamples = ctx.cfg.evaluation.bootstrap_resamples;
  if (ctx.genuine) spec.genuine = &*ctx.genuine;
  std::optional<TiltedTarget> target;
  if (ctx.nominal.is_linear()) {
    target = make_tilted_target(ctx.model.data, ctx.nominal, ctx.cfg.alpha);
    spec.target = &target->tilted;
  }
  SampleBatch batch;
  EvaluateResult out;
  out.report = evaluate(sampler, ctx.nominal, spec, &batch);
  out.report.config_hash = config_hash(ctx.cfg);

  const fsys::path dir(run_dir);
  rundetail::write_json(eval_report_to_json(out.report), (dir / "report.json").string());
  out.report_path = (dir / "report.json").string();

  std::vector<double> rvals(batch.x_T.size());
  for (size_t i = 0; i < batch.x_T.size(); ++i) rvals[i] = ctx.nominal(batch.x_T[i]);
  Histogram hr = make_histogram(rvals, ctx.cfg.evaluation.histogram_bins);
  write_histogram_csv(hr, (dir / "histogram_nominal.csv").string());
  std::vector<SvgSeries> series = {{"nominal r", "#3366cc", hr}};
  if (ctx.genuine) {
    std::vector<double> gvals(batch.x_T.size());
    for (size_t i = 0; i < batch.x_T.size(); ++i) gvals[i] = (*ctx.genuine)(batch.x_T[i]);
    Histogram hg = make_histogram(gvals, ctx.cfg.evaluation.histogram_bins);
    write_histogram_csv(hg, (dir / "histogram_genuine.csv").string());
    series.push_back({"genuine r*", "#cc3333", hg});
  }
  write_histogram_svg(series, "reward histogram (" + ctx.cfg.method.name + ")",
                      (dir / "histogram.svg").string());
  return out;
}

// Loads the config stored next to a manifest and evaluates that run.
inline EvaluateResult cmd_evaluate(const std::string& manifest_path,
                                   std::optional<uint64_t> seed_override = std::nullopt,
                                   std::optional<int> n_override = std::nullopt) {
  const fsys::path mpath(manifest_path);
  if (!fsys::exists(mpath)) throw Error("missing artifact: " + manifest_path);
  const fsys::path dir = mpath.parent_path();
  ExperimentConfig cfg = load_config((dir / "config.json").string());
  if (seed_override) cfg.evaluation.seed = *seed_override + 4;
  if (n_override) apply_n_override(cfg, *n_override);
  RunContext ctx = build_context(cfg);
  return evaluate_run(ctx, dir.string());
}

inline void write_comparison_csv(const std::vector<std::pair<std::string, EvalReport>>& rows,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open comparison CSV for writing: " + path);
  out << "method,reward_r,reward_r_se,reward_rstar,reward_rstar_se,kl_div,div\n";
  char buf[64];
  for (const auto& [name, r] : rows) {
    out << name;
    auto emit = [&](double v) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << "," << buf;
    };
    emit(r.reward_mean);
    emit(r.reward_se);
    if (r.has_genuine) {
      emit(r.genuine_mean);
      emit(r.genuine_se);
    } else {
      out << ",,";
    }
    emit(r.kl_total);
    emit(r.div);
    out << "\n";
  }
}

// ---- oracle check ----

struct OracleCheckResult {
  nlohmann::ordered_json report;
  bool pass = true;
  std::string first_failure;
};

inline OracleCheckResult cmd_oracle_check() {
  OracleCheckResult out;
  const double kDiscreteTol = 1e-10;
  std::map<std::string, double> worst;
  // 50 seeded random chains, n=20, H=10, mixed alphas.
  for (int s = 0; s < 50; ++s) {
    const double alpha = (s % 3 == 0) ? 0.1 : (s % 3 == 1 ? 1.0 : 4.0);
    oracle::DiscreteChain chain = oracle::random_chain(20, 10, 1000 + s, alpha);
    oracle::TiltedChain tilted = oracle::tilt_chain(chain);
    for (const auto& [name, dev] : oracle::verify_identities(chain, tilted))
      worst[name] = std::max(worst[name], dev);
  }
  // Exhaustive bridge enumeration on a small chain.
  {
    oracle::DiscreteChain chain = oracle::random_chain(6, 5, 77, 0.5);
    oracle::TiltedChain tilted = oracle::tilt_chain(chain);
    for (const auto& [name, dev] : oracle::verify_identities(chain, tilted))
      worst[name] = std::max(worst[name], dev);
  }
  nlohmann::ordered_json identities;
  for (const auto& [name, dev] : worst) {
    identities[name]["max_deviation"] = dev;
    identities[name]["threshold"] = kDiscreteTol;
    identities[name]["pass"] = dev <= kDiscreteTol;
    if (dev > kDiscreteTol && out.pass) {
      out.pass = false;
      out.first_failure = name;
    }
  }

  // Continuous cross-checks: C_tar t-independence via quadrature and the
  // optimal drift against finite differences of the analytic value.
  {
    GaussianMixture gm;
    gm.dim = 1;
    gm.weights = {0.5, 0.5};
    gm.means = {{-2.0}, {2.0}};
    gm.vars = {0.25, 0.25};
    PretrainedModel model{gm, 5.0};
    Reward reward = Reward::linear({1.0});
    const double alpha = 1.0;
    TiltedTarget tt = make_tilted_target(gm, reward, alpha);
    // Normalizer recovered from the marginal identity at several interior
    // times along the forward-marginal chain; all must agree with C_tar.
    Grid1D grid;
    double ctar_dev = 0.0;
    for (double t : {0.0, 2.5, 4.5}) {
      const GaussianMixture marg = forward_marginal(gm, 5.0 - t);
      std::vector<double> integrand(grid.n);
      for (int i = 0; i < grid.n; ++i)
        integrand[i] =
            std::exp(oracle::analytic_value(model, reward, alpha, t, {grid.x[i]}) / alpha) *
            density(marg, {grid.x[i]});
      ctar_dev = std::max(ctar_dev, std::abs(simpson(integrand, grid) - std::exp(tt.log_C)));
    }
    identities["ctar_continuous"]["max_deviation"] = ctar_dev;
    identities["ctar_continuous"]["threshold"] = 1e-6;
    identities["ctar_continuous"]["pass"] = ctar_dev <= 1e-6;
    if (ctar_dev > 1e-6 && out.pass) {
      out.pass = false;
      out.first_failure = "ctar_continuous";
    }
    double drift_dev = 0.0;
    for (double t : {0.5, 2.5, 4.5})
      for (double x : {-2.0, 0.0, 1.5}) {
        const double h = 1e-6;
        const double fd = (oracle::analytic_value(model, reward, alpha, t, {x + h}) -
                           oracle::analytic_value(model, reward, alpha, t, {x - h})) /
                          (2.0 * h) / alpha;
        const double an = oracle::analytic_optimal_drift(model, reward, alpha, t, {x})[0];
        drift_dev = std::max(drift_dev, std::abs(fd - an) / std::max(1.0, std::abs(an)));
      }
    identities["drift_gradient_continuous"]["max_deviation"] = drift_dev;
    identities["drift_gradient_continuous"]["threshold"] = 1e-6;
    identities["drift_gradient_continuous"]["pass"] = drift_dev <= 1e-6;
    if (drift_dev > 1e-6 && out.pass) {
      out.pass = false;
      out.first_failure = "drift_gradient_continuous";
    }
  }

  out.report["identities"] = std::move(identities);
  out.report["pass"] = out.pass;
  if (!out.pass) out.report["first_failure"] = out.first_failure;
  return out;
}

// ---- sample dump ----

inline std::string cmd_sample(const ExperimentConfig& cfg, const std::string& run_dir) {
  RunContext ctx = build_context(cfg);
  std::vector<std::shared_ptr<void>> keepalive;
  Sampler sampler = build_sampler(ctx, run_dir, keepalive);
  SampleBatch batch = sampler.draw(cfg.evaluation.n, cfg.evaluation.seed);
  const fsys::path dir(run_dir);
  fsys::create_directories(dir);
  const std::string path = (dir / "samples.csv").string();
  std::ofstream out(path);
  if (!out) throw Error("cannot open samples CSV for writing: " + path);
  const int d = ctx.model.dim();
  for (int c = 0; c < d; ++c) out << (c ? "," : "") << "x_" << (c + 1);
  out << "\n";
  char buf[64];
  for (const auto& x : batch.x_T) {
    for (int c = 0; c < d; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", x[c]);
      out << (c ? "," : "") << buf;
    }
    out << "\n";
  }
  return path;
}

// ---- alpha sweep ----

struct SweepResult {
  std::vector<double> alphas;
  std::vector<EvalReport> reports;
  std::vector<std::string> errors;  // per alpha, empty = ok
  bool reward_monotone = true;      // reward non-increasing as alpha grows
  bool div_monotone = true;         // diversity non-decreasing as alpha grows
};

inline SweepResult cmd_sweep(const ExperimentConfig& base_cfg) {
  std::vector<double> alphas = base_cfg.alpha_sweep;
  if (alphas.empty()) alphas = {base_cfg.alpha};
  SweepResult out;
  const fsys::path root(base_cfg.output_dir);
  fsys::create_directories(root);

  for (double alpha : alphas) {
    ExperimentConfig cfg = base_cfg;
    cfg.alpha = alpha;
    cfg.alpha_sweep.clear();
    char tag[32];
    std::snprintf(tag, sizeof(tag), "alpha_%g", alpha);
    cfg.output_dir = (root / tag).string();
    out.alphas.push_back(alpha);
    try {
      cmd_finetune(cfg);
      RunContext ctx = build_context(cfg);
      EvaluateResult ev = evaluate_run(ctx, cfg.output_dir);
      out.reports.push_back(ev.report);
      out.errors.emplace_back();
    } catch (const Error& e) {
      out.reports.emplace_back();
      out.errors.emplace_back(e.what());
    }
  }

  // Aggregate CSV, sorted as given.
  {
    std::ofstream csv((root / "sweep.csv").string());
    csv << "alpha,reward_mean,reward_se,kl_div_total,diversity,w1_to_target,error\n";
    char buf[64];
    for (size_t i = 0; i < out.alphas.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", out.alphas[i]);
      csv << buf;
      auto emit = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        csv << "," << buf;
      };
      emit(out.reports[i].reward_mean);
      emit(out.reports[i].reward_se);
      emit(out.reports[i].kl_total);
      emit(out.reports[i].div);
      emit(out.reports[i].has_w1 ? out.reports[i].w1 : -1.0);
      csv << "," << out.errors[i] << "\n";
    }
  }

  // Trend flags over the alphas sorted ascending: Reward non-increasing in
  // alpha, Div non-decreasing in alpha.
  std::vector<size_t> idx(out.alphas.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return out.alphas[a] < out.alphas[b]; });
  for (size_t i = 1; i < idx.size(); ++i) {
    if (!out.errors[idx[i]].empty() || !out.errors[idx[i - 1]].empty()) continue;
    if (out.reports[idx[i]].reward_mean > out.reports[idx[i - 1]].reward_mean)
      out.reward_monotone = false;
    if (out.reports[idx[i]].div < out.reports[idx[i - 1]].div) out.div_monotone = false;
  }
  nlohmann::ordered_json trends;
  trends["reward_nonincreasing_in_alpha"] = out.reward_monotone;
  trends["div_nondecreasing_in_alpha"] = out.div_monotone;
  rundetail::write_json(trends, (root / "trends.json").string());

  // Overlaid nominal-reward histograms per alpha.
  std::vector<SvgSeries> series;
  const char* palette[] = {"#3366cc", "#cc3333", "#33aa55", "#aa7700", "#7744aa"};
  for (size_t i = 0; i < out.alphas.size(); ++i) {
    if (!out.errors[i].empty()) continue;
    char tag[32];
    std::snprintf(tag, sizeof(tag), "alpha_%g", out.alphas[i]);
    const fsys::path hcsv = root / tag / "histogram_nominal.csv";
    if (!fsys::exists(hcsv)) continue;
    std::ifstream in(hcsv.string());
    std::string line;
    std::getline(in, line);
    Histogram h;
    while (std::getline(in, line)) {
      double lo, hi;
      int count;
      if (std::sscanf(line.c_str(), "%lf,%lf,%d", &lo, &hi, &count) == 3) {
        if (h.edges.empty()) h.edges.push_back(lo);
        h.edges.push_back(hi);
        h.counts.push_back(count);
      }
    }
    char label[48];
    std::snprintf(label, sizeof(label), "alpha=%g", out.alphas[i]);
    series.push_back({label, palette[i % 5], std::move(h)});
  }
  if (!series.empty())
    write_histogram_svg(series, "nominal reward by alpha", (root / "sweep_histograms.svg").string());
  return out;
}

}  // namespace elegant
