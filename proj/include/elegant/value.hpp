#pragma once

// Terminal-value estimation at t = 0: rollout datasets from the pretrained
// SDE, plain mean regression of r(x_T) on x_0, and the soft variant that
// regresses alpha * log-mean-exp(r/alpha) over per-probe rollouts.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <vector>

#include "elegant/nets.hpp"
#include "elegant/pretrained.hpp"
#include "elegant/rewards.hpp"
#include "elegant/sde.hpp"

namespace elegant {

struct ValueDataset {
  std::vector<std::vector<double>> x0;
  std::vector<double> y;
  uint64_t seed = 0;
  int rollouts_per_probe = 1;
};

inline SdeSpec pretrained_sde(const PretrainedModel& model) {
  SdeSpec spec;
  spec.dim = model.dim();
  spec.drift = [&model](double t, const double* x, double* out) {
    model.reverse_drift(t, x, out);
  };
  spec.sigma = [](double) { return 1.0; };
  return spec;
}

inline ValueDataset generate_value_dataset(const PretrainedModel& model, const Reward& reward,
                                           int n, const TimeGrid& grid, uint64_t seed) {
  if (n < 1) throw Error("generate_value_dataset: n must be >= 1");
  const SdeSpec spec = pretrained_sde(model);
  ValueDataset ds;
  ds.seed = seed;
  ds.x0.reserve(n);
  ds.y.reserve(n);
  for (int i = 0; i < n; ++i) {
    RngStream rng(seed, i);
    std::vector<double> x0 = draw_standard_normal_init(rng, model.dim());
    Trajectory traj = simulate(spec, x0, grid, rng);
    ds.x0.push_back(std::move(x0));
    ds.y.push_back(reward(traj.terminal()));
  }
  return ds;
}

inline void write_value_dataset_csv(const ValueDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open value dataset CSV for writing: " + path);
  const int d = ds.x0.empty() ? 0 : static_cast<int>(ds.x0[0].size());
  for (int c = 0; c < d; ++c) out << "x_" << (c + 1) << ",";
  out << "y\n";
  char buf[64];
  for (size_t i = 0; i < ds.x0.size(); ++i) {
    for (int c = 0; c < d; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", ds.x0[i][c]);
      out << buf << ",";
    }
    std::snprintf(buf, sizeof(buf), "%.17g", ds.y[i]);
    out << buf << "\n";
  }
}

struct ValueModel {
  ad::ParamSet params;
  MlpSpec spec;
  std::string prefix = "value";
  TrainLog log;

  double operator()(const std::vector<double>& x) const {
    return mlp_forward_scalar(params, prefix, spec, x);
  }
  ad::Id record(ad::Graph& g, ad::Id X) const {
    return mlp_record(g, params, prefix, spec, X, /*trainable=*/false);
  }
};

inline ValueModel fit_value_mean(const ValueDataset& ds, std::vector<int> hidden,
                                 const TrainConfig& cfg) {
  if (ds.x0.empty()) throw Error("fit_value_mean: empty dataset");
  ValueModel vm;
  vm.spec.in = static_cast<int>(ds.x0[0].size());
  vm.spec.out = 1;
  vm.spec.hidden = std::move(hidden);
  mlp_init(vm.params, vm.prefix, vm.spec, cfg.seed);
  vm.log = train_regression(vm.params, vm.prefix, vm.spec, ds.x0, ds.y, cfg);
  return vm;
}

// Soft regression targets: y_i = alpha * log( (1/n) sum_j exp(r_ij / alpha) ),
// log-sum-exp stabilized. Probe i rollout j uses stream i*n + j. probe_scale
// widens the probe distribution beyond nu_ini when stage-1 exploration needs
// it (default 1 = nu_ini).
inline ValueDataset generate_soft_value_dataset(const PretrainedModel& model,
                                                const Reward& reward, double alpha, int m, int n,
                                                const TimeGrid& grid, uint64_t seed,
                                                double probe_scale = 1.0) {
  if (!(alpha > 0.0)) throw Error("generate_soft_value_dataset: alpha must be positive");
  if (n < 2) throw Error("generate_soft_value_dataset: need at least 2 rollouts per probe");
  const SdeSpec spec = pretrained_sde(model);
  ValueDataset ds;
  ds.seed = seed;
  ds.rollouts_per_probe = n;
  std::vector<double> scaled(n);
  for (int i = 0; i < m; ++i) {
    RngStream probe_rng(seed ^ 0xA5A5A5A5ULL, i);
    std::vector<double> x0 = draw_standard_normal_init(probe_rng, model.dim());
    for (double& v : x0) v *= probe_scale;
    for (int j = 0; j < n; ++j) {
      RngStream rng(seed, static_cast<uint64_t>(i) * n + j);
      Trajectory traj = simulate(spec, x0, grid, rng);
      const double r = reward(traj.terminal());
      if (std::abs(r) / alpha > 700.0)
        throw Error("soft value targets overflow: |r|/alpha > 700; increase alpha or rescale "
                    "the reward");
      scaled[j] = r / alpha;
    }
    double shift = scaled[0];
    for (int j = 1; j < n; ++j) shift = std::max(shift, scaled[j]);
    double acc = 0.0;
    for (int j = 0; j < n; ++j) acc += std::exp(scaled[j] - shift);
    ds.x0.push_back(std::move(x0));
    ds.y.push_back(alpha * (shift + std::log(acc / n)));
  }
  return ds;
}

inline ValueModel fit_value_soft(const PretrainedModel& model, const Reward& reward, double alpha,
                                 int m, int n, const TimeGrid& grid, std::vector<int> hidden,
                                 const TrainConfig& cfg, double probe_scale = 1.0) {
  ValueDataset ds =
      generate_soft_value_dataset(model, reward, alpha, m, n, grid, cfg.seed, probe_scale);
  ValueModel vm;
  vm.spec.in = model.dim();
  vm.spec.out = 1;
  vm.spec.hidden = std::move(hidden);
  mlp_init(vm.params, vm.prefix, vm.spec, cfg.seed);
  vm.log = train_regression(vm.params, vm.prefix, vm.spec, ds.x0, ds.y, cfg);
  return vm;
}

// The mean fit estimates the value only up to an additive constant (and the
// constancy assumption behind that can fail); this reports the residual
// disagreement after removing the best constant shift.
struct ValueFitComparison {
  double constant_shift = 0.0;
  double max_abs_dev = 0.0;
};

inline ValueFitComparison compare_value_fits(const ValueModel& mean_fit,
                                             const ValueModel& soft_fit,
                                             const std::vector<std::vector<double>>& probes) {
  if (probes.empty()) throw Error("compare_value_fits: no probes");
  ValueFitComparison out;
  std::vector<double> diffs;
  diffs.reserve(probes.size());
  for (const auto& x : probes) diffs.push_back(soft_fit(x) - mean_fit(x));
  double shift = 0.0;
  for (double d : diffs) shift += d;
  shift /= diffs.size();
  out.constant_shift = shift;
  for (double d : diffs) out.max_abs_dev = std::max(out.max_abs_dev, std::abs(d - shift));
  return out;
}

}  // namespace elegant
