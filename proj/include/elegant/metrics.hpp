#pragma once

// Evaluation triple (Reward, KL-Div, Div) plus distribution-distance
// diagnostics. The path-KL metric reports the stage-2 Girsanov term
// E[int ||u||^2/(2 sigma^2) dt] and the stage-1 surrogate separately; the
// stage-1 term upper-bounds KL(nu_hat || nu_ini) and is labeled as such,
// never silently folded in as exact.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <json.hpp>

#include "elegant/control.hpp"
#include "elegant/pretrained.hpp"
#include "elegant/quadrature.hpp"
#include "elegant/rewards.hpp"

namespace elegant {

// Mean over trajectories of sum_k ||u(t_k, x_k)||^2 / (2 sigma^2(t_k)) dt.
inline double path_kl_term(const std::vector<Trajectory>& trajs, const DriftEval& u,
                           const SigmaEval& sigma) {
  if (!u || trajs.empty()) return 0.0;
  const int d = static_cast<int>(trajs[0].x[0].size());
  std::vector<double> uval(d);
  double total = 0.0;
  for (const Trajectory& traj : trajs) {
    const double dt = traj.grid.dt();
    double acc = 0.0;
    for (int k = 0; k < traj.grid.n_steps; ++k) {
      const double t = traj.grid.time(k);
      const double sig = sigma(t);
      u(t, traj.x[k].data(), uval.data());
      double sumsq = 0.0;
      for (int c = 0; c < d; ++c) sumsq += uval[c] * uval[c];
      acc += sumsq / (2.0 * sig * sig) * dt;
    }
    total += acc;
  }
  return total / trajs.size();
}

struct PathKl {
  double stage2 = 0.0;          // exact Girsanov term for the phase-2 control
  double stage1_surrogate = 0.0;  // upper bound on KL(nu_hat || nu_ini)
  double total() const { return stage2 + stage1_surrogate; }
};

inline PathKl kl_path_metric(const SampleBatch& batch, const Sampler& sampler) {
  PathKl out;
  out.stage2 = path_kl_term(batch.phase2, sampler.u_drift, [](double) { return 1.0; });
  const double st = sampler.sigma_tilde;
  out.stage1_surrogate =
      path_kl_term(batch.phase1, sampler.q_drift, [st](double) { return st; });
  return out;
}

// Mean pairwise Euclidean distance; subsampled to at most 1e5 pairs, seeded.
inline double diversity(const std::vector<std::vector<double>>& samples, uint64_t seed = 1) {
  const size_t n = samples.size();
  if (n < 2) throw Error("diversity: need at least 2 samples");
  auto dist = [&](size_t i, size_t j) {
    double acc = 0.0;
    for (size_t c = 0; c < samples[i].size(); ++c) {
      const double d = samples[i][c] - samples[j][c];
      acc += d * d;
    }
    return std::sqrt(acc);
  };
  const size_t max_pairs = 100000;
  const size_t all_pairs = n * (n - 1) / 2;
  double total = 0.0;
  if (all_pairs <= max_pairs) {
    for (size_t i = 0; i < n; ++i)
      for (size_t j = i + 1; j < n; ++j) total += dist(i, j);
    return total / all_pairs;
  }
  SeqRng rng(seed, 0xD1Fu);
  for (size_t p = 0; p < max_pairs; ++p) {
    const size_t i = rng.index(n);
    size_t j = rng.index(n - 1);
    if (j >= i) ++j;
    total += dist(i, j);
  }
  return total / max_pairs;
}

// ---- 1-D Wasserstein-1 against an analytic target ----

inline double mixture_cdf_1d(const GaussianMixture& gm, double x) {
  double acc = 0.0;
  for (int k = 0; k < gm.n_components(); ++k)
    acc += gm.weights[k] * 0.5 * (1.0 + std::erf((x - gm.means[k][0]) / std::sqrt(2.0 * gm.vars[k])));
  return acc;
}

// W1 = integral |F_emp - F_target| over the quadrature window.
inline double wasserstein1_1d(std::vector<double> samples,
                              const std::function<double(double)>& target_cdf,
                              const Grid1D& grid = Grid1D()) {
  if (samples.empty()) throw Error("wasserstein1_1d: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  auto emp_cdf = [&](double x) {
    return static_cast<double>(std::upper_bound(samples.begin(), samples.end(), x) -
                               samples.begin()) /
           n;
  };
  double acc = 0.0;
  double prev = std::abs(emp_cdf(grid.x[0]) - target_cdf(grid.x[0]));
  for (int i = 1; i < grid.n; ++i) {
    const double cur = std::abs(emp_cdf(grid.x[i]) - target_cdf(grid.x[i]));
    acc += 0.5 * (prev + cur) * grid.h();
    prev = cur;
  }
  return acc;
}

inline double w1_to_mixture(const std::vector<std::vector<double>>& samples,
                            const GaussianMixture& gm, uint64_t seed = 7) {
  if (samples.empty()) throw Error("w1_to_mixture: no samples");
  const int d = static_cast<int>(samples[0].size());
  if (d == 1) {
    std::vector<double> flat(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) flat[i] = samples[i][0];
    return wasserstein1_1d(std::move(flat), [&gm](double x) { return mixture_cdf_1d(gm, x); });
  }
  if (d != 2)
    throw Error("w1_to_mixture: only d=1 exact and d=2 sliced supported; use the sliced variant");
  // Sliced: 32 seeded random directions; an isotropic mixture projects to a
  // 1-D mixture with the same variances.
  SeqRng rng(seed, 0x51CEu);
  double acc = 0.0;
  const int n_dirs = 32;
  for (int dir = 0; dir < n_dirs; ++dir) {
    const double theta = 2.0 * M_PI * rng.uniform();
    const double ax = std::cos(theta), ay = std::sin(theta);
    std::vector<double> proj(samples.size());
    for (size_t i = 0; i < samples.size(); ++i) proj[i] = ax * samples[i][0] + ay * samples[i][1];
    GaussianMixture pm;
    pm.dim = 1;
    pm.weights = gm.weights;
    pm.vars = gm.vars;
    pm.means.resize(gm.n_components());
    for (int k = 0; k < gm.n_components(); ++k)
      pm.means[k] = {ax * gm.means[k][0] + ay * gm.means[k][1]};
    acc += wasserstein1_1d(proj, [&pm](double x) { return mixture_cdf_1d(pm, x); });
  }
  return acc / n_dirs;
}

inline double w1_to_density(const std::vector<std::vector<double>>& samples,
                            const std::vector<double>& density, const Grid1D& grid) {
  if (samples.empty() || samples[0].size() != 1)
    throw Error("w1_to_density: d = 1 samples required");
  std::vector<double> cdf(grid.n, 0.0);
  for (int i = 1; i < grid.n; ++i)
    cdf[i] = cdf[i - 1] + 0.5 * (density[i - 1] + density[i]) * grid.h();
  std::vector<double> flat(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) flat[i] = samples[i][0];
  return wasserstein1_1d(std::move(flat),
                         [&](double x) {
                           if (x <= grid.lo) return 0.0;
                           if (x >= grid.hi) return cdf[grid.n - 1];
                           const int i =
                               static_cast<int>((x - grid.lo) / grid.h());
                           const double frac = (x - grid.x[i]) / grid.h();
                           return cdf[i] + frac * (cdf[std::min(i + 1, grid.n - 1)] - cdf[i]);
                         },
                         grid);
}

// ---- bootstrap ----

inline double bootstrap_se(const std::vector<double>& values, int resamples, uint64_t seed) {
  const size_t n = values.size();
  if (n < 2) return 0.0;
  SeqRng rng(seed, 0xB007u);
  std::vector<double> means(resamples);
  for (int b = 0; b < resamples; ++b) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += values[rng.index(n)];
    means[b] = acc / n;
  }
  double mu = 0.0;
  for (double m : means) mu += m;
  mu /= resamples;
  double var = 0.0;
  for (double m : means) var += (m - mu) * (m - mu);
  return std::sqrt(var / (resamples - 1));
}

inline double mean_of(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / v.size();
}

// ---- evaluation report ----

struct EvalReport {
  int n = 0;
  uint64_t seed = 0;
  std::string config_hash;
  double reward_mean = 0.0, reward_se = 0.0;
  bool has_genuine = false;
  double genuine_mean = 0.0, genuine_se = 0.0;
  double kl_stage2 = 0.0;
  double kl_stage1_surrogate = 0.0;
  double kl_total = 0.0;
  double div = 0.0;
  bool has_w1 = false;
  double w1 = 0.0;
};

inline nlohmann::ordered_json eval_report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  j["reward_mean"] = r.reward_mean;
  j["reward_se"] = r.reward_se;
  if (r.has_genuine) {
    j["genuine_reward_mean"] = r.genuine_mean;
    j["genuine_reward_se"] = r.genuine_se;
  }
  j["kl_div_stage2"] = r.kl_stage2;
  j["kl_div_stage1_surrogate"] = r.kl_stage1_surrogate;
  j["kl_div_total"] = r.kl_total;
  j["diversity"] = r.div;
  if (r.has_w1) j["w1_to_target"] = r.w1;
  return j;
}

struct EvalSpec {
  int n = 10000;
  uint64_t seed = 123;
  int bootstrap_resamples = 200;
  const Reward* genuine = nullptr;           // optional
  const GaussianMixture* target = nullptr;   // optional analytic target (W1)
};

inline EvalReport evaluate(const Sampler& sampler, const Reward& nominal, const EvalSpec& spec,
                           SampleBatch* out_batch = nullptr) {
  if (spec.n < 2) throw Error("evaluate: need n >= 2");
  SampleBatch batch = sampler.draw(spec.n, spec.seed);
  EvalReport rep;
  rep.n = spec.n;
  rep.seed = spec.seed;
  std::vector<double> rvals(spec.n);
  for (int i = 0; i < spec.n; ++i) rvals[i] = nominal(batch.x_T[i]);
  rep.reward_mean = mean_of(rvals);
  rep.reward_se = bootstrap_se(rvals, spec.bootstrap_resamples, spec.seed ^ 0xB1ull);
  if (spec.genuine) {
    std::vector<double> gvals(spec.n);
    for (int i = 0; i < spec.n; ++i) gvals[i] = (*spec.genuine)(batch.x_T[i]);
    rep.has_genuine = true;
    rep.genuine_mean = mean_of(gvals);
    rep.genuine_se = bootstrap_se(gvals, spec.bootstrap_resamples, spec.seed ^ 0xB2ull);
  }
  const PathKl kl = kl_path_metric(batch, sampler);
  rep.kl_stage2 = kl.stage2;
  rep.kl_stage1_surrogate = kl.stage1_surrogate;
  rep.kl_total = kl.total();
  rep.div = diversity(batch.x_T, spec.seed ^ 0xD1ull);
  if (spec.target) {
    rep.has_w1 = true;
    rep.w1 = w1_to_mixture(batch.x_T, *spec.target, spec.seed ^ 0x51ull);
  }
  if (out_batch) *out_batch = std::move(batch);
  return rep;
}

// ---- histograms ----

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<int> counts;
};

inline Histogram make_histogram(const std::vector<double>& values, int bins) {
  if (values.empty() || bins < 1) throw Error("make_histogram: empty input");
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= lo) hi = lo + 1e-9;
  Histogram h;
  h.edges.resize(bins + 1);
  h.counts.assign(bins, 0);
  for (int i = 0; i <= bins; ++i) h.edges[i] = lo + (hi - lo) * i / bins;
  for (double v : values) {
    int b = static_cast<int>((v - lo) / (hi - lo) * bins);
    if (b >= bins) b = bins - 1;
    if (b < 0) b = 0;
    h.counts[b]++;
  }
  return h;
}

inline void write_histogram_csv(const Histogram& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open histogram CSV for writing: " + path);
  out << "bin_lo,bin_hi,count\n";
  char buf[64];
  for (size_t b = 0; b < h.counts.size(); ++b) {
    std::snprintf(buf, sizeof(buf), "%.17g", h.edges[b]);
    out << buf << ",";
    std::snprintf(buf, sizeof(buf), "%.17g", h.edges[b + 1]);
    out << buf << "," << h.counts[b] << "\n";
  }
}

}  // namespace elegant
