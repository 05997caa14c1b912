#pragma once

// Reward functions (analytic variants and small learned nets), the
// truncated-support nominal-reward fitting protocol, and the exponentially
// tilted target density exp(r/alpha) p_data / C_tar.

#include <cmath>
#include <memory>
#include <vector>

#include "elegant/nets.hpp"
#include "elegant/pretrained.hpp"
#include "elegant/quadrature.hpp"

namespace elegant {

struct GaussianBump {
  double amp = 0.0;
  std::vector<double> center;
  double scale = 1.0;  // exp(-scale * ||x - center||^2)
};

class Reward {
 public:
  enum class Kind { Linear, Quadratic, Bumps, Net };

  static Reward linear(std::vector<double> b) {
    Reward r;
    r.kind_ = Kind::Linear;
    r.dim_ = static_cast<int>(b.size());
    r.lin_ = std::move(b);
    return r;
  }

  // sum_i diag_i x_i^2 + b.x + c with diag_i <= 0.
  static Reward quadratic(std::vector<double> diag, std::vector<double> b, double c) {
    for (double a : diag)
      if (a > 0.0) throw Error("Reward: quadratic diagonal must be negative-semidefinite");
    if (diag.size() != b.size()) throw Error("Reward: quadratic dimension mismatch");
    Reward r;
    r.kind_ = Kind::Quadratic;
    r.dim_ = static_cast<int>(b.size());
    r.diag_ = std::move(diag);
    r.lin_ = std::move(b);
    r.const_ = c;
    return r;
  }

  static Reward bumps(std::vector<double> diag, std::vector<double> b, double c,
                      std::vector<GaussianBump> bumps) {
    Reward r = quadratic(std::move(diag), std::move(b), c);
    r.kind_ = Kind::Bumps;
    for (const auto& bump : bumps)
      if (static_cast<int>(bump.center.size()) != r.dim_)
        throw Error("Reward: bump center dimension mismatch");
    r.bumps_ = std::move(bumps);
    return r;
  }

  static Reward net(ad::ParamSet params, MlpSpec spec, std::string prefix = "reward") {
    Reward r;
    r.kind_ = Kind::Net;
    r.dim_ = spec.in;
    r.net_spec_ = std::move(spec);
    r.params_ = std::make_shared<ad::ParamSet>(std::move(params));
    r.prefix_ = std::move(prefix);
    return r;
  }

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  bool is_linear() const { return kind_ == Kind::Linear; }
  const std::vector<double>& linear_coeffs() const { return lin_; }
  const ad::ParamSet& params() const { return *params_; }
  const MlpSpec& net_spec() const { return net_spec_; }
  const std::string& net_prefix() const { return prefix_; }

  double operator()(const std::vector<double>& x) const {
    switch (kind_) {
      case Kind::Linear: {
        double acc = 0.0;
        for (int c = 0; c < dim_; ++c) acc += lin_[c] * x[c];
        return acc;
      }
      case Kind::Quadratic:
      case Kind::Bumps: {
        double s1 = 0.0;
        for (int c = 0; c < dim_; ++c) s1 += diag_[c] * (x[c] * x[c]);
        double s2 = 0.0;
        for (int c = 0; c < dim_; ++c) s2 += lin_[c] * x[c];
        double v = (s1 + s2) + const_;
        for (const auto& b : bumps_) {
          double ss = 0.0;
          for (int c = 0; c < dim_; ++c) {
            const double dd = x[c] - b.center[c];
            ss += dd * dd;
          }
          v = v + std::exp(ss * (-b.scale)) * b.amp;
        }
        return v;
      }
      case Kind::Net:
        return mlp_forward_scalar(*params_, prefix_, net_spec_, x);
    }
    return 0.0;
  }

  std::vector<double> grad(const std::vector<double>& x) const {
    std::vector<double> g(dim_, 0.0);
    switch (kind_) {
      case Kind::Linear:
        g = lin_;
        break;
      case Kind::Quadratic:
      case Kind::Bumps: {
        for (int c = 0; c < dim_; ++c) g[c] = 2.0 * diag_[c] * x[c] + lin_[c];
        for (const auto& b : bumps_) {
          double ss = 0.0;
          for (int c = 0; c < dim_; ++c) {
            const double dd = x[c] - b.center[c];
            ss += dd * dd;
          }
          const double e = b.amp * std::exp(-b.scale * ss);
          for (int c = 0; c < dim_; ++c) g[c] += e * (-2.0 * b.scale) * (x[c] - b.center[c]);
        }
        break;
      }
      case Kind::Net:
        g = mlp_input_grad(*params_, prefix_, net_spec_, x);
        break;
    }
    return g;
  }

  // Records r(x) over a [d x B] state node; returns [1 x B]. Arithmetic
  // matches operator() so recorded losses decompose exactly.
  ad::Id record(ad::Graph& g, ad::Id X) const {
    switch (kind_) {
      case Kind::Linear: {
        Tensor bt(1, dim_);
        for (int c = 0; c < dim_; ++c) bt.at(0, c) = lin_[c];
        return g.matmul(g.constant(std::move(bt)), X);
      }
      case Kind::Quadratic:
      case Kind::Bumps: {
        ad::Id s1 = g.colsum(g.mul(g.constant(Tensor::column(diag_)), g.square(X)));
        Tensor bt(1, dim_);
        for (int c = 0; c < dim_; ++c) bt.at(0, c) = lin_[c];
        ad::Id s2 = g.matmul(g.constant(std::move(bt)), X);
        ad::Id v = g.add(g.add(s1, s2), g.constant_scalar(const_));
        for (const auto& b : bumps_) {
          ad::Id ss = g.colsum(g.square(g.sub(X, g.constant(Tensor::column(b.center)))));
          v = g.add(v, g.scalar_mul(b.amp, g.exp(g.scalar_mul(-b.scale, ss))));
        }
        return v;
      }
      case Kind::Net:
        return mlp_record(g, *params_, prefix_, net_spec_, X, /*trainable=*/false);
    }
    throw Error("Reward: unknown kind");
  }

 private:
  Kind kind_ = Kind::Linear;
  int dim_ = 1;
  std::vector<double> lin_;
  std::vector<double> diag_;
  double const_ = 0.0;
  std::vector<GaussianBump> bumps_;
  std::shared_ptr<ad::ParamSet> params_;
  MlpSpec net_spec_;
  std::string prefix_ = "reward";
};

// ---- tilted target density ----

struct TiltedTarget {
  GaussianMixture base;
  Reward reward;
  double alpha = 1.0;
  bool closed_form = false;
  GaussianMixture tilted;  // linear-reward closed form
  double log_C = 0.0;      // log of the normalizing constant
  Grid1D grid;             // populated for dim == 1
  std::vector<double> density_vals;
};

inline double target_log_density(const TiltedTarget& tt, const std::vector<double>& x) {
  if (tt.closed_form) return log_density(tt.tilted, x);
  return tt.reward(x) / tt.alpha + log_density(tt.base, x) - tt.log_C;
}

inline double target_density(const TiltedTarget& tt, const std::vector<double>& x) {
  return std::exp(target_log_density(tt, x));
}

inline TiltedTarget make_tilted_target(const GaussianMixture& base, const Reward& reward,
                                       double alpha, Grid1D grid = Grid1D()) {
  if (!(alpha > 0.0)) throw Error("make_tilted_target: alpha must be positive");
  base.validate();
  TiltedTarget tt;
  tt.base = base;
  tt.reward = reward;
  tt.alpha = alpha;
  tt.grid = grid;

  if (reward.is_linear()) {
    // exp(b.x/a) N(x; mu, vI) is proportional to N(x; mu + v b/a, vI) with
    // log-mass b.mu/a + ||b||^2 v / (2 a^2); weights tilt accordingly.
    const auto& b = reward.linear_coeffs();
    const int K = base.n_components();
    double b2 = 0.0;
    for (double bc : b) b2 += bc * bc;
    std::vector<double> logm(K);
    for (int k = 0; k < K; ++k) {
      double bdotmu = 0.0;
      for (int c = 0; c < base.dim; ++c) bdotmu += b[c] * base.means[k][c];
      logm[k] = std::log(base.weights[k]) + bdotmu / alpha + b2 * base.vars[k] / (2.0 * alpha * alpha);
    }
    double shift = logm[0];
    for (int k = 1; k < K; ++k) shift = std::max(shift, logm[k]);
    double Z = 0.0;
    for (int k = 0; k < K; ++k) Z += std::exp(logm[k] - shift);
    tt.log_C = shift + std::log(Z);
    tt.closed_form = true;
    tt.tilted = base;
    for (int k = 0; k < K; ++k) {
      tt.tilted.weights[k] = std::exp(logm[k] - shift) / Z;
      for (int c = 0; c < base.dim; ++c)
        tt.tilted.means[k][c] = base.means[k][c] + base.vars[k] * b[c] / alpha;
    }
  } else if (base.dim == 1) {
    std::vector<double> unnorm(grid.n);
    for (int i = 0; i < grid.n; ++i) {
      std::vector<double> x = {grid.x[i]};
      unnorm[i] = std::exp(reward(x) / alpha + log_density(base, x));
    }
    const double total = simpson(unnorm, grid);
    if (!(total > 0.0) || !std::isfinite(total))
      throw Error("make_tilted_target: degenerate tilted mass on quadrature grid");
    // Mass hugging the window edges means the grid is too small.
    const int edge = std::max(2, grid.n / 50);
    double edge_mass = 0.0;
    for (int i = 0; i < edge; ++i) edge_mass += (unnorm[i] + unnorm[grid.n - 1 - i]) * grid.h();
    if (edge_mass / total > 1e-6)
      throw Error("make_tilted_target: tail mass exceeds 1e-6 on the quadrature window; "
                  "extend the grid");
    tt.log_C = std::log(total);
  } else {
    Grid2D g2;
    const double total = simpson2d(
        [&](double a, double bb) {
          std::vector<double> x = {a, bb};
          return std::exp(reward(x) / alpha + log_density(base, x));
        },
        g2);
    if (!(total > 0.0) || !std::isfinite(total))
      throw Error("make_tilted_target: degenerate tilted mass on quadrature grid");
    tt.log_C = std::log(total);
  }

  if (base.dim == 1) {
    tt.density_vals.resize(grid.n);
    for (int i = 0; i < grid.n; ++i) tt.density_vals[i] = target_density(tt, {grid.x[i]});
  }
  return tt;
}

inline std::vector<double> target_sample(const TiltedTarget& tt, const RngStream& rng,
                                         uint64_t i) {
  if (!tt.closed_form)
    throw Error("target_sample: sampler only available for the linear closed form");
  return sample(tt.tilted, rng, i);
}

// Quadrature KL(p || q) of two densities tabulated on a common grid.
inline double kl_between_densities(const std::vector<double>& p, const std::vector<double>& q,
                                   const Grid1D& grid) {
  if (p.size() != q.size() || static_cast<int>(p.size()) != grid.n)
    throw Error("kl_between_densities: densities must share the grid");
  std::vector<double> integrand(grid.n);
  for (int i = 0; i < grid.n; ++i) {
    if (p[i] > 1e-15 && q[i] <= 1e-300)
      throw Error("kl_between_densities: support violation (p > 0 where q = 0)");
    integrand[i] = p[i] > 1e-15 ? p[i] * std::log(p[i] / q[i]) : 0.0;
  }
  return simpson(integrand, grid);
}

// ---- nominal-reward fitting ----

struct NominalFit {
  Reward reward;
  double holdout_mse = 0.0;
  TrainLog log;
};

// Least-squares fit of a net to (x, r*(x)) pairs with a held-out split.
inline NominalFit fit_nominal_reward(const std::vector<std::vector<double>>& xs,
                                     const std::vector<double>& ys, std::vector<int> hidden,
                                     const TrainConfig& cfg, double holdout_fraction = 0.2,
                                     bool relu = false) {
  if (xs.empty()) throw Error("fit_nominal_reward: empty dataset");
  for (const auto& x : xs)
    for (double v : x)
      if (!std::isfinite(v)) throw Error("fit_nominal_reward: non-finite input");
  const int n = static_cast<int>(xs.size());
  const int dim = static_cast<int>(xs[0].size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  SeqRng shuffler(cfg.seed, 0x501Du);
  for (int i = n - 1; i > 0; --i)
    std::swap(order[i], order[shuffler.index(static_cast<uint64_t>(i) + 1)]);
  const int n_hold = std::min(n - 1, static_cast<int>(std::llround(holdout_fraction * n)));
  std::vector<std::vector<double>> xtr, xho;
  std::vector<double> ytr, yho;
  for (int i = 0; i < n; ++i) {
    if (i < n - n_hold) {
      xtr.push_back(xs[order[i]]);
      ytr.push_back(ys[order[i]]);
    } else {
      xho.push_back(xs[order[i]]);
      yho.push_back(ys[order[i]]);
    }
  }

  MlpSpec spec;
  spec.in = dim;
  spec.out = 1;
  spec.hidden = std::move(hidden);
  spec.relu = relu;
  ad::ParamSet params;
  mlp_init(params, "reward", spec, cfg.seed);
  NominalFit out;
  out.log = train_regression(params, "reward", spec, xtr, ytr, cfg);
  out.reward = Reward::net(std::move(params), spec, "reward");
  const auto& eval_set_x = xho.empty() ? xtr : xho;
  const auto& eval_set_y = xho.empty() ? ytr : yho;
  double mse = 0.0;
  for (size_t i = 0; i < eval_set_x.size(); ++i) {
    const double d = out.reward(eval_set_x[i]) - eval_set_y[i];
    mse += d * d;
  }
  out.holdout_mse = mse / eval_set_x.size();
  return out;
}

}  // namespace elegant
