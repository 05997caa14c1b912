#pragma once

// Ground truth in two flavors: an exact finite-chain entropy-regularized
// control solver (soft value recursion, exponential tilting, and identity
// checks run to machine precision), and closed-form continuous oracles for
// the Gaussian-mixture + linear-reward family (value, optimal drift, optimal
// initial law). Everything is computed in log space so alpha down to 1e-3
// stays usable.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "elegant/pretrained.hpp"
#include "elegant/quadrature.hpp"
#include "elegant/rewards.hpp"
#include "elegant/rng.hpp"
#include "elegant/tensor.hpp"

namespace elegant::oracle {

struct DiscreteChain {
  int n = 2;
  int H = 1;
  std::vector<Tensor> P;     // H transition matrices, rows stochastic
  std::vector<double> rho0;  // initial law
  std::vector<double> r;     // terminal reward
  double alpha = 1.0;

  void validate() const {
    if (!(alpha > 0.0)) throw Error("DiscreteChain: alpha must be positive");
    if (static_cast<int>(P.size()) != H) throw Error("DiscreteChain: need H transition matrices");
    if (static_cast<int>(rho0.size()) != n || static_cast<int>(r.size()) != n)
      throw Error("DiscreteChain: state-count mismatch");
    double s0 = 0.0;
    for (double p : rho0) {
      if (p < 0.0) throw Error("DiscreteChain: negative initial mass");
      s0 += p;
    }
    if (std::abs(s0 - 1.0) > 1e-12) throw Error("DiscreteChain: initial law must sum to 1");
    for (const Tensor& M : P) {
      if (M.rows != n || M.cols != n) throw Error("DiscreteChain: transition shape mismatch");
      for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) {
          if (M.at(i, j) < 0.0) throw Error("DiscreteChain: negative transition mass");
          s += M.at(i, j);
        }
        if (std::abs(s - 1.0) > 1e-12) throw Error("DiscreteChain: rows must be stochastic");
      }
    }
  }
};

namespace detail {

inline double lse(const std::vector<double>& v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

}  // namespace detail

// Backward recursion exp(v_t/alpha) = P_t exp(v_{t+1}/alpha) with v_H = r,
// carried in the scaled log-domain w = v/alpha.
inline std::vector<std::vector<double>> soft_value_backward(const DiscreteChain& chain) {
  chain.validate();
  std::vector<std::vector<double>> w(chain.H + 1, std::vector<double>(chain.n));
  for (int i = 0; i < chain.n; ++i) w[chain.H][i] = chain.r[i] / chain.alpha;
  std::vector<double> terms(chain.n);
  for (int t = chain.H - 1; t >= 0; --t) {
    for (int i = 0; i < chain.n; ++i) {
      for (int j = 0; j < chain.n; ++j)
        terms[j] = std::log(chain.P[t].at(i, j)) + w[t + 1][j];
      w[t][i] = detail::lse(terms);
    }
  }
  return w;
}

inline std::vector<std::vector<double>> soft_values(const DiscreteChain& chain) {
  auto w = soft_value_backward(chain);
  for (auto& row : w)
    for (double& x : row) x *= chain.alpha;
  return w;
}

struct TiltedChain {
  std::vector<std::vector<double>> w;  // v_t / alpha
  std::vector<Tensor> P;               // tilted transitions
  std::vector<double> rho0;            // tilted initial law
  double log_C = 0.0;
};

inline TiltedChain tilt_chain(const DiscreteChain& chain) {
  TiltedChain out;
  out.w = soft_value_backward(chain);
  out.P.resize(chain.H);
  for (int t = 0; t < chain.H; ++t) {
    out.P[t] = Tensor(chain.n, chain.n);
    for (int i = 0; i < chain.n; ++i)
      for (int j = 0; j < chain.n; ++j) {
        const double p = chain.P[t].at(i, j);
        out.P[t].at(i, j) =
            p == 0.0 ? 0.0 : std::exp(std::log(p) + out.w[t + 1][j] - out.w[t][i]);
      }
  }
  std::vector<double> terms(chain.n, -std::numeric_limits<double>::infinity());
  for (int i = 0; i < chain.n; ++i)
    if (chain.rho0[i] > 0.0) terms[i] = std::log(chain.rho0[i]) + out.w[0][i];
  out.log_C = detail::lse(terms);
  out.rho0.resize(chain.n);
  for (int i = 0; i < chain.n; ++i)
    out.rho0[i] =
        chain.rho0[i] == 0.0
            ? 0.0
            : std::exp(std::log(chain.rho0[i]) + out.w[0][i] - out.log_C);
  return out;
}

namespace detail {

inline std::vector<std::vector<double>> marginals(const std::vector<double>& rho0,
                                                  const std::vector<Tensor>& P) {
  std::vector<std::vector<double>> rho(P.size() + 1);
  rho[0] = rho0;
  for (size_t t = 0; t < P.size(); ++t) {
    rho[t + 1].assign(rho0.size(), 0.0);
    for (size_t i = 0; i < rho0.size(); ++i)
      for (size_t j = 0; j < rho0.size(); ++j) rho[t + 1][j] += rho[t][i] * P[t].at(i, j);
  }
  return rho;
}

// Joint law over (x_s, x_t), s < t.
inline Tensor joint(const std::vector<std::vector<double>>& rho, const std::vector<Tensor>& P,
                    int s, int t) {
  const int n = static_cast<int>(rho[0].size());
  Tensor step(n, n);
  for (int i = 0; i < n; ++i) step.at(i, i) = 1.0;
  for (int k = s; k < t; ++k) {
    Tensor next(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int m = 0; m < n; ++m) acc += step.at(i, m) * P[k].at(m, j);
        next.at(i, j) = acc;
      }
    step = std::move(next);
  }
  Tensor J(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) J.at(i, j) = rho[s][i] * step.at(i, j);
  return J;
}

}  // namespace detail

// Exhaustive verification of the tilting identities. Keys:
//   marginal               rho*_t = rho_t exp(v_t/alpha) / C at every t
//   terminal_law           rho*_H = exp(r/alpha) rho_H / C
//   optimal_initial        rho*_0 = exp(v_0/alpha) rho_0 / C
//   joint                  P*_{s,t} = P_{s,t} exp(v_t/alpha) / C for all s < t
//   backward_conditional   P*_{s|t} = P_{s|t} for all s < t
//   bridge                 full path law given x_H identical (n^(H+1) <= 250k)
//   path_kl                KL(P* || P) = E*[r]/alpha - log C
//   ctar_t_independence    C recovered at every t agrees
inline std::map<std::string, double> verify_identities(const DiscreteChain& chain,
                                                       const TiltedChain& tilted) {
  chain.validate();
  const int n = chain.n, H = chain.H;
  const double C = std::exp(tilted.log_C);
  std::map<std::string, double> dev;

  const auto rho = detail::marginals(chain.rho0, chain.P);
  const auto rho_t = detail::marginals(tilted.rho0, tilted.P);

  double d_marginal = 0.0;
  for (int t = 0; t <= H; ++t)
    for (int i = 0; i < n; ++i) {
      const double expected = rho[t][i] * std::exp(tilted.w[t][i]) / C;
      d_marginal = std::max(d_marginal, std::abs(rho_t[t][i] - expected));
    }
  dev["marginal"] = d_marginal;

  double d_term = 0.0;
  for (int i = 0; i < n; ++i) {
    const double expected = std::exp(chain.r[i] / chain.alpha) * rho[H][i] / C;
    d_term = std::max(d_term, std::abs(rho_t[H][i] - expected));
  }
  dev["terminal_law"] = d_term;

  double d_init = 0.0;
  for (int i = 0; i < n; ++i) {
    const double expected = std::exp(tilted.w[0][i]) * chain.rho0[i] / C;
    d_init = std::max(d_init, std::abs(tilted.rho0[i] - expected));
  }
  dev["optimal_initial"] = d_init;

  double d_joint = 0.0, d_cond = 0.0;
  for (int s = 0; s < H; ++s)
    for (int t = s + 1; t <= H; ++t) {
      const Tensor Jd = detail::joint(rho, chain.P, s, t);
      const Tensor Jt = detail::joint(rho_t, tilted.P, s, t);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double expected = Jd.at(i, j) * std::exp(tilted.w[t][j]) / C;
          d_joint = std::max(d_joint, std::abs(Jt.at(i, j) - expected));
          if (rho_t[t][j] > 1e-300 && rho[t][j] > 1e-300)
            d_cond = std::max(d_cond, std::abs(Jt.at(i, j) / rho_t[t][j] -
                                               Jd.at(i, j) / rho[t][j]));
        }
    }
  dev["joint"] = d_joint;
  dev["backward_conditional"] = d_cond;

  double paths = 1.0;
  for (int t = 0; t <= H; ++t) paths *= n;
  if (paths <= 250000.0) {
    double d_bridge = 0.0;
    std::vector<int> tau(H + 1, 0);
    while (true) {
      double pd = chain.rho0[tau[0]], pt = tilted.rho0[tau[0]];
      for (int t = 0; t < H; ++t) {
        pd *= chain.P[t].at(tau[t], tau[t + 1]);
        pt *= tilted.P[t].at(tau[t], tau[t + 1]);
      }
      const int xe = tau[H];
      if (rho[H][xe] > 1e-300 && rho_t[H][xe] > 1e-300)
        d_bridge = std::max(d_bridge, std::abs(pt / rho_t[H][xe] - pd / rho[H][xe]));
      int pos = H;
      while (pos >= 0 && ++tau[pos] == n) tau[pos--] = 0;
      if (pos < 0) break;
    }
    dev["bridge"] = d_bridge;
  }

  // Path KL via the stored matrices vs the tilting identity E*[r]/alpha - log C.
  double kl = 0.0;
  for (int i = 0; i < n; ++i)
    if (tilted.rho0[i] > 0.0) kl += tilted.rho0[i] * std::log(tilted.rho0[i] / chain.rho0[i]);
  for (int t = 0; t < H; ++t)
    for (int i = 0; i < n; ++i) {
      if (rho_t[t][i] == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        const double pt = tilted.P[t].at(i, j);
        if (pt > 0.0) kl += rho_t[t][i] * pt * std::log(pt / chain.P[t].at(i, j));
      }
    }
  double er = 0.0;
  for (int i = 0; i < n; ++i) er += rho_t[H][i] * chain.r[i];
  dev["path_kl"] = std::abs(kl - (er / chain.alpha - tilted.log_C));

  double d_ctar = 0.0;
  for (int t = 0; t <= H; ++t) {
    double Ct = 0.0;
    for (int i = 0; i < n; ++i) Ct += rho[t][i] * std::exp(tilted.w[t][i]);
    d_ctar = std::max(d_ctar, std::abs(Ct - C));
  }
  dev["ctar_t_independence"] = d_ctar;

  return dev;
}

inline DiscreteChain random_chain(int n, int H, uint64_t seed, double alpha) {
  SeqRng rng(seed, 0xC4A1);
  DiscreteChain chain;
  chain.n = n;
  chain.H = H;
  chain.alpha = alpha;
  chain.P.resize(H);
  auto dirichlet_row = [&](double* row, int len) {
    double s = 0.0;
    for (int j = 0; j < len; ++j) {
      row[j] = -std::log(rng.uniform());
      s += row[j];
    }
    for (int j = 0; j < len; ++j) row[j] /= s;
  };
  for (int t = 0; t < H; ++t) {
    chain.P[t] = Tensor(n, n);
    for (int i = 0; i < n; ++i) dirichlet_row(&chain.P[t].at(i, 0), n);
  }
  chain.rho0.resize(n);
  dirichlet_row(chain.rho0.data(), n);
  chain.r.resize(n);
  for (int i = 0; i < n; ++i) chain.r[i] = 2.0 * rng.uniform();
  // Renormalize exactly so validate()'s 1e-12 gate holds regardless of n.
  auto renorm = [](std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    for (double& x : v) x /= s;
  };
  renorm(chain.rho0);
  for (int t = 0; t < H; ++t)
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += chain.P[t].at(i, j);
      for (int j = 0; j < n; ++j) chain.P[t].at(i, j) /= s;
    }
  return chain;
}

// ---- continuous closed-form oracles (linear reward) ----

// v*_t(x) = alpha log E[exp(b.x_T / alpha) | x_t = x]: the conditional law of
// x_T given x_t is the forward posterior of the data point, a Gaussian
// mixture, so the expectation is a mixture of Gaussian MGFs.
inline double analytic_value(const PretrainedModel& model, const Reward& reward, double alpha,
                             double t, const std::vector<double>& x) {
  if (!reward.is_linear()) throw Error("analytic_value: linear rewards only");
  if (!(alpha > 0.0)) throw Error("analytic_value: alpha must be positive");
  if (t < 0.0 || t > model.horizon) throw Error("analytic_value: t outside [0, T]");
  const auto& b = reward.linear_coeffs();
  const double s = model.horizon - t;
  if (s <= 0.0) return reward(x);
  const GaussianMixture post = model.posterior_data_given_state(s, x);
  double b2 = 0.0;
  for (double bc : b) b2 += bc * bc;
  std::vector<double> terms(post.n_components());
  for (int k = 0; k < post.n_components(); ++k) {
    double bdotm = 0.0;
    for (int c = 0; c < post.dim; ++c) bdotm += b[c] * post.means[k][c];
    terms[k] = std::log(post.weights[k]) + bdotm / alpha +
               b2 * post.vars[k] / (2.0 * alpha * alpha);
  }
  return alpha * detail::lse(terms);
}

// sigma^2(t) grad_x v*_t(x) / alpha with sigma = 1; gradient of the
// mixture-MGF expression in closed form.
inline std::vector<double> analytic_optimal_drift(const PretrainedModel& model,
                                                  const Reward& reward, double alpha, double t,
                                                  const std::vector<double>& x) {
  if (!reward.is_linear()) throw Error("analytic_optimal_drift: linear rewards only");
  const auto& b = reward.linear_coeffs();
  const int d = model.dim();
  const double s = model.horizon - t;
  std::vector<double> out(d);
  if (s <= 0.0) {
    for (int c = 0; c < d; ++c) out[c] = b[c] / alpha;
    return out;
  }
  const double c = std::exp(-0.5 * s);
  const double q2 = 1.0 - std::exp(-s);
  const int K = model.data.n_components();
  double b2 = 0.0;
  for (double bc : b) b2 += bc * bc;
  // A_k = log phi_k + b.mpost_k/alpha + ||b||^2 vpost_k/(2 alpha^2), B_k = log phi_k
  std::vector<double> A(K), B(K), Vm(K), vpost(K);
  for (int k = 0; k < K; ++k) {
    const double v = model.data.vars[k];
    Vm[k] = c * c * v + q2;
    vpost[k] = v * q2 / (q2 + c * c * v);
    double sumsq = 0.0, bdotm = 0.0;
    for (int cc = 0; cc < d; ++cc) {
      const double dd = x[cc] - c * model.data.means[k][cc];
      sumsq += dd * dd;
      bdotm += b[cc] * vpost[k] * (model.data.means[k][cc] / v + c * x[cc] / q2);
    }
    B[k] = std::log(model.data.weights[k]) - 0.5 * d * std::log(2.0 * M_PI * Vm[k]) -
           0.5 * sumsq / Vm[k];
    A[k] = B[k] + bdotm / alpha + b2 * vpost[k] / (2.0 * alpha * alpha);
  }
  const double lseA = detail::lse(A), lseB = detail::lse(B);
  for (int cc = 0; cc < d; ++cc) out[cc] = 0.0;
  for (int k = 0; k < K; ++k) {
    const double wa = std::exp(A[k] - lseA);
    const double wb = std::exp(B[k] - lseB);
    const double mcoef = vpost[k] * c / (q2 * alpha);
    for (int cc = 0; cc < d; ++cc) {
      const double dlogphi = -(x[cc] - c * model.data.means[k][cc]) / Vm[k];
      out[cc] += wa * (dlogphi + mcoef * b[cc]) - wb * dlogphi;
    }
  }
  return out;  // already sigma^2 grad v / alpha since sigma = 1
}

struct OptimalInitial {
  Grid1D grid;
  std::vector<double> density;  // normalized on the grid (dim 1 only)
  double log_C = 0.0;
  bool gaussian = false;  // closed form when the value is linear in x
  std::vector<double> mean;
  double var = 1.0;
};

inline OptimalInitial analytic_optimal_initial(const PretrainedModel& model, const Reward& reward,
                                               double alpha, Grid1D grid = Grid1D()) {
  if (!reward.is_linear()) throw Error("analytic_optimal_initial: linear rewards only");
  const int d = model.dim();
  OptimalInitial out;
  out.grid = grid;
  if (model.data.n_components() == 1) {
    // v*_0 is linear in x, so the tilt of N(0, I) stays Gaussian with unit
    // variance and mean equal to the linear coefficient of v*_0/alpha.
    const auto& b = reward.linear_coeffs();
    const double s = model.horizon;
    const double c = std::exp(-0.5 * s);
    const double q2 = 1.0 - std::exp(-s);
    const double v = model.data.vars[0];
    const double vpost = v * q2 / (q2 + c * c * v);
    out.gaussian = true;
    out.mean.resize(d);
    for (int cc = 0; cc < d; ++cc) out.mean[cc] = vpost * c / (q2 * alpha) * b[cc];
    out.var = 1.0;
  }
  if (d == 1) {
    std::vector<double> unnorm(grid.n);
    for (int i = 0; i < grid.n; ++i) {
      const double x = grid.x[i];
      const double v0 = analytic_value(model, reward, alpha, 0.0, {x});
      unnorm[i] = std::exp(v0 / alpha - 0.5 * x * x) / std::sqrt(2.0 * M_PI);
    }
    const double C = simpson(unnorm, grid);
    out.log_C = std::log(C);
    out.density.resize(grid.n);
    for (int i = 0; i < grid.n; ++i) out.density[i] = unnorm[i] / C;
  }
  return out;
}

// Residual of sigma^2/2 v_xx + f v_x + v_t + sigma^2 v_x^2 / (2 alpha) at
// (t, x), evaluated by central differences on analytic_value (dim 1).
inline double hjb_residual(const PretrainedModel& model, const Reward& reward, double alpha,
                           double t, double x, double h) {
  auto v = [&](double tt, double xx) {
    return analytic_value(model, reward, alpha, tt, {xx});
  };
  const double vx = (v(t, x + h) - v(t, x - h)) / (2.0 * h);
  const double vxx = (v(t, x + h) - 2.0 * v(t, x) + v(t, x - h)) / (h * h);
  const double vt = (v(t + h, x) - v(t - h, x)) / (2.0 * h);
  const std::vector<double> f = model.reverse_drift(t, std::vector<double>{x});
  return 0.5 * vxx + f[0] * vx + vt + vx * vx / (2.0 * alpha);
}

}  // namespace elegant::oracle
