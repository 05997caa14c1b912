#pragma once

// The exact "pretrained" diffusion model: an isotropic Gaussian mixture pushed
// through the variance-preserving forward process dy = -0.5 y dt + dw. All
// marginals, scores, posteriors and the reverse-time drift are closed-form,
// so pretraining error is exactly zero.
//
// The reverse-time drift is f(t,x) = 0.5 x + score(Q_{T-t}, x); the sign on
// the score term is fixed by the marginal-consistency test in the suite (the
// reverse process must reproduce the forward marginals).

#include <cmath>
#include <vector>

#include "elegant/autodiff.hpp"
#include "elegant/rng.hpp"
#include "elegant/tensor.hpp"

namespace elegant {

struct GaussianMixture {
  int dim = 1;
  std::vector<double> weights;
  std::vector<std::vector<double>> means;
  std::vector<double> vars;  // isotropic per-component variance

  int n_components() const { return static_cast<int>(weights.size()); }

  void validate() const {
    if (weights.empty()) throw Error("GaussianMixture: no components");
    if (means.size() != weights.size() || vars.size() != weights.size())
      throw Error("GaussianMixture: component count mismatch");
    double sum = 0.0;
    for (double w : weights) {
      if (!(w > 0.0)) throw Error("GaussianMixture: weights must be positive");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw Error("GaussianMixture: weights must sum to 1");
    for (double v : vars)
      if (!(v > 0.0)) throw Error("GaussianMixture: variances must be positive");
    for (const auto& m : means)
      if (static_cast<int>(m.size()) != dim) throw Error("GaussianMixture: mean dim mismatch");
  }
};

namespace detail {

// Shared score kernel: out = sum_k r_k(x) (m_k - x) / V_k with softmax
// responsibilities, max-shifted. Arithmetic order matches the recorded graph.
struct MixtureParams {
  int dim = 1;
  std::vector<std::vector<double>> m;  // component means
  std::vector<double> V;               // component variances
  std::vector<double> lw;              // log w_k - (dim/2) log(2 pi V_k)
};

inline MixtureParams mixture_params(const GaussianMixture& gm) {
  if (gm.n_components() > 64 || gm.dim > 8)
    throw Error("GaussianMixture: at most 64 components and 8 dimensions supported");
  MixtureParams p;
  p.dim = gm.dim;
  p.m = gm.means;
  p.V = gm.vars;
  p.lw.resize(gm.weights.size());
  for (size_t k = 0; k < gm.weights.size(); ++k)
    p.lw[k] = std::log(gm.weights[k]) - 0.5 * gm.dim * std::log(2.0 * M_PI * gm.vars[k]);
  return p;
}

inline void score_kernel(const MixtureParams& p, const double* x, double* out) {
  const int K = static_cast<int>(p.V.size());
  const int d = p.dim;
  double ell[64];
  double diff[64 * 8];
  for (int k = 0; k < K; ++k) {
    double sumsq = 0.0;
    for (int c = 0; c < d; ++c) {
      const double dd = p.m[k][c] - x[c];
      diff[k * d + c] = dd;
      sumsq += dd * dd;
    }
    const double coef = -0.5 / p.V[k];
    ell[k] = coef * sumsq + p.lw[k];
  }
  double shift = ell[0];
  for (int k = 1; k < K; ++k) shift = std::max(shift, ell[k]);
  double e[64];
  double S = 0.0;
  for (int k = 0; k < K; ++k) {
    e[k] = std::exp(ell[k] - shift);
    S += e[k];
  }
  for (int c = 0; c < d; ++c) out[c] = 0.0;
  for (int k = 0; k < K; ++k) {
    const double r = e[k] / S;
    const double invV = 1.0 / p.V[k];
    for (int c = 0; c < d; ++c) out[c] += r * (diff[k * d + c] * invV);
  }
}

inline double log_density_kernel(const MixtureParams& p, const double* x) {
  const int K = static_cast<int>(p.V.size());
  double ell[64];
  for (int k = 0; k < K; ++k) {
    double sumsq = 0.0;
    for (int c = 0; c < p.dim; ++c) {
      const double dd = p.m[k][c] - x[c];
      sumsq += dd * dd;
    }
    ell[k] = (-0.5 / p.V[k]) * sumsq + p.lw[k];
  }
  double shift = ell[0];
  for (int k = 1; k < K; ++k) shift = std::max(shift, ell[k]);
  double S = 0.0;
  for (int k = 0; k < K; ++k) S += std::exp(ell[k] - shift);
  return shift + std::log(S);
}

// Records score_kernel over a [d x B] state node. The max shift enters as a
// constant, which is exact for softmax responsibilities.
inline ad::Id record_score(ad::Graph& g, const MixtureParams& p, ad::Id X) {
  const int K = static_cast<int>(p.V.size());
  const int B = g.value(X).cols;
  std::vector<ad::Id> diffs(K);
  ad::Id L = -1;
  for (int k = 0; k < K; ++k) {
    diffs[k] = g.sub(g.constant(Tensor::column(p.m[k])), X);
    ad::Id sumsq = g.colsum(g.square(diffs[k]));
    ad::Id ell = g.add(g.scalar_mul(-0.5 / p.V[k], sumsq), g.constant_scalar(p.lw[k]));
    L = (k == 0) ? ell : g.concat_rows(L, ell);
  }
  Tensor shift(1, B);
  for (int j = 0; j < B; ++j) {
    double mx = g.value(L).at(0, j);
    for (int k = 1; k < K; ++k) mx = std::max(mx, g.value(L).at(k, j));
    shift.at(0, j) = mx;
  }
  ad::Id E = g.exp(g.sub(L, g.constant(std::move(shift))));
  ad::Id R = g.div(E, g.colsum(E));
  ad::Id score = -1;
  for (int k = 0; k < K; ++k) {
    ad::Id rk = (K == 1) ? R : g.slice_rows(R, k, k + 1);
    ad::Id term = g.mul(rk, g.scalar_mul(1.0 / p.V[k], diffs[k]));
    score = (k == 0) ? term : g.add(score, term);
  }
  return score;
}

}  // namespace detail

inline double log_density(const GaussianMixture& gm, const std::vector<double>& x) {
  return detail::log_density_kernel(detail::mixture_params(gm), x.data());
}

inline double density(const GaussianMixture& gm, const std::vector<double>& x) {
  return std::exp(log_density(gm, x));
}

inline std::vector<double> score(const GaussianMixture& gm, const std::vector<double>& x) {
  std::vector<double> out(gm.dim);
  detail::score_kernel(detail::mixture_params(gm), x.data(), out.data());
  return out;
}

// Marginal of the forward process at time s >= 0 started from gm.
inline GaussianMixture forward_marginal(const GaussianMixture& gm, double s) {
  if (s < 0.0) throw Error("forward_marginal: time must be nonnegative");
  const double c = std::exp(-0.5 * s);
  const double es = std::exp(-s);
  GaussianMixture out = gm;
  for (int k = 0; k < gm.n_components(); ++k) {
    for (double& m : out.means[k]) m *= c;
    out.vars[k] = es * gm.vars[k] + (1.0 - es);
  }
  return out;
}

// Draws one sample; draw index i consumes stream counters
// [i*(dim+1), (i+1)*(dim+1)).
inline std::vector<double> sample(const GaussianMixture& gm, const RngStream& rng, uint64_t i) {
  const uint64_t base = i * static_cast<uint64_t>(gm.dim + 1);
  const double u = rng.uniform(base);
  int k = gm.n_components() - 1;
  double acc = 0.0;
  for (int j = 0; j < gm.n_components(); ++j) {
    acc += gm.weights[j];
    if (u <= acc) {
      k = j;
      break;
    }
  }
  std::vector<double> x(gm.dim);
  const double sd = std::sqrt(gm.vars[k]);
  for (int c = 0; c < gm.dim; ++c) x[c] = gm.means[k][c] + sd * rng.normal(base + 1 + c);
  return x;
}

struct PretrainedModel {
  GaussianMixture data;
  double horizon = 5.0;  // T; nu_ini = N(0, I_d)

  int dim() const { return data.dim; }

  detail::MixtureParams marginal_params(double s) const {
    return detail::mixture_params(forward_marginal(data, s));
  }

  // f(t, x) of the reverse SDE on [0, T], sigma(t) = 1.
  void reverse_drift(double t, const double* x, double* out) const {
    const detail::MixtureParams p = marginal_params(horizon - t);
    detail::score_kernel(p, x, out);
    for (int c = 0; c < dim(); ++c) out[c] = 0.5 * x[c] + out[c];
  }

  std::vector<double> reverse_drift(double t, const std::vector<double>& x) const {
    std::vector<double> out(dim());
    reverse_drift(t, x.data(), out.data());
    return out;
  }

  ad::Id record_reverse_drift(ad::Graph& g, double t, ad::Id X) const {
    const detail::MixtureParams p = marginal_params(horizon - t);
    ad::Id sc = detail::record_score(g, p, X);
    return g.add(g.scalar_mul(0.5, X), sc);
  }

  double pdata_density(const std::vector<double>& x) const { return density(data, x); }
  double pdata_log_density(const std::vector<double>& x) const { return log_density(data, x); }

  // Conditional law of the data point given the forward state at time s > 0:
  // conjugate Gaussian posterior per component, responsibility-reweighted.
  GaussianMixture posterior_data_given_state(double s, const std::vector<double>& x) const {
    if (!(s > 0.0))
      throw Error("posterior_data_given_state: s must be positive (s=0 is a point mass)");
    const double c = std::exp(-0.5 * s);
    const double q2 = 1.0 - std::exp(-s);
    const int K = data.n_components();
    const int d = dim();
    GaussianMixture post;
    post.dim = d;
    post.weights.resize(K);
    post.means.resize(K);
    post.vars.resize(K);
    std::vector<double> logresp(K);
    for (int k = 0; k < K; ++k) {
      const double v = data.vars[k];
      const double Vk = c * c * v + q2;  // marginal variance at s
      double sumsq = 0.0;
      for (int cc = 0; cc < d; ++cc) {
        const double dd = x[cc] - c * data.means[k][cc];
        sumsq += dd * dd;
      }
      logresp[k] = std::log(data.weights[k]) - 0.5 * d * std::log(2.0 * M_PI * Vk) -
                   0.5 * sumsq / Vk;
      const double vpost = v * q2 / (q2 + c * c * v);
      post.vars[k] = vpost;
      post.means[k].resize(d);
      for (int cc = 0; cc < d; ++cc)
        post.means[k][cc] = vpost * (data.means[k][cc] / v + c * x[cc] / q2);
    }
    double shift = logresp[0];
    for (int k = 1; k < K; ++k) shift = std::max(shift, logresp[k]);
    double Z = 0.0;
    for (int k = 0; k < K; ++k) Z += std::exp(logresp[k] - shift);
    for (int k = 0; k < K; ++k) post.weights[k] = std::exp(logresp[k] - shift) / Z;
    return post;
  }
};

}  // namespace elegant
