#pragma once

// Time grids, SDE specs, Euler-Maruyama simulation (plain and graph-recorded
// for backpropagation) and the discretized running-cost integral.
//
// Noise increments have variance dt per component (standard Brownian
// scaling). Drift and sigma are evaluated at the left endpoint. Increments
// are drawn from counter-based streams, one stream per trajectory, so a batch
// is reproducible regardless of evaluation order.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <vector>

#include "elegant/autodiff.hpp"
#include "elegant/rng.hpp"
#include "elegant/tensor.hpp"

namespace elegant {

struct TimeGrid {
  double t_start = 0.0;
  double t_end = 1.0;
  int n_steps = 100;

  TimeGrid() = default;
  TimeGrid(double t0, double t1, int n) : t_start(t0), t_end(t1), n_steps(n) {
    if (!(t_start < t_end)) throw Error("TimeGrid: t_start must be < t_end");
    if (n_steps < 1) throw Error("TimeGrid: n_steps must be >= 1");
  }

  double dt() const { return (t_end - t_start) / n_steps; }
  double time(int k) const { return t_start + k * dt(); }
};

using DriftEval = std::function<void(double t, const double* x, double* out)>;
using SigmaEval = std::function<double(double t)>;

struct SdeSpec {
  int dim = 1;
  DriftEval drift;  // null means zero drift
  SigmaEval sigma;
};

struct Trajectory {
  TimeGrid grid;
  std::vector<std::vector<double>> x;   // n_steps + 1 states
  std::vector<std::vector<double>> dw;  // n_steps increments, variance dt each
  uint64_t master_seed = 0;
  uint64_t stream = 0;

  const std::vector<double>& terminal() const { return x.back(); }
};

// Initial draws use counter indices far above any path-noise index.
inline constexpr uint64_t kInitIndexBase = uint64_t(1) << 56;

inline std::vector<double> draw_standard_normal_init(const RngStream& rng, int dim) {
  std::vector<double> x(dim);
  for (int c = 0; c < dim; ++c) x[c] = rng.normal(kInitIndexBase + c);
  return x;
}

using InitSampler = std::function<std::vector<double>(const RngStream& rng)>;

namespace detail {

inline void check_finite(const std::vector<double>& x, int step) {
  for (double v : x)
    if (!std::isfinite(v))
      throw Error("simulate: non-finite state at step " + std::to_string(step));
}

}  // namespace detail

inline Trajectory simulate(const SdeSpec& spec, std::vector<double> x_init, const TimeGrid& grid,
                           const RngStream& rng) {
  if (static_cast<int>(x_init.size()) != spec.dim)
    throw Error("simulate: x_init dimension mismatch");
  Trajectory traj;
  traj.grid = grid;
  traj.master_seed = rng.master;
  traj.stream = rng.stream;
  traj.x.reserve(grid.n_steps + 1);
  traj.dw.reserve(grid.n_steps);
  traj.x.push_back(std::move(x_init));
  detail::check_finite(traj.x[0], 0);
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);
  std::vector<double> f(spec.dim, 0.0);
  for (int k = 0; k < grid.n_steps; ++k) {
    const double t = grid.time(k);
    const double sig = spec.sigma ? spec.sigma(t) : 0.0;
    if (spec.drift) spec.drift(t, traj.x[k].data(), f.data());
    std::vector<double> inc(spec.dim);
    std::vector<double> next(spec.dim);
    for (int c = 0; c < spec.dim; ++c) {
      inc[c] = sqdt * rng.normal(static_cast<uint64_t>(k) * spec.dim + c);
      next[c] = traj.x[k][c] + f[c] * dt + sig * inc[c];
    }
    detail::check_finite(next, k + 1);
    traj.dw.push_back(std::move(inc));
    traj.x.push_back(std::move(next));
  }
  return traj;
}

inline Trajectory simulate(const SdeSpec& spec, const InitSampler& init, const TimeGrid& grid,
                           const RngStream& rng) {
  return simulate(spec, init(rng), grid, rng);
}

inline std::vector<Trajectory> simulate_batch(const SdeSpec& spec, const InitSampler& init,
                                              const TimeGrid& grid, uint64_t master_seed,
                                              int batch) {
  if (batch < 1) throw Error("simulate_batch: batch must be >= 1");
  std::vector<Trajectory> out;
  out.reserve(batch);
  for (int i = 0; i < batch; ++i)
    out.push_back(simulate(spec, init, grid, RngStream(master_seed, i)));
  return out;
}

// Rebuilds the state sequence from the stored increments; must reproduce the
// stored states bit-exactly for a deterministic drift.
inline std::vector<std::vector<double>> replay_states(const Trajectory& traj,
                                                      const SdeSpec& spec) {
  std::vector<std::vector<double>> xs;
  xs.push_back(traj.x[0]);
  const double dt = traj.grid.dt();
  std::vector<double> f(spec.dim, 0.0);
  for (int k = 0; k < traj.grid.n_steps; ++k) {
    const double t = traj.grid.time(k);
    const double sig = spec.sigma ? spec.sigma(t) : 0.0;
    if (spec.drift) spec.drift(t, xs[k].data(), f.data());
    std::vector<double> next(spec.dim);
    for (int c = 0; c < spec.dim; ++c) next[c] = xs[k][c] + f[c] * dt + sig * traj.dw[k][c];
    xs.push_back(std::move(next));
  }
  return xs;
}

// (alpha/2) * sum_k ||u(t_k, x_k)||^2 / sigma^2(t_k) * dt, left Riemann sum.
inline double running_cost(const Trajectory& traj, const DriftEval& u, const SigmaEval& sigma,
                           double alpha) {
  if (!(alpha > 0.0)) throw Error("running_cost: alpha must be positive");
  const int d = static_cast<int>(traj.x[0].size());
  const double dt = traj.grid.dt();
  std::vector<double> uval(d);
  double cost = 0.0;
  for (int k = 0; k < traj.grid.n_steps; ++k) {
    const double t = traj.grid.time(k);
    const double sig = sigma(t);
    if (sig == 0.0) throw Error("running_cost: sigma is zero at t=" + std::to_string(t));
    u(t, traj.x[k].data(), uval.data());
    double sumsq = 0.0;
    for (int c = 0; c < d; ++c) sumsq += uval[c] * uval[c];
    const double coef = 0.5 * alpha / (sig * sig) * dt;
    cost = cost + sumsq * coef;
  }
  return cost;
}

// A drift term that can be evaluated plainly and recorded into a graph over a
// [d x B] batch of states.
struct RecordedDrift {
  DriftEval plain;
  std::function<ad::Id(ad::Graph& g, double t, ad::Id x)> record;
};

struct RecordedRollout {
  ad::Graph graph;
  ad::Id x_terminal = -1;     // [d x B]
  ad::Id cost_terminal = -1;  // [1 x B], equals running_cost per column
  std::vector<Trajectory> trajectories;
};

// Unrolls Euler-Maruyama into an autodiff graph. The controlled drift u is
// penalized in the cost channel; the base drift (when present) is added to
// the state update only. Noise enters as constants, so backward() yields
// pathwise gradients.
inline RecordedRollout simulate_recorded(const RecordedDrift* base, const RecordedDrift& control,
                                         const SigmaEval& sigma, double alpha,
                                         const std::vector<std::vector<double>>& x_init,
                                         const TimeGrid& grid, uint64_t master_seed,
                                         uint64_t stream0 = 0) {
  const int B = static_cast<int>(x_init.size());
  if (B < 1) throw Error("simulate_recorded: empty batch");
  const int d = static_cast<int>(x_init[0].size());
  const double dt = grid.dt();
  const double sqdt = std::sqrt(dt);

  RecordedRollout out;
  ad::Graph& g = out.graph;
  Tensor X0(d, B);
  for (int j = 0; j < B; ++j)
    for (int c = 0; c < d; ++c) X0.at(c, j) = x_init[j][c];
  ad::Id X = g.constant(std::move(X0));
  ad::Id Y = g.constant(Tensor(1, B));

  out.trajectories.resize(B);
  for (int j = 0; j < B; ++j) {
    out.trajectories[j].grid = grid;
    out.trajectories[j].master_seed = master_seed;
    out.trajectories[j].stream = stream0 + j;
    out.trajectories[j].x.push_back(x_init[j]);
  }

  for (int k = 0; k < grid.n_steps; ++k) {
    const double t = grid.time(k);
    const double sig = sigma(t);
    if (sig == 0.0) throw Error("simulate_recorded: sigma is zero at t=" + std::to_string(t));
    ad::Id u = control.record(g, t, X);
    ad::Id drift = u;
    if (base) drift = g.add(base->record(g, t, X), u);
    const double coef = 0.5 * alpha / (sig * sig) * dt;
    Y = g.add(Y, g.scalar_mul(coef, g.colsum(g.square(u))));
    Tensor noise(d, B);
    for (int j = 0; j < B; ++j) {
      RngStream rng(master_seed, stream0 + j);
      std::vector<double> inc(d);
      for (int c = 0; c < d; ++c) {
        inc[c] = sqdt * rng.normal(static_cast<uint64_t>(k) * d + c);
        noise.at(c, j) = sig * inc[c];
      }
      out.trajectories[j].dw.push_back(std::move(inc));
    }
    X = g.add(g.add(X, g.scalar_mul(dt, drift)), g.constant(std::move(noise)));
    const Tensor& xv = g.value(X);
    for (int j = 0; j < B; ++j) {
      std::vector<double> st(d);
      for (int c = 0; c < d; ++c) {
        st[c] = xv.at(c, j);
        if (!std::isfinite(st[c]))
          throw Error("simulate_recorded: non-finite state at step " + std::to_string(k + 1));
      }
      out.trajectories[j].x.push_back(std::move(st));
    }
  }
  out.x_terminal = X;
  out.cost_terminal = Y;
  return out;
}

inline void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open trajectory CSV for writing: " + path);
  const int d = static_cast<int>(traj.x[0].size());
  out << "t";
  for (int c = 0; c < d; ++c) out << ",x_" << (c + 1);
  out << "\n";
  char buf[64];
  for (size_t k = 0; k < traj.x.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g", traj.grid.time(static_cast<int>(k)));
    out << buf;
    for (int c = 0; c < d; ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", traj.x[k][c]);
      out << "," << buf;
    }
    out << "\n";
  }
}

}  // namespace elegant
