#pragma once

// Composite-Simpson quadrature on fixed windows. The default 1-D window
// [-10, 10] with 4001 points keeps the tail mass of every configured mixture
// below 1e-12; 2-D uses a 401x401 tensor grid on [-8, 8]^2.

#include <functional>
#include <vector>

#include "elegant/tensor.hpp"

namespace elegant {

struct Grid1D {
  double lo = -10.0;
  double hi = 10.0;
  int n = 4001;  // number of points, odd
  std::vector<double> x;

  Grid1D() { build(); }
  Grid1D(double lo_, double hi_, int n_) : lo(lo_), hi(hi_), n(n_) { build(); }

  double h() const { return (hi - lo) / (n - 1); }

  void build() {
    if (n < 3 || n % 2 == 0) throw Error("Grid1D: need an odd point count >= 3");
    if (!(lo < hi)) throw Error("Grid1D: empty window");
    x.resize(n);
    for (int i = 0; i < n; ++i) x[i] = lo + i * h();
  }
};

inline double simpson(const std::vector<double>& f, const Grid1D& g) {
  if (static_cast<int>(f.size()) != g.n) throw Error("simpson: value count != grid size");
  double acc = f[0] + f[g.n - 1];
  for (int i = 1; i < g.n - 1; ++i) acc += f[i] * (i % 2 == 1 ? 4.0 : 2.0);
  return acc * g.h() / 3.0;
}

inline double simpson(const std::function<double(double)>& f, const Grid1D& g) {
  std::vector<double> vals(g.n);
  for (int i = 0; i < g.n; ++i) vals[i] = f(g.x[i]);
  return simpson(vals, g);
}

struct Grid2D {
  Grid1D gx;
  Grid1D gy;

  Grid2D() : gx(-8.0, 8.0, 401), gy(-8.0, 8.0, 401) {}
  Grid2D(Grid1D a, Grid1D b) : gx(std::move(a)), gy(std::move(b)) {}
};

inline double simpson2d(const std::function<double(double, double)>& f, const Grid2D& g) {
  std::vector<double> rows(g.gy.n);
  std::vector<double> vals(g.gx.n);
  for (int j = 0; j < g.gy.n; ++j) {
    for (int i = 0; i < g.gx.n; ++i) vals[i] = f(g.gx.x[i], g.gy.x[j]);
    rows[j] = simpson(vals, g.gx);
  }
  return simpson(rows, g.gy);
}

}  // namespace elegant
