#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

#include "driftflow/core.hpp"

namespace driftflow {

// Uniform cell-centered grid over a box, 1D or 2D. Value type; densities
// carry their own copy.
struct Grid {
  int dim = 1;
  std::array<double, 2> lower{0.0, 0.0};
  std::array<double, 2> upper{1.0, 0.0};
  std::array<int, 2> n{0, 1};  // cells per axis; n[1]==1 in 1D
  std::array<double, 2> dz{0.0, 0.0};

  static Grid make_1d(double lo, double hi, int cells) {
    Grid g;
    g.dim = 1;
    g.lower = {lo, 0.0};
    g.upper = {hi, 0.0};
    g.n = {cells, 1};
    g.validate();
    g.dz = {(hi - lo) / cells, 0.0};
    return g;
  }

  static Grid make_2d(double lo0, double hi0, int n0, double lo1, double hi1, int n1) {
    Grid g;
    g.dim = 2;
    g.lower = {lo0, lo1};
    g.upper = {hi0, hi1};
    g.n = {n0, n1};
    g.validate();
    g.dz = {(hi0 - lo0) / n0, (hi1 - lo1) / n1};
    return g;
  }

  void validate() const {
    for (int a = 0; a < dim; ++a) {
      if (!(upper[a] > lower[a]))
        throw InvalidArgument("grid: upper bound must exceed lower bound");
      if (n[a] < 4) throw InvalidArgument("grid: need at least 4 cells per axis");
    }
  }

  int size() const { return n[0] * n[1]; }
  double cell_volume() const { return (dim == 1) ? dz[0] : dz[0] * dz[1]; }
  double center(int axis, int i) const { return lower[axis] + (i + 0.5) * dz[axis]; }
  int flat(int i, int j) const { return i + n[0] * j; }

  Vec point(int idx) const {
    if (dim == 1) return Vec::scalar(center(0, idx));
    return Vec::of(center(0, idx % n[0]), center(1, idx / n[0]));
  }

  bool operator==(const Grid& o) const {
    return dim == o.dim && lower == o.lower && upper == o.upper && n == o.n;
  }
};

// Probability density, one value per cell, unit mass: sum(values)*cell_volume == 1.
struct Density {
  Grid grid;
  std::vector<double> values;

  double mass() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s * grid.cell_volume();
  }

  double min_value() const { return *std::min_element(values.begin(), values.end()); }

  // Normalizing constructor: rescales nonnegative values to unit mass.
  static Density from_values(const Grid& g, std::vector<double> vals) {
    if (static_cast<int>(vals.size()) != g.size())
      throw InvalidArgument("density: value count does not match grid");
    double s = 0.0;
    for (double v : vals) {
      if (!(v >= 0.0)) throw InvalidArgument("density: values must be nonnegative and finite");
      s += v;
    }
    s *= g.cell_volume();
    if (!(s > 0.0)) throw InvalidArgument("density: total mass must be positive");
    for (double& v : vals) v /= s;
    return Density{g, std::move(vals)};
  }

  // Non-rescaling constructor for solver output and file input: values must
  // already be a unit-mass density (loose tolerance; steps conserve mass).
  static Density raw(const Grid& g, std::vector<double> vals, double mass_tol = 1e-6) {
    if (static_cast<int>(vals.size()) != g.size())
      throw InvalidArgument("density: value count does not match grid");
    double s = 0.0;
    for (double v : vals) {
      if (!(v >= 0.0)) throw InvalidArgument("density: values must be nonnegative and finite");
      s += v;
    }
    s *= g.cell_volume();
    if (std::abs(s - 1.0) > mass_tol)
      throw InvalidArgument("density: mass deviates from 1 beyond tolerance");
    return Density{g, std::move(vals)};
  }
};

// Midpoint discretization of a pdf, renormalized to unit mass on the box.
template <class F>
Density discretize(const Grid& g, F&& pdf) {
  std::vector<double> vals(static_cast<size_t>(g.size()));
  for (int idx = 0; idx < g.size(); ++idx) {
    const double p = pdf(g.point(idx));
    if (!std::isfinite(p) || p < 0.0)
      throw InvalidArgument("discretize: pdf must be finite and nonnegative on the box");
    vals[static_cast<size_t>(idx)] = p;
  }
  return Density::from_values(g, std::move(vals));
}

// Raw moment sum(z_a^k rho) dV per axis, k <= 4.
inline Vec moment(const Density& rho, int k) {
  if (k < 0 || k > 4) throw InvalidArgument("moment: order must be in [0,4]");
  const Grid& g = rho.grid;
  Vec m = Vec::zero(g.dim);
  const double dv = g.cell_volume();
  for (int idx = 0; idx < g.size(); ++idx) {
    const Vec z = g.point(idx);
    for (int a = 0; a < g.dim; ++a) m[a] += std::pow(z[a], k) * rho.values[static_cast<size_t>(idx)] * dv;
  }
  return m;
}

// Inverse-CDF draws from the piecewise-constant density (uniform inside a
// cell). Deterministic for a given seed.
inline std::vector<Vec> sample(const Density& rho, int count, uint64_t seed) {
  if (count <= 0) throw InvalidArgument("sample: count must be positive");
  const Grid& g = rho.grid;
  const double dv = g.cell_volume();
  std::vector<double> cum(static_cast<size_t>(g.size()));
  double acc = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    acc += rho.values[static_cast<size_t>(i)] * dv;
    cum[static_cast<size_t>(i)] = acc;
  }
  Rng rng(seed);
  std::vector<Vec> out;
  out.reserve(static_cast<size_t>(count));
  for (int s = 0; s < count; ++s) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    int idx = static_cast<int>(it - cum.begin());
    if (idx >= g.size()) idx = g.size() - 1;
    while (idx > 0 && rho.values[static_cast<size_t>(idx)] == 0.0) --idx;
    Vec z = Vec::zero(g.dim);
    if (g.dim == 1) {
      z[0] = g.lower[0] + (idx + rng.uniform()) * g.dz[0];
    } else {
      const int i = idx % g.n[0], j = idx / g.n[0];
      z[0] = g.lower[0] + (i + rng.uniform()) * g.dz[0];
      z[1] = g.lower[1] + (j + rng.uniform()) * g.dz[1];
    }
    out.push_back(z);
  }
  return out;
}

namespace detail {
inline std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

inline void write_density_csv(const Density& rho, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  const Grid& g = rho.grid;
  out << (g.dim == 1 ? "z,rho\n" : "z1,z2,rho\n");
  for (int idx = 0; idx < g.size(); ++idx) {
    const Vec z = g.point(idx);
    if (g.dim == 1)
      out << detail::fmt17(z[0]) << ',' << detail::fmt17(rho.values[static_cast<size_t>(idx)]) << '\n';
    else
      out << detail::fmt17(z[0]) << ',' << detail::fmt17(z[1]) << ','
          << detail::fmt17(rho.values[static_cast<size_t>(idx)]) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

// Reads a density written by write_density_csv back onto `g`. Cell centers in
// the file must match the grid; values are taken as-is (no renormalization),
// so a write/read round trip is bitwise exact.
inline Density read_density_csv(const Grid& g, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open density file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("empty density file: " + path);
  std::vector<double> vals;
  vals.reserve(static_cast<size_t>(g.size()));
  int idx = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    std::array<double, 3> cols{};
    int ncols = 0;
    while (std::getline(ss, tok, ',') && ncols < 3) cols[static_cast<size_t>(ncols++)] = std::stod(tok);
    const int want = g.dim + 1;
    if (ncols != want) throw InvalidArgument("density file: wrong column count in " + path);
    if (idx >= g.size()) throw InvalidArgument("density file: too many rows for grid in " + path);
    const Vec z = g.point(idx);
    for (int a = 0; a < g.dim; ++a)
      if (std::abs(cols[static_cast<size_t>(a)] - z[a]) > 1e-9)
        throw InvalidArgument("density file: cell centers do not match grid in " + path);
    vals.push_back(cols[static_cast<size_t>(g.dim)]);
    ++idx;
  }
  if (idx != g.size()) throw InvalidArgument("density file: row count does not match grid in " + path);
  return Density::raw(g, std::move(vals));
}

}  // namespace driftflow
