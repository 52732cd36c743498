#pragma once

#include "driftflow/grid.hpp"

namespace driftflow {

// Per-step bookkeeping for conservation audits.
struct StepReport {
  double dt_used = 0.0;
  double max_face_speed = 0.0;
  double min_cell_value = 0.0;
  double mass_drift = 0.0;  // |mass_after - mass_before|
};

// Face velocities from a potential field xi, one value per face (n+1 of
// them), zero at the boundary faces (zero-flux box).
//   sign = +1: velocity -grad(xi), the density descends xi
//   sign = -1: velocity +grad(xi), the density ascends xi
inline std::vector<double> face_velocities(const std::vector<double>& xi, const Grid& g,
                                           double sign = 1.0) {
  if (g.dim != 1) throw InvalidArgument("face_velocities: 1D grids only");
  const int n = g.n[0];
  if (static_cast<int>(xi.size()) != n) throw InvalidArgument("face_velocities: field size mismatch");
  for (double v : xi)
    if (!std::isfinite(v)) throw InvalidArgument("face_velocities: field must be finite");
  std::vector<double> u(static_cast<size_t>(n) + 1, 0.0);
  for (int i = 0; i + 1 < n; ++i)
    u[static_cast<size_t>(i) + 1] = -sign * (xi[static_cast<size_t>(i) + 1] - xi[static_cast<size_t>(i)]) / g.dz[0];
  return u;
}

// Advertised stable step cfl * dz / max|u|; +inf when nothing moves.
// Positivity of the upwind update is guaranteed for cfl <= 0.5 (see
// sharp_dt for the exact bound).
inline double cfl_dt(const std::vector<double>& u, const Grid& g, double cfl) {
  if (!(cfl > 0.0 && cfl <= 1.0)) throw InvalidArgument("cfl_dt: cfl number must be in (0,1]");
  double umax = 0.0;
  for (double v : u) umax = std::max(umax, std::abs(v));
  if (umax == 0.0) return std::numeric_limits<double>::infinity();
  return cfl * g.dz[0] / umax;
}

namespace detail {
// exact positivity threshold: max over cells of outflow coefficient
inline double outflow_coef_max_1d(const std::vector<double>& u, const Grid& g) {
  const int n = g.n[0];
  double cmax = 0.0;
  for (int i = 0; i < n; ++i) {
    const double out_r = std::max(u[static_cast<size_t>(i) + 1], 0.0);
    const double out_l = std::max(-u[static_cast<size_t>(i)], 0.0);
    cmax = std::max(cmax, (out_r + out_l) / g.dz[0]);
  }
  return cmax;
}
}  // namespace detail

// Largest dt for which the update is provably nonnegative.
inline double sharp_dt(const std::vector<double>& u, const Grid& g) {
  const double c = detail::outflow_coef_max_1d(u, g);
  if (c == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / c;
}

// One explicit upwind transport step with zero-flux boundaries. Rejects dt
// beyond the positivity bound, reporting the admissible value.
inline Density step(const Density& rho, const std::vector<double>& u, double dt,
                    StepReport* report = nullptr) {
  const Grid& g = rho.grid;
  if (g.dim != 1) throw InvalidArgument("step: 1D grids only");
  const int n = g.n[0];
  if (static_cast<int>(u.size()) != n + 1) throw InvalidArgument("step: face velocity size mismatch");
  if (!(dt > 0.0)) throw InvalidArgument("step: dt must be positive");
  if (u.front() != 0.0 || u.back() != 0.0)
    throw InvalidArgument("step: boundary faces must carry zero velocity");
  const double admissible = sharp_dt(u, g);
  if (dt > admissible * (1.0 + 1e-12))
    throw CflError("step: dt exceeds the stable bound", admissible);

  std::vector<double> flux(static_cast<size_t>(n) + 1, 0.0);
  for (int f = 1; f < n; ++f) {
    const double uf = u[static_cast<size_t>(f)];
    flux[static_cast<size_t>(f)] = (uf >= 0.0) ? uf * rho.values[static_cast<size_t>(f) - 1]
                                               : uf * rho.values[static_cast<size_t>(f)];
  }
  std::vector<double> out(static_cast<size_t>(n));
  const double r = dt / g.dz[0];
  double minv = std::numeric_limits<double>::infinity();
  double umax = 0.0;
  for (double v : u) umax = std::max(umax, std::abs(v));
  for (int i = 0; i < n; ++i) {
    double v = rho.values[static_cast<size_t>(i)] -
               r * (flux[static_cast<size_t>(i) + 1] - flux[static_cast<size_t>(i)]);
    if (v < 0.0) {
      if (v < -1e-13) throw SolverError("step: negative cell beyond roundoff");
      v = 0.0;  // roundoff at the admissibility edge
    }
    out[static_cast<size_t>(i)] = v;
    minv = std::min(minv, v);
  }
  Density next{g, std::move(out)};
  if (report) {
    report->dt_used = dt;
    report->max_face_speed = umax;
    report->min_cell_value = minv;
    report->mass_drift = std::abs(next.mass() - rho.mass());
  }
  return next;
}

// ---- 2D ----

// Face velocity fields for a 2D potential; ux has (n0+1)*n1 entries indexed
// f + (n0+1)*j, uy has n0*(n1+1) indexed i + n0*f. Boundary faces are zero.
struct FaceField2D {
  std::vector<double> ux, uy;
};

inline FaceField2D face_velocities_2d(const std::vector<double>& xi, const Grid& g,
                                      double sign = 1.0) {
  if (g.dim != 2) throw InvalidArgument("face_velocities_2d: 2D grids only");
  if (static_cast<int>(xi.size()) != g.size())
    throw InvalidArgument("face_velocities_2d: field size mismatch");
  for (double v : xi)
    if (!std::isfinite(v)) throw InvalidArgument("face_velocities_2d: field must be finite");
  const int n0 = g.n[0], n1 = g.n[1];
  FaceField2D f;
  f.ux.assign(static_cast<size_t>((n0 + 1) * n1), 0.0);
  f.uy.assign(static_cast<size_t>(n0 * (n1 + 1)), 0.0);
  for (int j = 0; j < n1; ++j)
    for (int i = 0; i + 1 < n0; ++i)
      f.ux[static_cast<size_t>(i + 1 + (n0 + 1) * j)] =
          -sign * (xi[static_cast<size_t>(g.flat(i + 1, j))] - xi[static_cast<size_t>(g.flat(i, j))]) / g.dz[0];
  for (int j = 0; j + 1 < n1; ++j)
    for (int i = 0; i < n0; ++i)
      f.uy[static_cast<size_t>(i + n0 * (j + 1))] =
          -sign * (xi[static_cast<size_t>(g.flat(i, j + 1))] - xi[static_cast<size_t>(g.flat(i, j))]) / g.dz[1];
  return f;
}

namespace detail {
inline double outflow_coef_max_2d(const FaceField2D& f, const Grid& g) {
  const int n0 = g.n[0], n1 = g.n[1];
  double cmax = 0.0;
  for (int j = 0; j < n1; ++j)
    for (int i = 0; i < n0; ++i) {
      const double out_xr = std::max(f.ux[static_cast<size_t>(i + 1 + (n0 + 1) * j)], 0.0);
      const double out_xl = std::max(-f.ux[static_cast<size_t>(i + (n0 + 1) * j)], 0.0);
      const double out_yr = std::max(f.uy[static_cast<size_t>(i + n0 * (j + 1))], 0.0);
      const double out_yl = std::max(-f.uy[static_cast<size_t>(i + n0 * j)], 0.0);
      cmax = std::max(cmax, (out_xr + out_xl) / g.dz[0] + (out_yr + out_yl) / g.dz[1]);
    }
  return cmax;
}
}  // namespace detail

inline double sharp_dt_2d(const FaceField2D& f, const Grid& g) {
  const double c = detail::outflow_coef_max_2d(f, g);
  if (c == 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / c;
}

inline double cfl_dt_2d(const FaceField2D& f, const Grid& g, double cfl) {
  if (!(cfl > 0.0 && cfl <= 1.0)) throw InvalidArgument("cfl_dt_2d: cfl number must be in (0,1]");
  double uxmax = 0.0, uymax = 0.0;
  for (double v : f.ux) uxmax = std::max(uxmax, std::abs(v));
  for (double v : f.uy) uymax = std::max(uymax, std::abs(v));
  if (uxmax + uymax == 0.0) return std::numeric_limits<double>::infinity();
  return cfl * std::min(g.dz[0], g.dz[1]) / (uxmax + uymax);
}

// Unsplit 2D upwind step driven by a single potential field.
inline Density step2d(const Density& rho, const std::vector<double>& xi, double dt,
                      double sign = 1.0, StepReport* report = nullptr) {
  const Grid& g = rho.grid;
  if (g.dim != 2) throw InvalidArgument("step2d: 2D grids only");
  if (!(dt > 0.0)) throw InvalidArgument("step2d: dt must be positive");
  const FaceField2D f = face_velocities_2d(xi, g, sign);
  const double admissible = sharp_dt_2d(f, g);
  if (dt > admissible * (1.0 + 1e-12))
    throw CflError("step2d: dt exceeds the stable bound", admissible);

  const int n0 = g.n[0], n1 = g.n[1];
  std::vector<double> fx(static_cast<size_t>((n0 + 1) * n1), 0.0);
  std::vector<double> fy(static_cast<size_t>(n0 * (n1 + 1)), 0.0);
  for (int j = 0; j < n1; ++j)
    for (int i = 1; i < n0; ++i) {
      const double uf = f.ux[static_cast<size_t>(i + (n0 + 1) * j)];
      fx[static_cast<size_t>(i + (n0 + 1) * j)] =
          (uf >= 0.0) ? uf * rho.values[static_cast<size_t>(g.flat(i - 1, j))]
                      : uf * rho.values[static_cast<size_t>(g.flat(i, j))];
    }
  for (int j = 1; j < n1; ++j)
    for (int i = 0; i < n0; ++i) {
      const double uf = f.uy[static_cast<size_t>(i + n0 * j)];
      fy[static_cast<size_t>(i + n0 * j)] = (uf >= 0.0)
                                                ? uf * rho.values[static_cast<size_t>(g.flat(i, j - 1))]
                                                : uf * rho.values[static_cast<size_t>(g.flat(i, j))];
    }
  std::vector<double> out(static_cast<size_t>(g.size()));
  double minv = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n1; ++j)
    for (int i = 0; i < n0; ++i) {
      double v = rho.values[static_cast<size_t>(g.flat(i, j))] -
                 dt / g.dz[0] * (fx[static_cast<size_t>(i + 1 + (n0 + 1) * j)] - fx[static_cast<size_t>(i + (n0 + 1) * j)]) -
                 dt / g.dz[1] * (fy[static_cast<size_t>(i + n0 * (j + 1))] - fy[static_cast<size_t>(i + n0 * j)]);
      if (v < 0.0) {
        if (v < -1e-13) throw SolverError("step2d: negative cell beyond roundoff");
        v = 0.0;
      }
      out[static_cast<size_t>(g.flat(i, j))] = v;
      minv = std::min(minv, v);
    }
  Density next{g, std::move(out)};
  if (report) {
    double umax = 0.0;
    for (double v : f.ux) umax = std::max(umax, std::abs(v));
    for (double v : f.uy) umax = std::max(umax, std::abs(v));
    report->dt_used = dt;
    report->max_face_speed = umax;
    report->min_cell_value = minv;
    report->mass_drift = std::abs(next.mass() - rho.mass());
  }
  return next;
}

// Advances rho by dt under a state-dependent potential, subdividing into
// stable substeps as needed (the field is rebuilt from the current density
// every substep). Reports the worst per-substep drift and the substep count.
struct AdvanceReport {
  int substeps = 0;
  double max_mass_drift = 0.0;
  double max_face_speed = 0.0;
  double min_cell_value = std::numeric_limits<double>::infinity();
};

template <class FieldFn>
Density advance_density(Density rho, FieldFn&& make_xi, double sign, double dt, double cfl,
                        AdvanceReport* report = nullptr) {
  const Grid g = rho.grid;
  double remaining = dt;
  AdvanceReport rep;
  constexpr int kMaxSubsteps = 2000000;
  while (remaining > 1e-300) {
    const std::vector<double> xi = make_xi(rho);
    StepReport sr;
    double stable, h;
    if (g.dim == 1) {
      const std::vector<double> u = face_velocities(xi, g, sign);
      stable = std::min(cfl_dt(u, g, cfl), 0.9 * sharp_dt(u, g));
      h = std::min(remaining, stable);
      rho = step(rho, u, h, &sr);
    } else {
      const FaceField2D f = face_velocities_2d(xi, g, sign);
      stable = std::min(cfl_dt_2d(f, g, cfl), 0.9 * sharp_dt_2d(f, g));
      h = std::min(remaining, stable);
      rho = step2d(rho, xi, h, sign, &sr);
    }
    remaining -= h;
    ++rep.substeps;
    rep.max_mass_drift = std::max(rep.max_mass_drift, sr.mass_drift);
    rep.max_face_speed = std::max(rep.max_face_speed, sr.max_face_speed);
    rep.min_cell_value = std::min(rep.min_cell_value, sr.min_cell_value);
    if (rep.substeps > kMaxSubsteps)
      throw SolverError("advance_density: substep budget exhausted (velocity blow-up?)");
  }
  if (rep.substeps == 0) {  // dt == 0
    rep.min_cell_value = rho.min_value();
  }
  if (report) *report = rep;
  return rho;
}

}  // namespace driftflow
