#pragma once

#include "driftflow/dynamics.hpp"

namespace driftflow {

// Quadratic transport distance between two 1D densities on one grid, by
// quantile coupling: both piecewise-linear CDFs are inverted at the same
// midpoint quantile nodes, so the result is a genuine metric on grids.
inline double wasserstein2_1d(const Density& a, const Density& b, int quantile_nodes = 1000) {
  if (!(a.grid == b.grid)) throw InvalidArgument("wasserstein2_1d: grid mismatch");
  if (a.grid.dim != 1) throw InvalidArgument("wasserstein2_1d: 1D densities only");
  if (quantile_nodes < 2) throw InvalidArgument("wasserstein2_1d: need at least 2 nodes");
  const Grid& g = a.grid;
  const int n = g.n[0];
  const double dz = g.dz[0];

  auto cdf_edges = [&](const Density& d) {
    std::vector<double> c(static_cast<size_t>(n) + 1, 0.0);
    for (int i = 0; i < n; ++i)
      c[static_cast<size_t>(i) + 1] = c[static_cast<size_t>(i)] + d.values[static_cast<size_t>(i)] * dz;
    return c;
  };
  const std::vector<double> ca = cdf_edges(a), cb = cdf_edges(b);

  auto quantile = [&](const std::vector<double>& c, const Density& d, double u) {
    const double target = u * c[static_cast<size_t>(n)];
    auto it = std::upper_bound(c.begin(), c.end(), target);
    int i = static_cast<int>(it - c.begin()) - 1;  // cell index with c[i] <= target < c[i+1]
    if (i >= n) i = n - 1;
    while (i > 0 && d.values[static_cast<size_t>(i)] == 0.0) --i;
    const double w = d.values[static_cast<size_t>(i)] * dz;
    const double frac = (w > 0.0) ? (target - c[static_cast<size_t>(i)]) / w : 0.0;
    return g.lower[0] + (i + std::min(std::max(frac, 0.0), 1.0)) * dz;
  };

  double acc = 0.0;
  for (int k = 0; k < quantile_nodes; ++k) {
    const double u = (k + 0.5) / quantile_nodes;
    const double d = quantile(ca, a, u) - quantile(cb, b, u);
    acc += d * d;
  }
  return std::sqrt(acc / quantile_nodes);
}

// Product metric on (density, classifier) states.
inline double joint_metric(const Density& rho_a, const Vec& xa, const Density& rho_b,
                           const Vec& xb) {
  const double w = wasserstein2_1d(rho_a, rho_b);
  return std::sqrt(w * w + (xa - xb).norm2());
}

namespace detail {
// |grad xi|^2 per cell by centered differences (one-sided at the boundary).
inline std::vector<double> grad_sq(const std::vector<double>& xi, const Grid& g) {
  std::vector<double> out(static_cast<size_t>(g.size()), 0.0);
  if (g.dim == 1) {
    const int n = g.n[0];
    for (int i = 0; i < n; ++i) {
      double d;
      if (i == 0)
        d = (xi[1] - xi[0]) / g.dz[0];
      else if (i == n - 1)
        d = (xi[static_cast<size_t>(n) - 1] - xi[static_cast<size_t>(n) - 2]) / g.dz[0];
      else
        d = (xi[static_cast<size_t>(i) + 1] - xi[static_cast<size_t>(i) - 1]) / (2.0 * g.dz[0]);
      out[static_cast<size_t>(i)] = d * d;
    }
    return out;
  }
  const int n0 = g.n[0], n1 = g.n[1];
  for (int j = 0; j < n1; ++j)
    for (int i = 0; i < n0; ++i) {
      double dx, dy;
      if (i == 0)
        dx = (xi[static_cast<size_t>(g.flat(1, j))] - xi[static_cast<size_t>(g.flat(0, j))]) / g.dz[0];
      else if (i == n0 - 1)
        dx = (xi[static_cast<size_t>(g.flat(n0 - 1, j))] - xi[static_cast<size_t>(g.flat(n0 - 2, j))]) / g.dz[0];
      else
        dx = (xi[static_cast<size_t>(g.flat(i + 1, j))] - xi[static_cast<size_t>(g.flat(i - 1, j))]) /
             (2.0 * g.dz[0]);
      if (j == 0)
        dy = (xi[static_cast<size_t>(g.flat(i, 1))] - xi[static_cast<size_t>(g.flat(i, 0))]) / g.dz[1];
      else if (j == n1 - 1)
        dy = (xi[static_cast<size_t>(g.flat(i, n1 - 1))] - xi[static_cast<size_t>(g.flat(i, n1 - 2))]) / g.dz[1];
      else
        dy = (xi[static_cast<size_t>(g.flat(i, j + 1))] - xi[static_cast<size_t>(g.flat(i, j - 1))]) /
             (2.0 * g.dz[1]);
      out[static_cast<size_t>(g.flat(i, j))] = dx * dx + dy * dy;
    }
  return out;
}
}  // namespace detail

// Instantaneous dissipation of the regime's energy:
//   int |grad xi|^2 drho  (+ ||grad_x energy||^2 when the regime descends in
//   x at unit rate: the aligned flow, and the instant-population flow whose
//   only mover is x).
inline double dissipation(const Density& rho, const Vec& x, const EnergyModel& m,
                          const Regime& regime) {
  const std::vector<double> xi = first_variation_rho(rho, x, m, regime.variation());
  const std::vector<double> gsq = detail::grad_sq(xi, rho.grid);
  const double dv = rho.grid.cell_volume();
  double acc = 0.0;
  for (int i = 0; i < rho.grid.size(); ++i)
    acc += gsq[static_cast<size_t>(i)] * rho.values[static_cast<size_t>(i)];
  acc *= dv;
  if (regime.kind == Regime::Kind::Aligned || regime.kind == Regime::Kind::CompetitiveFastRho)
    acc += grad_x_energy(rho, x, m).norm2();
  return acc;
}

// Exponential decay rate from the tail of a positive series: least-squares
// slope s of log(values) over the trailing `window` fraction of the time
// range, reported as lambda = -s/2 (energy-to-state convention: a series
// decaying like exp(-2 lambda t) yields lambda).
inline double fit_decay_rate(const std::vector<double>& times, const std::vector<double>& values,
                            double window = 0.5) {
  if (times.size() != values.size()) throw InvalidArgument("fit_decay_rate: length mismatch");
  if (!(window > 0.0 && window <= 1.0)) throw InvalidArgument("fit_decay_rate: window in (0,1]");
  if (times.size() < 2) throw InvalidArgument("fit_decay_rate: need at least 2 samples");
  const double t1 = times.back();
  const double t0 = t1 - window * (t1 - times.front());
  // noise floor is set by the series scale, not the window scale: a window
  // that is already stationary must come out empty instead of fitting noise
  double vmax = 0.0;
  for (const double v : values) vmax = std::max(vmax, v);
  std::vector<double> ts, ls;
  for (size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t0) continue;
    if (!(values[i] > 0.0) || values[i] < 1e-13 * vmax) continue;  // clip float-noise floor
    ts.push_back(times[i]);
    ls.push_back(std::log(values[i]));
  }
  if (ts.size() < 5) throw InvalidArgument("fit_decay_rate: too few usable samples in window");
  double mt = 0.0, ml = 0.0;
  for (size_t i = 0; i < ts.size(); ++i) {
    mt += ts[i];
    ml += ls[i];
  }
  mt /= ts.size();
  ml /= ls.size();
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < ts.size(); ++i) {
    num += (ts[i] - mt) * (ls[i] - ml);
    den += (ts[i] - mt) * (ts[i] - mt);
  }
  if (den == 0.0) throw InvalidArgument("fit_decay_rate: degenerate time window");
  return -0.5 * num / den;
}

// Sup-norm stationarity defect: largest |face difference of xi| / dz over
// faces between cells carrying mass (>= occupancy floor), plus the
// classifier gradient norm when the regime moves x.
inline double steady_state_residual(const Density& rho, const Vec& x, const EnergyModel& m,
                                    const Regime& regime, double occupancy = 1e-8) {
  const std::vector<double> xi = first_variation_rho(rho, x, m, regime.variation());
  const Grid& g = rho.grid;
  double worst = 0.0;
  auto occupied = [&](int idx) { return rho.values[static_cast<size_t>(idx)] >= occupancy; };
  if (g.dim == 1) {
    for (int i = 0; i + 1 < g.n[0]; ++i)
      if (occupied(i) && occupied(i + 1))
        worst = std::max(worst,
                         std::abs(xi[static_cast<size_t>(i) + 1] - xi[static_cast<size_t>(i)]) / g.dz[0]);
  } else {
    for (int j = 0; j < g.n[1]; ++j)
      for (int i = 0; i + 1 < g.n[0]; ++i)
        if (occupied(g.flat(i, j)) && occupied(g.flat(i + 1, j)))
          worst = std::max(worst, std::abs(xi[static_cast<size_t>(g.flat(i + 1, j))] -
                                           xi[static_cast<size_t>(g.flat(i, j))]) / g.dz[0]);
    for (int j = 0; j + 1 < g.n[1]; ++j)
      for (int i = 0; i < g.n[0]; ++i)
        if (occupied(g.flat(i, j)) && occupied(g.flat(i, j + 1)))
          worst = std::max(worst, std::abs(xi[static_cast<size_t>(g.flat(i, j + 1))] -
                                           xi[static_cast<size_t>(g.flat(i, j))]) / g.dz[1]);
  }
  if (regime.evolves_x()) worst = std::max(worst, grad_x_energy(rho, x, m).norm());
  return worst;
}

// Number of well-separated modes: strict local maxima above
// prominence*max(rho), merged whenever the valley between two surviving
// peaks fails to dip below (1 - prominence) times the smaller peak.
inline int count_modes(const Density& rho, double prominence = 0.2) {
  if (rho.grid.dim != 1) throw InvalidArgument("count_modes: 1D densities only");
  if (!(prominence > 0.0 && prominence < 1.0))
    throw InvalidArgument("count_modes: prominence in (0,1)");
  const int n = rho.grid.n[0];
  const std::vector<double>& v = rho.values;
  double vmax = 0.0;
  for (double a : v) vmax = std::max(vmax, a);
  if (vmax == 0.0) return 0;

  std::vector<int> peaks;
  for (int i = 0; i < n; ++i) {
    // treat plateaus as one candidate anchored at their left edge
    int l = i;
    while (i + 1 < n && v[static_cast<size_t>(i) + 1] == v[static_cast<size_t>(i)]) ++i;
    const double left = (l == 0) ? -1.0 : v[static_cast<size_t>(l) - 1];
    const double right = (i == n - 1) ? -1.0 : v[static_cast<size_t>(i) + 1];
    if (v[static_cast<size_t>(l)] > left && v[static_cast<size_t>(l)] > right &&
        v[static_cast<size_t>(l)] > prominence * vmax)
      peaks.push_back(l);
  }

  bool merged = true;
  while (merged && peaks.size() > 1) {
    merged = false;
    for (size_t k = 0; k + 1 < peaks.size(); ++k) {
      double valley = std::numeric_limits<double>::infinity();
      for (int i = peaks[k]; i <= peaks[k + 1]; ++i)
        valley = std::min(valley, v[static_cast<size_t>(i)]);
      const double smaller = std::min(v[static_cast<size_t>(peaks[k])], v[static_cast<size_t>(peaks[k + 1])]);
      if (valley > (1.0 - prominence) * smaller) {
        // not separated: drop the lower of the two
        peaks.erase(peaks.begin() + static_cast<long>(
                        v[static_cast<size_t>(peaks[k])] >= v[static_cast<size_t>(peaks[k + 1])] ? k + 1 : k));
        merged = true;
        break;
      }
    }
  }
  return static_cast<int>(peaks.size());
}

// Convergence-rate constant promised by the theory for each regime; NaN when
// no guarantee applies (coupled same-rate play, naive, sampled).
// lambda1 = lambda2 = 0 for the logistic costs, so:
//   aligned:   min(beta, alpha*lambda_tilde)
//   fast-x:    alpha*lambda_tilde - sup hess_z f1   (may be <= 0: unmet)
//   fast-rho:  beta
inline double rate_constant(const Regime& regime, const EnergyModel& m) {
  const double lt = m.ref.lambda_tilde();
  switch (regime.kind) {
    case Regime::Kind::Aligned:
      return std::min(m.beta, m.alpha * lt);
    case Regime::Kind::CompetitiveFastX: {
      if (m.cost.kind == LogisticCost::Kind::OneD)
        return m.alpha * lt - 0.25 * m.cost.slope * m.cost.slope;
      if (m.cost.kind == LogisticCost::Kind::Zero) return m.alpha * lt;
      return std::numeric_limits<double>::quiet_NaN();  // 2D sup-curvature unbounded in x
    }
    case Regime::Kind::CompetitiveFastRho:
      return m.beta;
    default:
      return std::numeric_limits<double>::quiet_NaN();
  }
}

// Per-sample functional-inequality audit of a trajectory against its own
// terminal state (used as the equilibrium proxy).
struct InequalityRow {
  double t = 0.0;
  double rel_energy = 0.0;   // |G - G_terminal|, oriented to be >= 0
  double dissipation = 0.0;
  double metric = 0.0;       // joint distance to the terminal state
  double logsob_margin = 0.0;     // D - 2 lambda dG        (>= -slack wanted)
  double talagrand_margin = 0.0;  // (2/lambda) dG - metric^2
  double hwi_margin = 0.0;        // metric sqrt(D) - (lambda/2) metric^2 - dG
};

struct InequalityReport {
  double lambda = 0.0;
  bool applicable = false;  // false: no positive rate constant for the regime
  std::vector<InequalityRow> rows;
  bool logsob_ok = true;
  bool talagrand_ok = true;
  bool hwi_ok = true;
  bool energy_monotone = true;
  bool balance_ok = true;  // -dG/dt matches dissipation after transients
  double fitted_rate = std::numeric_limits<double>::quiet_NaN();

  bool all_ok() const {
    return !applicable || (logsob_ok && talagrand_ok && hwi_ok && energy_monotone && balance_ok);
  }
};

// slack policy shared by the three inequalities: 5% of the comparison scale
// plus a 1e-6 absolute floor
inline bool within_slack(double margin, double scale) {
  return margin >= -(0.05 * std::abs(scale) + 1e-6);
}

inline InequalityReport inequality_report(const Trajectory& traj, const EnergyModel& m,
                                          const Regime& regime) {
  if (traj.samples.empty()) throw InvalidArgument("inequality_report: empty trajectory");
  InequalityReport rep;
  rep.lambda = rate_constant(regime, m);
  rep.applicable = std::isfinite(rep.lambda) && rep.lambda > 0.0;

  const size_t last = traj.samples.size() - 1;
  const double g_term = traj.samples[last].energy;
  // the aligned flow minimizes; the fast-x flow maximizes its recorded energy
  const double orient = (regime.kind == Regime::Kind::CompetitiveFastX) ? -1.0 : 1.0;
  const bool metric_ok = traj.densities.front().grid.dim == 1;

  for (size_t i = 0; i < traj.samples.size(); ++i) {
    InequalityRow row;
    row.t = traj.samples[i].t;
    row.rel_energy = orient * (traj.samples[i].energy - g_term);
    row.dissipation = dissipation(traj.densities[i], traj.samples[i].x, m, regime);
    row.metric = metric_ok ? joint_metric(traj.densities[i], traj.samples[i].x,
                                          traj.densities[last], traj.samples[last].x)
                           : 0.0;
    if (rep.applicable) {
      const double lam = rep.lambda;
      row.logsob_margin = row.dissipation - 2.0 * lam * row.rel_energy;
      row.talagrand_margin = (2.0 / lam) * row.rel_energy - row.metric * row.metric;
      row.hwi_margin = row.metric * std::sqrt(std::max(row.dissipation, 0.0)) -
                       0.5 * lam * row.metric * row.metric - row.rel_energy;
      if (!within_slack(row.logsob_margin, 2.0 * lam * row.rel_energy)) rep.logsob_ok = false;
      if (metric_ok && !within_slack(row.talagrand_margin, (2.0 / lam) * row.rel_energy))
        rep.talagrand_ok = false;
      if (metric_ok && !within_slack(row.hwi_margin, row.rel_energy)) rep.hwi_ok = false;
    }
    rep.rows.push_back(row);
  }

  // energy monotone in its oriented direction, small per-sample slack
  for (size_t i = 0; i + 1 < traj.samples.size(); ++i) {
    const double drop = orient * (traj.samples[i].energy - traj.samples[i + 1].energy);
    if (drop < -1e-6) rep.energy_monotone = false;
  }

  // energy balance -dG/dt ~ dissipation, centered differences, skipping the
  // first 5% of samples and any pair already at the noise floor
  const size_t skip = traj.samples.size() / 20;
  for (size_t i = std::max<size_t>(skip, 1); i + 1 < traj.samples.size(); ++i) {
    const double dt2 = traj.samples[i + 1].t - traj.samples[i - 1].t;
    if (dt2 <= 0.0) continue;
    const double slope = orient * (traj.samples[i + 1].energy - traj.samples[i - 1].energy) / dt2;
    const double d = rep.rows[i].dissipation;
    if (std::abs(d) < 1e-9 && std::abs(slope) < 1e-9) continue;
    if (std::abs(-slope - d) > 0.10 * std::max(std::abs(d), std::abs(slope)) + 1e-9)
      rep.balance_ok = false;
  }

  // fitted decay of the oriented relative energy over the trailing half
  std::vector<double> ts, es;
  for (size_t i = 0; i < traj.samples.size(); ++i) {
    ts.push_back(traj.samples[i].t);
    es.push_back(std::max(rep.rows[i].rel_energy, 0.0));
  }
  try {
    rep.fitted_rate = fit_decay_rate(ts, es, 0.5);
  } catch (const InvalidArgument&) {
    // stationary or too-short series: leave NaN
  }
  return rep;
}

}  // namespace driftflow
