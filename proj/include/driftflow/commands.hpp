#pragma once

#include <iostream>

#include "driftflow/config.hpp"
#include "driftflow/diagnostics.hpp"

namespace driftflow {

// Exit codes shared by all commands.
enum ExitCode : int { kOk = 0, kConfigError = 1, kSolverError = 2, kIoError = 3 };

namespace detail {

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir);
}

inline std::string snapshot_name(const char* prefix, long step) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_t%06ld.csv", prefix, step);
  return buf;
}

inline void write_energy_csv(const std::string& path, const Trajectory& traj,
                             const EnergyModel& m, const Regime& regime) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  const int xdim = traj.samples.front().x.dim;
  out << "t,energy,rel_energy,dissipation," << (xdim == 1 ? "x" : "x1,x2") << ",modes\n";
  const double g_term = traj.samples.back().energy;
  for (size_t i = 0; i < traj.samples.size(); ++i) {
    const TrajectorySample& s = traj.samples[i];
    const double d = dissipation(traj.densities[i], s.x, m, regime);
    const int modes = (traj.densities[i].grid.dim == 1) ? count_modes(traj.densities[i]) : 0;
    out << fmt17(s.t) << ',' << fmt17(s.energy) << ',' << fmt17(s.energy - g_term) << ','
        << fmt17(d) << ',' << fmt17(s.x[0]);
    if (xdim == 2) out << ',' << fmt17(s.x[1]);
    out << ',' << modes << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

inline double classifier_loss(const Density& rho, const Vec& x, const EnergyModel& m) {
  return integrate_cost(rho, x, m.cost, true) + integrate_cost(m.rho_bar, x, m.cost, false);
}

inline double population_loss(const Density& rho, const EnergyModel& m, const Vec& x) {
  return -integrate_cost(rho, x, m.cost, true) + m.alpha * kl(rho, m.rho_tilde) +
         interaction_energy(m.kernel, rho);
}

}  // namespace detail

// Integrates one scenario and writes density snapshots, the energy series,
// and a human-readable summary into the output directory.
inline int cmd_run(const std::string& cfg_path, const std::string& out_override = "",
                   int stride_override = 0, std::ostream& log = std::cout) {
  ScenarioConfig cfg;
  BuiltScenario sc;
  try {
    cfg = load_config(cfg_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (stride_override > 0) cfg.sample_stride = stride_override;
    sc = build_scenario(cfg);
  } catch (const IoError& e) {
    log << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    log << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  Trajectory traj;
  try {
    traj = run(sc.model, sc.params);
  } catch (const std::exception& e) {
    log << "solver error: " << e.what() << "\n";
    return kSolverError;
  }

  try {
    detail::ensure_dir(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    for (size_t i = 0; i < traj.samples.size(); ++i) {
      const bool keep = (i % static_cast<size_t>(cfg.snapshot_every) == 0) ||
                        (i + 1 == traj.samples.size());
      if (!keep) continue;
      const long step = traj.samples[i].step;
      write_density_csv(traj.densities[i], (dir / detail::snapshot_name("density", step)).string());
      if (!traj.tau_densities.empty())
        write_density_csv(traj.tau_densities[i], (dir / detail::snapshot_name("tau", step)).string());
    }
    detail::write_energy_csv((dir / "energy.csv").string(), traj, sc.model, sc.params.regime);

    std::ofstream sum(dir / "summary.txt");
    if (!sum) throw IoError("cannot open summary.txt");
    const TrajectorySample& fin = traj.samples.back();
    sum << "scenario: " << cfg_path << "\n";
    sum << "regime: " << cfg.regime_kind << "\n";
    sum << "steps: " << fin.step << "  t_final: " << detail::fmt17(fin.t) << "\n";
    sum << "final_energy: " << detail::fmt17(fin.energy) << "\n";
    sum << "final_x: " << detail::vec_str(fin.x) << "\n";
    sum << "final_mass: " << detail::fmt17(fin.mass) << "\n";
    sum << "min_cell_value: " << detail::fmt17(fin.min_cell) << "\n";
    double worst_drift = 0.0;
    for (const TrajectorySample& s : traj.samples) worst_drift = std::max(worst_drift, s.max_mass_drift);
    sum << "max_step_mass_drift: " << detail::fmt17(worst_drift) << "\n";
    const double resid = steady_state_residual(traj.densities.back(), fin.x, sc.model, sc.params.regime);
    sum << "steady_state_residual: " << detail::fmt17(resid) << "\n";
    if (traj.densities.back().grid.dim == 1) {
      sum << "modes_initial: " << count_modes(traj.densities.front()) << "\n";
      sum << "modes_final: " << count_modes(traj.densities.back()) << "\n";
    }
    const double lam = rate_constant(sc.params.regime, sc.model);
    if (std::isfinite(lam)) sum << "rate_constant: " << detail::fmt17(lam) << "\n";
    std::vector<double> ts, es;
    const double g_term = traj.samples.back().energy;
    for (const TrajectorySample& s : traj.samples) {
      ts.push_back(s.t);
      es.push_back(std::abs(s.energy - g_term));
    }
    try {
      sum << "fitted_rate: " << detail::fmt17(fit_decay_rate(ts, es, 0.5)) << "\n";
    } catch (const InvalidArgument&) {
      sum << "fitted_rate: n/a\n";
    }
    if (!sum) throw IoError("write failed: summary.txt");
    log << "wrote " << traj.samples.size() << " samples to " << cfg.out_dir << "\n";
  } catch (const IoError& e) {
    log << "io error: " << e.what() << "\n";
    return kIoError;
  }
  return kOk;
}

// Integrates one scenario and audits it against the convergence theory:
// functional inequalities sample-by-sample, energy monotonicity, the
// dissipation balance, and the fitted decay rate. Writes
// inequality_report.csv; exit 0 when every applicable check passes.
inline int cmd_check(const std::string& cfg_path, const std::string& out_override = "",
                     std::ostream& log = std::cout) {
  ScenarioConfig cfg;
  BuiltScenario sc;
  try {
    cfg = load_config(cfg_path);
    if (!out_override.empty()) cfg.out_dir = out_override;
    sc = build_scenario(cfg);
  } catch (const IoError& e) {
    log << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    log << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  Trajectory traj;
  InequalityReport rep;
  try {
    traj = run(sc.model, sc.params);
    rep = inequality_report(traj, sc.model, sc.params.regime);
  } catch (const std::exception& e) {
    log << "solver error: " << e.what() << "\n";
    return kSolverError;
  }

  try {
    detail::ensure_dir(cfg.out_dir);
    const std::filesystem::path dir(cfg.out_dir);
    std::ofstream out(dir / "inequality_report.csv");
    if (!out) throw IoError("cannot open inequality_report.csv");
    out << "t,rel_energy,dissipation,metric,logsob_margin,talagrand_margin,hwi_margin\n";
    for (const InequalityRow& r : rep.rows)
      out << detail::fmt17(r.t) << ',' << detail::fmt17(r.rel_energy) << ','
          << detail::fmt17(r.dissipation) << ',' << detail::fmt17(r.metric) << ','
          << detail::fmt17(r.logsob_margin) << ',' << detail::fmt17(r.talagrand_margin) << ','
          << detail::fmt17(r.hwi_margin) << '\n';
    if (!out) throw IoError("write failed: inequality_report.csv");
  } catch (const IoError& e) {
    log << "io error: " << e.what() << "\n";
    return kIoError;
  }

  auto verdict = [&](const char* name, bool ok) {
    log << name << ": " << (ok ? "pass" : "FAIL") << "\n";
  };
  if (!rep.applicable) {
    if (std::isfinite(rep.lambda) && rep.lambda <= 0.0)
      log << "rate checks: not applicable (hypothesis unmet: rate constant "
          << detail::fmt17(rep.lambda) << " <= 0; empirical decay recorded)\n";
    else
      log << "rate checks: not applicable (no guaranteed rate for regime " << cfg.regime_kind
          << ")\n";
    if (std::isfinite(rep.fitted_rate))
      log << "fitted_rate: " << detail::fmt17(rep.fitted_rate) << "\n";
    log << "verdict: pass (nothing applicable failed)\n";
    return kOk;
  }
  log << "rate constant: " << detail::fmt17(rep.lambda) << "\n";
  verdict("log-sobolev", rep.logsob_ok);
  verdict("talagrand", rep.talagrand_ok);
  verdict("hwi", rep.hwi_ok);
  verdict("energy monotone", rep.energy_monotone);
  verdict("dissipation balance", rep.balance_ok);
  bool rate_ok = true;
  if (std::isfinite(rep.fitted_rate)) {
    rate_ok = rep.fitted_rate >= 0.8 * rep.lambda;
    log << "fitted_rate: " << detail::fmt17(rep.fitted_rate) << " (need >= "
        << detail::fmt17(0.8 * rep.lambda) << ")\n";
    verdict("decay rate", rate_ok);
  } else {
    log << "decay rate: not fitted (stationary series)\n";
  }
  const bool ok = rep.all_ok() && rate_ok;
  log << "verdict: " << (ok ? "pass" : "FAIL") << "\n";
  return ok ? kOk : kSolverError;
}

// Integrates two scenarios on the same grid and cost, and writes the paired
// classifier/population loss series plus a final-state comparison.
inline int cmd_compare(const std::string& cfg_a, const std::string& cfg_b,
                       const std::string& out_override = "", std::ostream& log = std::cout) {
  ScenarioConfig ca, cb;
  BuiltScenario sa, sb;
  try {
    ca = load_config(cfg_a);
    cb = load_config(cfg_b);
    if (!out_override.empty()) ca.out_dir = out_override;
    sa = build_scenario(ca);
    sb = build_scenario(cb);
    if (!(sa.grid == sb.grid)) throw InvalidArgument("compare: scenarios use different grids");
    if (ca.t_final != cb.t_final || ca.dt != cb.dt || ca.sample_stride != cb.sample_stride)
      throw InvalidArgument("compare: scenarios must share t_final, dt and sample_stride");
  } catch (const IoError& e) {
    log << "error: " << e.what() << "\n";
    return kIoError;
  } catch (const std::exception& e) {
    log << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  Trajectory ta, tb;
  try {
    ta = run(sa.model, sa.params);
    tb = run(sb.model, sb.params);
  } catch (const std::exception& e) {
    log << "solver error: " << e.what() << "\n";
    return kSolverError;
  }

  try {
    detail::ensure_dir(ca.out_dir);
    const std::filesystem::path dir(ca.out_dir);
    std::ofstream out(dir / "losses.csv");
    if (!out) throw IoError("cannot open losses.csv");
    out << "t,classifier_loss_a,classifier_loss_b,population_loss_a,population_loss_b\n";
    const size_t nrows = std::min(ta.samples.size(), tb.samples.size());
    for (size_t i = 0; i < nrows; ++i) {
      out << detail::fmt17(ta.samples[i].t) << ','
          << detail::fmt17(detail::classifier_loss(ta.densities[i], ta.samples[i].x, sa.model)) << ','
          << detail::fmt17(detail::classifier_loss(tb.densities[i], tb.samples[i].x, sb.model)) << ','
          << detail::fmt17(detail::population_loss(ta.densities[i], sa.model, ta.samples[i].x)) << ','
          << detail::fmt17(detail::population_loss(tb.densities[i], sb.model, tb.samples[i].x)) << '\n';
    }
    if (!out) throw IoError("write failed: losses.csv");

    std::ofstream sum(dir / "compare.txt");
    if (!sum) throw IoError("cannot open compare.txt");
    auto report_pair = [&](const char* label, double va, double vb) {
      sum << label << ": a=" << detail::fmt17(va) << " b=" << detail::fmt17(vb) << "\n";
      log << label << ": a=" << detail::fmt17(va) << " b=" << detail::fmt17(vb) << "\n";
    };
    report_pair("initial_classifier_loss",
                detail::classifier_loss(ta.densities.front(), ta.samples.front().x, sa.model),
                detail::classifier_loss(tb.densities.front(), tb.samples.front().x, sb.model));
    report_pair("final_classifier_loss",
                detail::classifier_loss(ta.densities.back(), ta.samples.back().x, sa.model),
                detail::classifier_loss(tb.densities.back(), tb.samples.back().x, sb.model));
    report_pair("initial_population_loss",
                detail::population_loss(ta.densities.front(), sa.model, ta.samples.front().x),
                detail::population_loss(tb.densities.front(), sb.model, tb.samples.front().x));
    report_pair("final_population_loss",
                detail::population_loss(ta.densities.back(), sa.model, ta.samples.back().x),
                detail::population_loss(tb.densities.back(), sb.model, tb.samples.back().x));
    if (sa.grid.dim == 1) {
      const double w2 = wasserstein2_1d(ta.densities.back(), tb.densities.back());
      sum << "final_density_w2: " << detail::fmt17(w2) << "\n";
      log << "final_density_w2: " << detail::fmt17(w2) << "\n";
    }
    const double dx = (ta.samples.back().x - tb.samples.back().x).norm();
    sum << "final_x_distance: " << detail::fmt17(dx) << "\n";
    log << "final_x_distance: " << detail::fmt17(dx) << "\n";
    if (!sum) throw IoError("write failed: compare.txt");
  } catch (const IoError& e) {
    log << "io error: " << e.what() << "\n";
    return kIoError;
  }
  return kOk;
}

}  // namespace driftflow
