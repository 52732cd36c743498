#pragma once

#include "driftflow/fv_solver.hpp"
#include "driftflow/model.hpp"

namespace driftflow {

// Which coupled system is being integrated.
//   Aligned             joint descent of the shared energy
//   CompetitiveCoupled  population ascends, classifier descends; tau scales
//                       the population velocity relative to the classifier
//   CompetitiveFastX    classifier best-responds every step
//   CompetitiveFastRho  population best-responds (Gibbs) every step
//   NaiveClassifier     classifier pinned at fixed_x, population competitive
//   SampledGradient     competitive, classifier uses Monte Carlo gradients
//   TwoPopulations      strategic rho (competitive) + cooperating tau
//                       (aligned) sharing one classifier
struct Regime {
  enum class Kind {
    Aligned,
    CompetitiveCoupled,
    CompetitiveFastX,
    CompetitiveFastRho,
    NaiveClassifier,
    SampledGradient,
    TwoPopulations
  };
  Kind kind = Kind::Aligned;
  double tau = 1.0;
  Vec fixed_x;
  int sample_count = 0;
  uint64_t sample_seed = 0;
  bool sample_best_respond = false;

  bool competitive() const { return kind != Kind::Aligned; }
  bool evolves_x() const {
    return kind == Kind::Aligned || kind == Kind::CompetitiveCoupled ||
           kind == Kind::CompetitiveFastRho || kind == Kind::SampledGradient ||
           kind == Kind::TwoPopulations;
  }
  VariationKind variation() const {
    return kind == Kind::Aligned ? VariationKind::Aligned : VariationKind::Competitive;
  }
  // transport sign: aligned descends its field, competitive ascends
  double transport_sign() const { return kind == Kind::Aligned ? 1.0 : -1.0; }
};

namespace detail {
// Constants a1, a2 with x.grad_x(f_i) >= -a_i on the box, by dense scan of
// the relevant one-variable profiles. Loose is fine: they only feed the
// best-response norm guard.
inline double response_bound_sum(const LogisticCost& cost, const Grid& g) {
  switch (cost.kind) {
    case LogisticCost::Kind::Zero:
      return 0.0;
    case LogisticCost::Kind::OneD: {
      const double chi = cost.slope * g.upper[0];
      const double clo = cost.slope * g.lower[0];
      double a1 = 0.0, a2 = 0.0;
      for (double x = 0.0; x <= chi + 50.0; x += 0.05)
        a1 = std::max(a1, x * sigmoid(chi - x));
      for (double x = clo - 50.0; x <= 0.0; x += 0.05)
        a2 = std::max(a2, -x * sigmoid(x - clo));
      return a1 + a2;
    }
    default: {  // TwoD: -x.grad f1 = -u sigma'(u)/2 with u = x.z
      double peak = 0.0;
      for (double u = 0.0; u <= 12.0; u += 1e-3) peak = std::max(peak, u * sigmoid_deriv(u));
      return peak;  // a1 = a2 = peak/2
    }
  }
}
}  // namespace detail

// Classifier best response argmin_x of the competitive energy at fixed rho:
// damped Newton on grad_x_energy with a PSD safeguard (the 2D cost Hessians
// are indefinite). Asserts the a-priori norm bound on the result.
inline Vec best_response_x(const Density& rho, const EnergyModel& m, double tol = 1e-10,
                           int max_iter = 100) {
  if (!(tol > 0.0)) throw InvalidArgument("best_response_x: tol must be positive");
  Vec x = m.x0;
  Vec g = grad_x_energy(rho, x, m);
  for (int it = 0; it < max_iter; ++it) {
    if (g.norm() <= tol) break;
    Mat q = response_matrix(rho, x, m);
    const double floor = 0.5 * m.beta;
    const double me = q.min_eig();
    if (me < floor) {
      Mat bump = Mat::identity(q.dim, floor - me);
      q += bump;
    }
    const Vec p = q.solve(g);
    double t = 1.0;
    bool accepted = false;
    while (t >= std::pow(2.0, -30)) {
      const Vec xt = x - t * p;
      const Vec gt = grad_x_energy(rho, xt, m);
      if (gt.norm() <= tol || gt.norm() < g.norm() * (1.0 - 0.25 * t)) {
        x = xt;
        g = gt;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) throw SolverError("best_response_x: line search stalled");
  }
  if (g.norm() > tol) throw SolverError("best_response_x: no convergence");
  const double bound =
      m.x0.norm2() + 2.0 * detail::response_bound_sum(m.cost, rho.grid) / m.beta;
  if (x.norm2() > bound * (1.0 + 1e-9) + 1e-6)
    throw SolverError("best_response_x: result violates the a-priori norm bound");
  return x;
}

struct GibbsResult {
  Density rho;
  double residual = 0.0;  // L1 distance between the output and its Gibbs image
  int iters = 0;
};

// Population best response argmax_rho of the competitive energy at fixed x:
// damped fixed-point iteration on the Gibbs map
//   T(rho) = normalize( rho_tilde * exp((f1(.,x) - W*rho)/alpha) ).
// Stops once the undamped map residual ||T(rho)-rho||_L1 <= tol, which makes
// the returned state an Euler-Lagrange solution to the same order.
inline GibbsResult best_response_rho(const Vec& x, const EnergyModel& m, double tol = 1e-9,
                                     int max_iter = 500, double damping = 0.5,
                                     const Density* warm_start = nullptr) {
  if (!(tol > 0.0)) throw InvalidArgument("best_response_rho: tol must be positive");
  if (!(damping > 0.0 && damping <= 1.0))
    throw InvalidArgument("best_response_rho: damping must be in (0,1]");
  const Grid& g = m.rho_tilde.grid;
  const double dv = g.cell_volume();
  Density rho = warm_start ? *warm_start : m.rho_tilde;
  if (!(rho.grid == g)) throw InvalidArgument("best_response_rho: warm start grid mismatch");

  std::vector<double> logf1(static_cast<size_t>(g.size()));
  for (int i = 0; i < g.size(); ++i) {
    const Vec z = g.point(i);
    logf1[static_cast<size_t>(i)] = m.ref.log_pdf(z) + m.cost.f1(z, x) / m.alpha;
  }

  std::vector<double> logt(static_cast<size_t>(g.size()));
  for (int it = 1; it <= max_iter; ++it) {
    const std::vector<double> w = convolve(m.kernel, rho);
    double lmax = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < g.size(); ++i) {
      logt[static_cast<size_t>(i)] = logf1[static_cast<size_t>(i)] - w[static_cast<size_t>(i)] / m.alpha;
      lmax = std::max(lmax, logt[static_cast<size_t>(i)]);
    }
    double norm = 0.0;
    std::vector<double> t(static_cast<size_t>(g.size()));
    for (int i = 0; i < g.size(); ++i) {
      t[static_cast<size_t>(i)] = std::exp(logt[static_cast<size_t>(i)] - lmax);
      norm += t[static_cast<size_t>(i)];
    }
    norm *= dv;
    double resid = 0.0;
    for (int i = 0; i < g.size(); ++i) {
      t[static_cast<size_t>(i)] /= norm;
      resid += std::abs(t[static_cast<size_t>(i)] - rho.values[static_cast<size_t>(i)]);
    }
    resid *= dv;
    std::vector<double> mixed(static_cast<size_t>(g.size()));
    for (int i = 0; i < g.size(); ++i)
      mixed[static_cast<size_t>(i)] = (1.0 - damping) * rho.values[static_cast<size_t>(i)] +
                                      damping * t[static_cast<size_t>(i)];
    rho = Density::from_values(g, std::move(mixed));
    if (resid <= tol) return GibbsResult{std::move(rho), resid, it};
  }
  throw SolverError("best_response_rho: fixed point iteration did not converge");
}

// Monte Carlo estimate of grad_x_energy from sample_count draws of each
// population. Deterministic in (seed); the two populations use decoupled
// streams derived from it.
inline Vec sampled_gradient(const Density& rho, const Density& rho_bar, const Vec& x,
                            const EnergyModel& m, int sample_count, uint64_t seed) {
  if (sample_count <= 0) throw InvalidArgument("sampled_gradient: sample count must be positive");
  const std::vector<Vec> zs = sample(rho, sample_count, Rng::mix(seed, 1));
  const std::vector<Vec> zbs = sample(rho_bar, sample_count, Rng::mix(seed, 2));
  Vec acc = Vec::zero(m.cost.xdim());
  for (const Vec& z : zs) acc += m.cost.grad_x_f1(z, x);
  for (const Vec& zb : zbs) acc += m.cost.grad_x_f2(zb, x);
  acc *= 1.0 / sample_count;
  return acc + m.beta * (x - m.x0);
}

// Best response of the classifier to sampled populations (the Monte Carlo
// analogue of best_response_x, used by the best-responding sampled regime).
inline Vec best_response_x_sampled(const std::vector<Vec>& zs, const std::vector<Vec>& zbs,
                                   const EnergyModel& m, double tol = 1e-10, int max_iter = 100) {
  const double inv_n = 1.0 / static_cast<double>(zs.size());
  auto grad = [&](const Vec& x) {
    Vec acc = Vec::zero(m.cost.xdim());
    for (const Vec& z : zs) acc += m.cost.grad_x_f1(z, x);
    for (const Vec& zb : zbs) acc += m.cost.grad_x_f2(zb, x);
    acc *= inv_n;
    return acc + m.beta * (x - m.x0);
  };
  Vec x = m.x0;
  Vec g = grad(x);
  for (int it = 0; it < max_iter; ++it) {
    if (g.norm() <= tol) return x;
    Mat q = Mat::identity(m.cost.xdim(), m.beta);
    for (const Vec& z : zs) {
      Mat h = m.cost.hess_x_f1(z, x);
      h *= inv_n;
      q += h;
    }
    for (const Vec& zb : zbs) {
      Mat h = m.cost.hess_x_f2(zb, x);
      h *= inv_n;
      q += h;
    }
    const double floor = 0.5 * m.beta;
    if (q.min_eig() < floor) {
      Mat bump = Mat::identity(q.dim, floor - q.min_eig());
      q += bump;
    }
    const Vec p = q.solve(g);
    double t = 1.0;
    bool accepted = false;
    while (t >= std::pow(2.0, -30)) {
      const Vec xt = x - t * p;
      const Vec gt = grad(xt);
      if (gt.norm() <= tol || gt.norm() < g.norm() * (1.0 - 0.25 * t)) {
        x = xt;
        g = gt;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) throw SolverError("best_response_x_sampled: line search stalled");
  }
  throw SolverError("best_response_x_sampled: no convergence");
}

// Second population for the two-population system.
struct TwoPopulationSetup {
  ReferenceDistribution tau_ref;
  Density tau_tilde;
};

struct CoupledState {
  Density rho;
  Vec x;
  std::optional<Density> tau;  // cooperating population, two-population runs
};

struct StepInfo {
  int substeps = 0;
  double max_mass_drift = 0.0;
  double min_cell_value = 0.0;
};

struct SolverOptions {
  double cfl = 0.45;
  double newton_tol = 1e-10;
  double gibbs_tol = 1e-9;
  int gibbs_max_iter = 500;
  double gibbs_damping = 0.5;
};

// One explicit step of the coupled system (both species from the same
// time level; the transport substep loop refreshes its own field).
inline StepInfo step_coupled(CoupledState& state, const EnergyModel& m, const Regime& regime,
                             double dt, const SolverOptions& opt = {}, long step_index = 0,
                             const TwoPopulationSetup* two_pop = nullptr) {
  if (!(dt > 0.0)) throw InvalidArgument("step_coupled: dt must be positive");
  StepInfo info;
  const Regime::Kind k = regime.kind;

  if (k == Regime::Kind::TwoPopulations) {
    if (!state.tau || !two_pop) throw InvalidArgument("step_coupled: two-population state missing");
    const Vec g = grad_x_energy(state.rho, state.x, m, &*state.tau);
    const Vec x_now = state.x;
    AdvanceReport arho, atau;
    state.rho = advance_density(
        state.rho,
        [&](const Density& r) { return first_variation_rho(r, x_now, m, VariationKind::Competitive); },
        -1.0, dt, opt.cfl, &arho);
    const EnergyModel& mm = m;
    state.tau = advance_density(
        *state.tau,
        [&](const Density& t) {
          std::vector<double> field = convolve(mm.kernel, t);
          for (int i = 0; i < t.grid.size(); ++i) {
            const Vec z = t.grid.point(i);
            const double logratio = std::log(std::max(t.values[static_cast<size_t>(i)], kMassFloor)) -
                                    two_pop->tau_ref.log_pdf(z);
            field[static_cast<size_t>(i)] += mm.cost.f2(z, x_now) + mm.alpha * logratio;
          }
          return field;
        },
        1.0, dt, opt.cfl, &atau);
    state.x = x_now - dt * g;
    info.substeps = arho.substeps + atau.substeps;
    info.max_mass_drift = std::max(arho.max_mass_drift, atau.max_mass_drift);
    info.min_cell_value = std::min(arho.min_cell_value, atau.min_cell_value);
    return info;
  }

  if (k == Regime::Kind::CompetitiveFastX)
    state.x = best_response_x(state.rho, m, opt.newton_tol);
  if (k == Regime::Kind::CompetitiveFastRho) {
    GibbsResult br = best_response_rho(state.x, m, opt.gibbs_tol, opt.gibbs_max_iter,
                                       opt.gibbs_damping, &state.rho);
    state.rho = std::move(br.rho);
  }

  // classifier update decided from the pre-step density
  Vec x_next = state.x;
  switch (k) {
    case Regime::Kind::Aligned:
    case Regime::Kind::CompetitiveCoupled:
    case Regime::Kind::CompetitiveFastRho:
      x_next = state.x - dt * grad_x_energy(state.rho, state.x, m);
      break;
    case Regime::Kind::SampledGradient: {
      const uint64_t step_seed = Rng::mix(regime.sample_seed, static_cast<uint64_t>(step_index));
      if (regime.sample_best_respond) {
        const std::vector<Vec> zs = sample(state.rho, regime.sample_count, Rng::mix(step_seed, 1));
        const std::vector<Vec> zbs = sample(m.rho_bar, regime.sample_count, Rng::mix(step_seed, 2));
        x_next = best_response_x_sampled(zs, zbs, m, opt.newton_tol);
      } else {
        x_next = state.x - dt * sampled_gradient(state.rho, m.rho_bar, state.x, m,
                                                 regime.sample_count, step_seed);
      }
      break;
    }
    default:
      break;  // FastX already responded; Naive never moves
  }

  // population transport (FastRho replaced rho above and skips transport)
  if (k != Regime::Kind::CompetitiveFastRho) {
    const Vec x_now = state.x;
    const VariationKind vk = regime.variation();
    const double scale = (k == Regime::Kind::CompetitiveCoupled) ? regime.tau : 1.0;
    AdvanceReport ar;
    state.rho = advance_density(
        state.rho,
        [&](const Density& r) {
          std::vector<double> f = first_variation_rho(r, x_now, m, vk);
          if (scale != 1.0)
            for (double& v : f) v *= scale;
          return f;
        },
        regime.transport_sign(), dt, opt.cfl, &ar);
    info.substeps = ar.substeps;
    info.max_mass_drift = ar.max_mass_drift;
    info.min_cell_value = ar.min_cell_value;
  } else {
    info.min_cell_value = state.rho.min_value();
  }

  state.x = x_next;
  return info;
}

struct TrajectorySample {
  double t = 0.0;
  long step = 0;
  Vec x;
  double energy = 0.0;
  double mass = 0.0;
  double min_cell = 0.0;
  double max_mass_drift = 0.0;  // worst substep drift since the last sample
  int substeps = 0;             // transport substeps since the last sample
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  std::vector<Density> densities;      // one per sample
  std::vector<Density> tau_densities;  // one per sample on two-population runs
};

struct RunParams {
  Regime regime;
  Density rho0;
  double t_final = 1.0;
  double dt = 0.01;
  int sample_stride = 10;
  SolverOptions solver;
  std::optional<TwoPopulationSetup> two_pop;
  std::optional<Density> tau0;
};

namespace detail {
inline double recorded_energy(const CoupledState& s, const EnergyModel& m, const Regime& regime) {
  if (regime.kind == Regime::Kind::TwoPopulations) {
    const Vec dx = s.x - m.x0;
    return integrate_cost(s.rho, s.x, m.cost, true) + integrate_cost(*s.tau, s.x, m.cost, false) +
           0.5 * m.beta * dx.norm2();
  }
  if (regime.kind == Regime::Kind::Aligned) return energy_aligned(s.rho, s.x, m);
  return energy_competitive(s.rho, s.x, m);
}
}  // namespace detail

// Integrates the configured regime to t_final, recording every
// sample_stride-th step (plus the initial and final states).
inline Trajectory run(const EnergyModel& m, const RunParams& p) {
  if (!(p.dt > 0.0)) throw InvalidArgument("run: dt must be positive");
  if (!(p.t_final >= 0.0)) throw InvalidArgument("run: t_final must be nonnegative");
  if (p.sample_stride <= 0) throw InvalidArgument("run: sample stride must be positive");
  const long nsteps = std::lround(p.t_final / p.dt);
  if (std::abs(nsteps * p.dt - p.t_final) > 1e-9 * std::max(1.0, p.t_final))
    throw InvalidArgument("run: t_final must be an integer multiple of dt");
  if (!(p.rho0.grid == m.rho_tilde.grid)) throw InvalidArgument("run: initial density grid mismatch");
  const bool two_pop = p.regime.kind == Regime::Kind::TwoPopulations;
  if (two_pop && (!p.tau0 || !p.two_pop))
    throw InvalidArgument("run: two-population run needs tau0 and its reference");

  CoupledState state{p.rho0,
                     p.regime.kind == Regime::Kind::NaiveClassifier ? p.regime.fixed_x : m.x0,
                     p.tau0};
  if (p.regime.kind == Regime::Kind::CompetitiveFastX)
    state.x = best_response_x(state.rho, m, p.solver.newton_tol);
  if (p.regime.kind == Regime::Kind::CompetitiveFastRho) {
    GibbsResult br = best_response_rho(state.x, m, p.solver.gibbs_tol, p.solver.gibbs_max_iter,
                                       p.solver.gibbs_damping, &state.rho);
    state.rho = std::move(br.rho);
  }

  Trajectory traj;
  double pending_drift = 0.0;
  int pending_substeps = 0;
  auto record = [&](long step) {
    if (p.regime.kind == Regime::Kind::CompetitiveFastX)
      state.x = best_response_x(state.rho, m, p.solver.newton_tol);
    TrajectorySample s;
    s.t = step * p.dt;
    s.step = step;
    s.x = state.x;
    s.energy = detail::recorded_energy(state, m, p.regime);
    s.mass = state.rho.mass();
    s.min_cell = state.rho.min_value();
    s.max_mass_drift = pending_drift;
    s.substeps = pending_substeps;
    traj.samples.push_back(s);
    traj.densities.push_back(state.rho);
    if (two_pop) traj.tau_densities.push_back(*state.tau);
    pending_drift = 0.0;
    pending_substeps = 0;
  };

  record(0);
  for (long step = 1; step <= nsteps; ++step) {
    const StepInfo info = step_coupled(state, m, p.regime, p.dt, p.solver, step - 1,
                                       p.two_pop ? &*p.two_pop : nullptr);
    pending_drift = std::max(pending_drift, info.max_mass_drift);
    pending_substeps += info.substeps;
    if (step % p.sample_stride == 0 || step == nsteps) record(step);
  }
  return traj;
}

// Convenience wrapper with the two-population regime spelled out.
inline Trajectory run_two_populations(const EnergyModel& m, Density rho0, Density tau0,
                                      const TwoPopulationSetup& setup, double t_final, double dt,
                                      int sample_stride = 10, const SolverOptions& opt = {}) {
  RunParams p;
  p.regime.kind = Regime::Kind::TwoPopulations;
  p.rho0 = std::move(rho0);
  p.t_final = t_final;
  p.dt = dt;
  p.sample_stride = sample_stride;
  p.solver = opt;
  p.two_pop = setup;
  p.tau0 = std::move(tau0);
  return run(m, p);
}

}  // namespace driftflow
