#pragma once

#include <functional>
#include <optional>

#include "driftflow/grid.hpp"

namespace driftflow {

// Classification costs. f1 is the algorithm's cost on the strategic
// population, f2 its cost on the static one; both nonnegative.
//   OneD:  f1(z,x) = softplus(b z - x),   f2(z,x) = softplus(x - b z)
//   TwoD:  f1(z,x) = sigma(x.z)/2,        f2(z,x) = sigma(-x.z)/2
//   Zero:  both identically zero (analytic relaxation benchmark)
struct LogisticCost {
  enum class Kind { Zero, OneD, TwoD };
  Kind kind = Kind::OneD;
  double slope = 1.0;  // b, OneD only
  int zero_xdim = 1;   // parameter dimension when kind == Zero

  static LogisticCost one_d(double b) {
    if (!(b > 0.0)) throw InvalidArgument("cost: slope must be positive");
    return LogisticCost{Kind::OneD, b, 1};
  }
  static LogisticCost two_d() { return LogisticCost{Kind::TwoD, 1.0, 2}; }
  static LogisticCost zero(int xdim) { return LogisticCost{Kind::Zero, 1.0, xdim}; }

  int xdim() const {
    switch (kind) {
      case Kind::OneD: return 1;
      case Kind::TwoD: return 2;
      default: return zero_xdim;
    }
  }

  double f1(const Vec& z, const Vec& x) const {
    switch (kind) {
      case Kind::OneD: return softplus(slope * z[0] - x[0]);
      case Kind::TwoD: return 0.5 * sigmoid(x.dot(z));
      default: return 0.0;
    }
  }
  double f2(const Vec& z, const Vec& x) const {
    switch (kind) {
      case Kind::OneD: return softplus(x[0] - slope * z[0]);
      case Kind::TwoD: return 0.5 * sigmoid(-x.dot(z));
      default: return 0.0;
    }
  }

  Vec grad_x_f1(const Vec& z, const Vec& x) const {
    switch (kind) {
      case Kind::OneD: return Vec::scalar(-sigmoid(slope * z[0] - x[0]));
      case Kind::TwoD: return 0.5 * sigmoid_deriv(x.dot(z)) * z;
      default: return Vec::zero(xdim());
    }
  }
  Vec grad_x_f2(const Vec& z, const Vec& x) const {
    switch (kind) {
      case Kind::OneD: return Vec::scalar(sigmoid(x[0] - slope * z[0]));
      case Kind::TwoD: return -0.5 * sigmoid_deriv(x.dot(z)) * z;
      default: return Vec::zero(xdim());
    }
  }

  Mat hess_x_f1(const Vec& z, const Vec& x) const {
    Mat h{xdim(), 0.0, 0.0, 0.0};
    switch (kind) {
      case Kind::OneD: h.a00 = sigmoid_deriv(slope * z[0] - x[0]); break;
      case Kind::TwoD: h.add_outer(z, 0.5 * sigmoid_curv(x.dot(z))); break;
      default: break;
    }
    return h;
  }
  Mat hess_x_f2(const Vec& z, const Vec& x) const {
    Mat h{xdim(), 0.0, 0.0, 0.0};
    switch (kind) {
      case Kind::OneD: h.a00 = sigmoid_deriv(x[0] - slope * z[0]); break;
      case Kind::TwoD: h.add_outer(z, -0.5 * sigmoid_curv(x.dot(z))); break;
      default: break;
    }
    return h;
  }

  // largest eigenvalue of the z-Hessian of f1 (upper curvature of the
  // population's incentive); global sup is slope^2/4 for OneD
  double hess_z_f1_max(const Vec& z, const Vec& x) const {
    switch (kind) {
      case Kind::OneD: return slope * slope * sigmoid_deriv(slope * z[0] - x[0]);
      case Kind::TwoD: return std::max(0.0, 0.5 * sigmoid_curv(x.dot(z))) * x.norm2();
      default: return 0.0;
    }
  }

  static double sigmoid_curv(double u) {  // sigma''(u)
    const double s = sigmoid(u);
    return s * (1.0 - s) * (1.0 - 2.0 * s);
  }
};

// Pairwise interaction W(z - z'); symmetric in its argument.
struct InteractionKernel {
  enum class Kind { None, Quadratic, Consensus };
  Kind kind = Kind::None;
  double param = 0.0;  // quadratic weight or consensus scale

  static InteractionKernel none() { return InteractionKernel{Kind::None, 0.0}; }
  static InteractionKernel quadratic(double w) {
    if (!(w >= 0.0)) throw InvalidArgument("kernel: weight must be nonnegative");
    return InteractionKernel{Kind::Quadratic, w};
  }
  static InteractionKernel consensus(double s) {
    if (!(s >= 0.0)) throw InvalidArgument("kernel: scale must be nonnegative");
    return InteractionKernel{Kind::Consensus, s};
  }

  double operator()(const Vec& r) const {
    switch (kind) {
      case Kind::Quadratic: return 0.5 * param * r.norm2();
      case Kind::Consensus: return param / (1.0 + r.norm());
      default: return 0.0;
    }
  }
};

// Log-concave Gaussian reference (per-axis mean/variance). The analytic log
// pdf is kept around because the discretized tail underflows where the
// floored log would manufacture spurious gradients.
struct ReferenceDistribution {
  int dim = 1;
  std::array<double, 2> mean{0.0, 0.0};
  std::array<double, 2> var{1.0, 1.0};

  static ReferenceDistribution gaussian1(double m, double v) {
    if (!(v > 0.0)) throw InvalidArgument("reference: variance must be positive");
    return ReferenceDistribution{1, {m, 0.0}, {v, 1.0}};
  }
  static ReferenceDistribution gaussian2(double m0, double v0, double m1, double v1) {
    if (!(v0 > 0.0) || !(v1 > 0.0)) throw InvalidArgument("reference: variance must be positive");
    return ReferenceDistribution{2, {m0, m1}, {v0, v1}};
  }

  double log_pdf(const Vec& z) const {
    double lp = 0.0;
    for (int a = 0; a < dim; ++a) {
      const double d = z[a] - mean[a];
      lp += -0.5 * d * d / var[a] - 0.5 * std::log(2.0 * M_PI * var[a]);
    }
    return lp;
  }
  double pdf(const Vec& z) const { return std::exp(log_pdf(z)); }

  // uniform log-concavity constant of -log pdf
  double lambda_tilde() const {
    double vmax = var[0];
    if (dim == 2) vmax = std::max(vmax, var[1]);
    return 1.0 / vmax;
  }
};

// Full model: costs, interaction, regularization, anchoring.
struct EnergyModel {
  LogisticCost cost;
  InteractionKernel kernel;
  ReferenceDistribution ref;  // analytic rho_tilde
  Density rho_tilde;          // discretized rho_tilde (same grid as states)
  Density rho_bar;            // static population
  double alpha = 0.1;
  double beta = 1.0;
  Vec x0;

  static EnergyModel make(LogisticCost cost, InteractionKernel kernel, ReferenceDistribution ref,
                          const Grid& grid, Density rho_bar, double alpha, double beta, Vec x0) {
    if (!(alpha > 0.0)) throw InvalidArgument("model: alpha must be positive");
    if (!(beta > 0.0)) throw InvalidArgument("model: beta must be positive");
    if (ref.dim != grid.dim) throw InvalidArgument("model: reference dimension mismatch");
    if (cost.kind == LogisticCost::Kind::OneD && grid.dim != 1)
      throw InvalidArgument("model: cost expects 1D attributes");
    if (cost.kind == LogisticCost::Kind::TwoD && grid.dim != 2)
      throw InvalidArgument("model: cost expects 2D attributes");
    if (!(rho_bar.grid == grid)) throw InvalidArgument("model: rho_bar grid mismatch");
    if (x0.dim != cost.xdim()) throw InvalidArgument("model: x0 dimension mismatch");
    Density rt = discretize(grid, [&](const Vec& z) { return ref.pdf(z); });
    return EnergyModel{cost, kernel, ref, std::move(rt), std::move(rho_bar), alpha, beta, x0};
  }
};

// (W * rho)(z_i) by direct summation. 1D exploits translation invariance on
// the uniform grid (one kernel table); 2D is the plain double loop.
inline std::vector<double> convolve(const InteractionKernel& kernel, const Density& rho) {
  const Grid& g = rho.grid;
  std::vector<double> field(static_cast<size_t>(g.size()), 0.0);
  if (kernel.kind == InteractionKernel::Kind::None) return field;
  const double dv = g.cell_volume();
  if (g.dim == 1) {
    const int n = g.n[0];
    std::vector<double> table(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) table[static_cast<size_t>(k)] = kernel(Vec::scalar(k * g.dz[0]));
    for (int i = 0; i < n; ++i) {
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += table[static_cast<size_t>(std::abs(i - j))] * rho.values[static_cast<size_t>(j)];
      field[static_cast<size_t>(i)] = s * dv;
    }
  } else {
    for (int i = 0; i < g.size(); ++i) {
      const Vec zi = g.point(i);
      double s = 0.0;
      for (int j = 0; j < g.size(); ++j) s += kernel(zi - g.point(j)) * rho.values[static_cast<size_t>(j)];
      field[static_cast<size_t>(i)] = s * dv;
    }
  }
  return field;
}

// KL(rho | other). Empty cells contribute nothing; +infinity when rho puts
// mass where other has none. Computed as p (log p - log q) so cells with
// p == q cancel exactly and extreme ratios cannot overflow.
inline double kl(const Density& rho, const Density& other) {
  if (!(rho.grid == other.grid)) throw InvalidArgument("kl: grid mismatch");
  const double dv = rho.grid.cell_volume();
  double s = 0.0;
  for (size_t i = 0; i < rho.values.size(); ++i) {
    const double p = rho.values[i];
    if (p == 0.0) continue;
    const double q = other.values[i];
    if (q == 0.0) return std::numeric_limits<double>::infinity();
    s += p * (std::log(p) - std::log(q));
  }
  return s * dv;
}

inline double integrate_cost(const Density& rho, const Vec& x, const LogisticCost& cost, bool first) {
  const Grid& g = rho.grid;
  const double dv = g.cell_volume();
  double s = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    const Vec z = g.point(i);
    s += (first ? cost.f1(z, x) : cost.f2(z, x)) * rho.values[static_cast<size_t>(i)];
  }
  return s * dv;
}

inline double interaction_energy(const InteractionKernel& kernel, const Density& rho) {
  if (kernel.kind == InteractionKernel::Kind::None) return 0.0;
  const std::vector<double> field = convolve(kernel, rho);
  const double dv = rho.grid.cell_volume();
  double s = 0.0;
  for (size_t i = 0; i < field.size(); ++i) s += rho.values[i] * field[i];
  return 0.5 * s * dv;
}

// Joint descent energy: both species minimize.
inline double energy_aligned(const Density& rho, const Vec& x, const EnergyModel& m) {
  if (!(rho.grid == m.rho_bar.grid)) throw InvalidArgument("energy: grid mismatch");
  const Vec dx = x - m.x0;
  return integrate_cost(rho, x, m.cost, true) + integrate_cost(m.rho_bar, x, m.cost, false) +
         m.alpha * kl(rho, m.rho_tilde) + interaction_energy(m.kernel, rho) +
         0.5 * m.beta * dx.norm2();
}

// Zero-sum payoff: the population maximizes it, the classifier minimizes.
inline double energy_competitive(const Density& rho, const Vec& x, const EnergyModel& m) {
  if (!(rho.grid == m.rho_bar.grid)) throw InvalidArgument("energy: grid mismatch");
  const Vec dx = x - m.x0;
  return integrate_cost(rho, x, m.cost, true) + integrate_cost(m.rho_bar, x, m.cost, false) -
         m.alpha * kl(rho, m.rho_tilde) - interaction_energy(m.kernel, rho) +
         0.5 * m.beta * dx.norm2();
}

enum class VariationKind { Aligned, Competitive };

// First variation of the relevant energy in rho, one value per cell:
//   Aligned:      f1 + alpha log(rho/rho_tilde) + W*rho      (descended)
//   Competitive:  f1 - alpha log(rho/rho_tilde) - W*rho      (ascended)
// The analytic reference log keeps tail cells honest where the discretized
// reference underflows.
inline std::vector<double> first_variation_rho(const Density& rho, const Vec& x,
                                               const EnergyModel& m, VariationKind kind) {
  const Grid& g = rho.grid;
  const double sgn = (kind == VariationKind::Aligned) ? 1.0 : -1.0;
  std::vector<double> field = convolve(m.kernel, rho);
  for (int i = 0; i < g.size(); ++i) {
    const Vec z = g.point(i);
    const double logratio =
        std::log(std::max(rho.values[static_cast<size_t>(i)], kMassFloor)) - m.ref.log_pdf(z);
    field[static_cast<size_t>(i)] =
        m.cost.f1(z, x) + sgn * (m.alpha * logratio + field[static_cast<size_t>(i)]);
  }
  return field;
}

// Gradient in x shared by both energies:
//   int grad_x f1 drho + int grad_x f2 drho_bar + beta (x - x0).
// `static_pop` defaults to the model's rho_bar but can be overridden (a
// second evolving population uses this).
inline Vec grad_x_energy(const Density& rho, const Vec& x, const EnergyModel& m,
                         const Density* static_pop = nullptr) {
  const Density& bar = static_pop ? *static_pop : m.rho_bar;
  const Grid& g = rho.grid;
  const double dv = g.cell_volume();
  Vec acc = Vec::zero(m.cost.xdim());
  for (int i = 0; i < g.size(); ++i) {
    const Vec z = g.point(i);
    acc += rho.values[static_cast<size_t>(i)] * m.cost.grad_x_f1(z, x);
    acc += bar.values[static_cast<size_t>(i)] * m.cost.grad_x_f2(z, x);
  }
  acc *= dv;
  return acc + m.beta * (x - m.x0);
}

// Newton matrix for the classifier's best response:
//   Q(rho) = beta I + int hess_x f1 drho + int hess_x f2 drho_bar.
inline Mat response_matrix(const Density& rho, const Vec& x, const EnergyModel& m) {
  const Grid& g = rho.grid;
  const double dv = g.cell_volume();
  Mat q = Mat::identity(m.cost.xdim(), m.beta);
  for (int i = 0; i < g.size(); ++i) {
    const Vec z = g.point(i);
    Mat h1 = m.cost.hess_x_f1(z, x);
    h1 *= rho.values[static_cast<size_t>(i)] * dv;
    Mat h2 = m.cost.hess_x_f2(z, x);
    h2 *= m.rho_bar.values[static_cast<size_t>(i)] * dv;
    q += h1;
    q += h2;
  }
  return q;
}

}  // namespace driftflow
