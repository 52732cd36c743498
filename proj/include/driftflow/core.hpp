#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace driftflow {

// Thrown on bad arguments, bad configs, and violated preconditions.
struct InvalidArgument : std::runtime_error {
  explicit InvalidArgument(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when an iterative solve (Newton, fixed point) fails to converge.
struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a transport step is asked to exceed the stable time step.
// Carries the largest admissible dt so the caller can subdivide.
struct CflError : std::runtime_error {
  double admissible_dt;
  CflError(const std::string& what, double dt_ok)
      : std::runtime_error(what), admissible_dt(dt_ok) {}
};

// Thrown when an output file cannot be produced.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

constexpr double kMassFloor = 1e-12;  // floor applied inside logs only

// Classifier parameter: a 1- or 2-component vector with value semantics.
struct Vec {
  int dim = 1;
  std::array<double, 2> v{0.0, 0.0};

  static Vec scalar(double a) { return Vec{1, {a, 0.0}}; }
  static Vec of(double a, double b) { return Vec{2, {a, b}}; }
  static Vec zero(int d) { return Vec{d, {0.0, 0.0}}; }

  double& operator[](int i) { return v[static_cast<size_t>(i)]; }
  double operator[](int i) const { return v[static_cast<size_t>(i)]; }

  Vec& operator+=(const Vec& o) {
    for (int i = 0; i < dim; ++i) v[i] += o.v[i];
    return *this;
  }
  Vec& operator-=(const Vec& o) {
    for (int i = 0; i < dim; ++i) v[i] -= o.v[i];
    return *this;
  }
  Vec& operator*=(double s) {
    for (int i = 0; i < dim; ++i) v[i] *= s;
    return *this;
  }
  friend Vec operator+(Vec a, const Vec& b) { return a += b; }
  friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
  friend Vec operator*(double s, Vec a) { return a *= s; }

  double dot(const Vec& o) const {
    double s = 0.0;
    for (int i = 0; i < dim; ++i) s += v[i] * o.v[i];
    return s;
  }
  double norm2() const { return dot(*this); }
  double norm() const { return std::sqrt(norm2()); }
};

// Symmetric 2x2 (or 1x1 when dim==1) matrix; enough for Newton on x.
struct Mat {
  int dim = 1;
  double a00 = 0.0, a01 = 0.0, a11 = 0.0;

  static Mat identity(int d, double s = 1.0) { return Mat{d, s, 0.0, (d == 2) ? s : 0.0}; }

  Mat& operator+=(const Mat& o) {
    a00 += o.a00;
    a01 += o.a01;
    a11 += o.a11;
    return *this;
  }
  Mat& operator*=(double s) {
    a00 *= s;
    a01 *= s;
    a11 *= s;
    return *this;
  }

  // rank-one update: A += s * u u^T
  void add_outer(const Vec& u, double s) {
    a00 += s * u[0] * u[0];
    if (dim == 2) {
      a01 += s * u[0] * u[1];
      a11 += s * u[1] * u[1];
    }
  }

  double min_eig() const {
    if (dim == 1) return a00;
    const double tr = a00 + a11;
    const double det = a00 * a11 - a01 * a01;
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    return tr / 2.0 - disc;
  }

  Vec solve(const Vec& b) const {
    if (dim == 1) {
      if (a00 == 0.0) throw SolverError("singular 1x1 system");
      return Vec::scalar(b[0] / a00);
    }
    const double det = a00 * a11 - a01 * a01;
    if (det == 0.0) throw SolverError("singular 2x2 system");
    return Vec::of((a11 * b[0] - a01 * b[1]) / det, (a00 * b[1] - a01 * b[0]) / det);
  }
};

inline double sigmoid(double u) {
  if (u >= 0.0) {
    const double e = std::exp(-u);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(u);
  return e / (1.0 + e);
}

// log(1 + e^u), overflow-safe
inline double softplus(double u) { return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))); }

// d/du sigmoid(u) = s(1-s), evaluated stably
inline double sigmoid_deriv(double u) {
  const double s = sigmoid(u);
  return s * (1.0 - s);
}

// Deterministic uniform generator: identical streams across platforms for a
// given seed (std::uniform_real_distribution is implementation-defined, so we
// draw doubles from the raw engine output ourselves).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

  // splitmix64 step
  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    // Box-Muller; uses two uniforms per call, cache unused half
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

  // derive an unrelated stream (used to decouple the two sample draws)
  static uint64_t mix(uint64_t seed, uint64_t salt) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace driftflow
