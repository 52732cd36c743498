#include <doctest.h>

#include <driftflow/fv_solver.hpp>
#include <driftflow/model.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "test_util.hpp"

using namespace driftflow;

TEST_CASE("face velocities from potential fields") {
  Grid g = Grid::make_1d(-2.0, 2.0, 40);

  SUBCASE("constant potential produces no motion") {
    std::vector<double> xi(40, 3.7);
    for (double u : face_velocities(xi, g)) CHECK(u == 0.0);
  }

  SUBCASE("linear potential moves downhill at unit speed") {
    std::vector<double> xi(40);
    for (int i = 0; i < 40; ++i) xi[size_t(i)] = g.center(0, i);
    auto u = face_velocities(xi, g, 1.0);
    REQUIRE(u.size() == 41);
    CHECK(u.front() == 0.0);
    CHECK(u.back() == 0.0);
    for (size_t f = 1; f < 40; ++f) CHECK(u[f] == doctest::Approx(-1.0).epsilon(1e-12));
    auto ua = face_velocities(xi, g, -1.0);  // ascent flips the sign
    for (size_t f = 1; f < 40; ++f) CHECK(ua[f] == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("quadratic potential gives the face coordinate exactly") {
    std::vector<double> xi(40);
    for (int i = 0; i < 40; ++i) {
      const double z = g.center(0, i);
      xi[size_t(i)] = 0.5 * z * z;
    }
    auto u = face_velocities(xi, g);
    for (int f = 1; f < 40; ++f) {
      const double zf = 0.5 * (g.center(0, f - 1) + g.center(0, f));
      CHECK(u[size_t(f)] == doctest::Approx(-zf).epsilon(1e-12));
    }
  }

  SUBCASE("wrong sizes and non-finite fields are rejected") {
    CHECK_THROWS_AS(face_velocities(std::vector<double>(39, 0.0), g), InvalidArgument);
    std::vector<double> bad(40, 0.0);
    bad[7] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(face_velocities(bad, g), InvalidArgument);
  }
}

TEST_CASE("stable step selection") {
  Grid g = Grid::make_1d(0.0, 4.0, 40);  // dz = 0.1

  SUBCASE("advertised bound cfl*dz/max|u|") {
    std::vector<double> u(41, 0.0);
    u[20] = 2.0;
    u[10] = -1.5;
    CHECK(cfl_dt(u, g, 0.5) == doctest::Approx(0.025).epsilon(1e-14));
    CHECK_THROWS_AS(cfl_dt(u, g, 0.0), InvalidArgument);
    CHECK_THROWS_AS(cfl_dt(u, g, 1.5), InvalidArgument);
  }

  SUBCASE("still velocity field gives the infinite sentinel") {
    std::vector<double> u(41, 0.0);
    CHECK(std::isinf(cfl_dt(u, g, 0.5)));
    CHECK(std::isinf(sharp_dt(u, g)));
  }

  SUBCASE("sharp bound counts outflow per cell") {
    std::vector<double> u(41, 0.0);
    u[20] = 2.0;   // outflow of cell 19 to the right
    u[19] = -1.0;  // outflow of cell 19 to the left as well
    CHECK(sharp_dt(u, g) == doctest::Approx(0.1 / 3.0).epsilon(1e-13));
  }
}

TEST_CASE("upwind transport step") {
  Grid g = Grid::make_1d(-4.0, 4.0, 200);

  SUBCASE("zero velocity is the bitwise identity") {
    Density rho = discretize(g, tu::gauss1(0.0, 0.5));
    StepReport rep;
    Density next = step(rho, std::vector<double>(201, 0.0), 0.1, &rep);
    for (int i = 0; i < 200; ++i) CHECK(next.values[size_t(i)] == rho.values[size_t(i)]);
    CHECK(rep.mass_drift == 0.0);
  }

  SUBCASE("constant velocity advects the mean by u*dt") {
    Density rho = discretize(g, tu::gauss1(0.0, 0.25));  // negligible boundary mass
    std::vector<double> u(201, 1.0);
    u.front() = u.back() = 0.0;
    const double dt = 0.5 * cfl_dt(u, g, 0.5);
    const double m0 = moment(rho, 1).v[0];
    StepReport rep;
    Density next = step(rho, u, dt, &rep);
    const double m1 = moment(next, 1).v[0];
    CHECK(std::abs(m1 - m0 - 1.0 * dt) < 1e-12);  // exact for interior-supported mass
    CHECK(std::abs(m1 - m0 - 1.0 * dt) < 0.05 * dt);
    CHECK(rep.mass_drift < 1e-14);
    CHECK(rep.min_cell_value >= 0.0);
  }

  SUBCASE("mass telescopes over many steps") {
    Density rho = discretize(g, tu::mixture1(0.5, -1.0, 0.2, 1.0, 0.2));
    std::vector<double> u(201);
    for (int f = 0; f <= 200; ++f) u[size_t(f)] = std::sin(0.9 * f);
    u.front() = u.back() = 0.0;
    const double dt = 0.9 * sharp_dt(u, g);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
      StepReport rep;
      rho = step(rho, u, dt, &rep);
      worst = std::max(worst, rep.mass_drift);
      CHECK(rho.min_value() >= 0.0);
    }
    CHECK(worst < 1e-12);
    CHECK(std::abs(rho.mass() - 1.0) < 1e-10);
  }

  SUBCASE("positivity holds at the advertised bound over random fields") {
    Rng rng(2024);
    Grid gs = Grid::make_1d(-3.0, 3.0, 64);
    for (int rep = 0; rep < 200; ++rep) {
      std::vector<double> xi(64, 0.0);
      for (int k = 1; k <= 5; ++k) {
        const double a = 2.0 * rng.uniform() - 1.0;
        const double ph = 6.28318 * rng.uniform();
        for (int i = 0; i < 64; ++i) xi[size_t(i)] += a * std::sin(k * gs.center(0, i) + ph);
      }
      Density rho = discretize(gs, tu::mixture1(0.3 + 0.4 * rng.uniform(),
                                                -1.5 + rng.uniform(), 0.1 + 0.3 * rng.uniform(),
                                                0.5 + rng.uniform(), 0.1 + 0.3 * rng.uniform()));
      auto u = face_velocities(xi, gs, rng.uniform() < 0.5 ? 1.0 : -1.0);
      double dt = cfl_dt(u, gs, 0.5);
      if (std::isinf(dt)) dt = 1.0;
      StepReport sr;
      Density next = step(rho, u, dt, &sr);
      CHECK(next.min_value() >= 0.0);
      CHECK(sr.mass_drift < 1e-12);
    }
  }

  SUBCASE("overlong steps are rejected with the admissible value attached") {
    Density rho = discretize(g, tu::gauss1(0.0, 0.5));
    std::vector<double> u(201);
    for (int f = 0; f <= 200; ++f) u[size_t(f)] = std::cos(0.37 * f);
    u.front() = u.back() = 0.0;
    const double bound = sharp_dt(u, g);
    CHECK_THROWS_AS(step(rho, u, 1.5 * bound, nullptr), CflError);
    try {
      step(rho, u, 1.5 * bound, nullptr);
    } catch (const CflError& e) {
      CHECK(e.admissible_dt == doctest::Approx(bound).epsilon(1e-13));
      Density ok = step(rho, u, 0.999 * e.admissible_dt, nullptr);
      CHECK(ok.min_value() >= 0.0);
    }
  }

  SUBCASE("malformed inputs are rejected") {
    Density rho = discretize(g, tu::gauss1(0.0, 0.5));
    std::vector<double> u(201, 0.0);
    CHECK_THROWS_AS(step(rho, u, 0.0, nullptr), InvalidArgument);
    CHECK_THROWS_AS(step(rho, std::vector<double>(200, 0.0), 0.1, nullptr), InvalidArgument);
    u.front() = 0.5;  // nonzero boundary face breaks the zero-flux contract
    CHECK_THROWS_AS(step(rho, u, 0.1, nullptr), InvalidArgument);
  }
}

TEST_CASE("relaxation toward the reference under the entropy field") {
  // zero costs, no interaction: the flow is plain relaxation and the
  // discretized reference is an exact fixed point of the scheme
  Grid g = Grid::make_1d(-6.0, 6.0, 120);
  EnergyModel m = EnergyModel::make(LogisticCost::zero(1), InteractionKernel::none(),
                                    ReferenceDistribution::gaussian1(0.0, 1.0), g,
                                    discretize(g, tu::gauss1(0.0, 1.0)), 0.1, 1.0,
                                    Vec::scalar(0.0));
  Density rho = discretize(g, tu::gauss1(0.5, 1.0));
  CHECK(std::abs(kl(rho, m.rho_tilde) - 0.125) < 1e-5);

  auto field = [&](const Density& r) {
    return first_variation_rho(r, m.x0, m, VariationKind::Aligned);
  };

  SUBCASE("the reference does not move") {
    AdvanceReport rep;
    Density out = advance_density(m.rho_tilde, field, 1.0, 1.0, 0.45, &rep);
    for (int i = 0; i < g.size(); ++i)
      CHECK(out.values[size_t(i)] == doctest::Approx(m.rho_tilde.values[size_t(i)]).epsilon(1e-12));
  }

  SUBCASE("entropy contracts monotonically to the reference") {
    double prev = kl(rho, m.rho_tilde);
    AdvanceReport rep;
    for (int t = 0; t < 60; ++t) {
      rho = advance_density(std::move(rho), field, 1.0, 1.0, 0.45, &rep);
      const double cur = kl(rho, m.rho_tilde);
      CHECK(cur <= prev + 1e-12);
      CHECK(rep.max_mass_drift < 1e-12);
      CHECK(rep.min_cell_value >= 0.0);
      prev = cur;
    }
    CHECK(prev <= 1e-6);
  }
}

TEST_CASE("planar upwind transport") {
  Grid g = Grid::make_2d(-3.0, 3.0, 36, -3.0, 3.0, 30);

  SUBCASE("linear potential produces constant interior faces, zero boundary") {
    std::vector<double> xi(size_t(g.size()));
    for (int i = 0; i < g.size(); ++i) {
      Vec z = g.point(i);
      xi[size_t(i)] = 0.7 * z.v[0] - 0.4 * z.v[1];
    }
    FaceField2D f = face_velocities_2d(xi, g, 1.0);
    const int n0 = g.n[0], n1 = g.n[1];
    for (int j = 0; j < n1; ++j) {
      CHECK(f.ux[size_t((n0 + 1) * j)] == 0.0);
      CHECK(f.ux[size_t(n0 + (n0 + 1) * j)] == 0.0);
      for (int i = 1; i < n0; ++i)
        CHECK(f.ux[size_t(i + (n0 + 1) * j)] == doctest::Approx(-0.7).epsilon(1e-12));
    }
    for (int i = 0; i < n0; ++i) {
      CHECK(f.uy[size_t(i)] == 0.0);
      CHECK(f.uy[size_t(i + n0 * n1)] == 0.0);
      for (int j = 1; j < n1; ++j)
        CHECK(f.uy[size_t(i + n0 * j)] == doctest::Approx(0.4).epsilon(1e-12));
    }
  }

  SUBCASE("constant drift advects both means exactly") {
    // compact bump: the identity is exact only while the outflow-source
    // boundary cells hold no mass (a Gaussian leaks ~1e-11 there)
    std::vector<double> w(size_t(g.size()));
    double total = 0.0;
    for (int i = 0; i < g.size(); ++i) {
      const Vec z = g.point(i);
      const double r2 = (z.v[0] + 0.5) * (z.v[0] + 0.5) + (z.v[1] - 0.5) * (z.v[1] - 0.5);
      w[size_t(i)] = std::max(0.0, 2.25 - r2);
      total += w[size_t(i)] * g.cell_volume();
    }
    for (double& v : w) v /= total;
    Density rho{g, std::move(w)};
    std::vector<double> xi(size_t(g.size()));
    for (int i = 0; i < g.size(); ++i) {
      Vec z = g.point(i);
      xi[size_t(i)] = -0.8 * z.v[0] + 0.5 * z.v[1];  // u = (0.8, -0.5)
    }
    FaceField2D f = face_velocities_2d(xi, g, 1.0);
    const double dt = cfl_dt_2d(f, g, 0.5);
    Vec m0 = moment(rho, 1);
    StepReport rep;
    Density next = step2d(rho, xi, dt, 1.0, &rep);
    Vec m1 = moment(next, 1);
    CHECK(std::abs(m1.v[0] - m0.v[0] - 0.8 * dt) < 1e-12);
    CHECK(std::abs(m1.v[1] - m0.v[1] + 0.5 * dt) < 1e-12);
    CHECK(rep.mass_drift < 1e-13);
    CHECK(rep.min_cell_value >= 0.0);
  }

  SUBCASE("separable data obeys the split-step identity") {
    // for xi = phi(z1) + chi(z2) and rho = p x q, the unsplit update equals
    // p' x q + p x q' - p x q where p', q' are the library's own 1D steps
    Grid gx = Grid::make_1d(-3.0, 3.0, 36);
    Grid gy = Grid::make_1d(-3.0, 3.0, 30);
    Density p = discretize(gx, tu::gauss1(-0.4, 0.3));
    Density q = discretize(gy, tu::gauss1(0.6, 0.5));
    std::vector<double> phi(36), chi(30);
    for (int i = 0; i < 36; ++i) phi[size_t(i)] = std::sin(1.3 * gx.center(0, i));
    for (int j = 0; j < 30; ++j) chi[size_t(j)] = 0.5 * gy.center(0, j) * gy.center(0, j);

    std::vector<double> xi(size_t(g.size()));
    std::vector<double> prod(size_t(g.size()));
    for (int j = 0; j < 30; ++j)
      for (int i = 0; i < 36; ++i) {
        xi[size_t(g.flat(i, j))] = phi[size_t(i)] + chi[size_t(j)];
        prod[size_t(g.flat(i, j))] = p.values[size_t(i)] * q.values[size_t(j)];
      }
    Density rho = Density::raw(g, std::move(prod));

    FaceField2D f = face_velocities_2d(xi, g, 1.0);
    const double dt = 0.5 * std::min(cfl_dt_2d(f, g, 0.5), 0.9 * sharp_dt_2d(f, g));
    Density unsplit = step2d(rho, xi, dt, 1.0, nullptr);

    Density px = step(p, face_velocities(phi, gx, 1.0), dt, nullptr);
    Density qy = step(q, face_velocities(chi, gy, 1.0), dt, nullptr);
    for (int j = 0; j < 30; ++j)
      for (int i = 0; i < 36; ++i) {
        const double want = px.values[size_t(i)] * q.values[size_t(j)] +
                            p.values[size_t(i)] * qy.values[size_t(j)] -
                            p.values[size_t(i)] * q.values[size_t(j)];
        CHECK(unsplit.values[size_t(g.flat(i, j))] == doctest::Approx(want).epsilon(1e-12));
      }
  }

  SUBCASE("positivity and conservation over random planar fields") {
    Rng rng(77);
    Grid gs = Grid::make_2d(-2.0, 2.0, 20, -2.0, 2.0, 24);
    for (int rep = 0; rep < 50; ++rep) {
      std::vector<double> xi(size_t(gs.size()), 0.0);
      for (int k = 1; k <= 3; ++k) {
        const double a = 2.0 * rng.uniform() - 1.0;
        const double b = 2.0 * rng.uniform() - 1.0;
        for (int i = 0; i < gs.size(); ++i) {
          Vec z = gs.point(i);
          xi[size_t(i)] += a * std::sin(k * z.v[0]) + b * std::cos(k * z.v[1]);
        }
      }
      Density rho = discretize(gs, tu::gauss2(-0.5 + rng.uniform(), 0.2 + 0.3 * rng.uniform(),
                                              -0.5 + rng.uniform(), 0.2 + 0.3 * rng.uniform()));
      FaceField2D f = face_velocities_2d(xi, gs, 1.0);
      double dt = std::min(cfl_dt_2d(f, gs, 0.5), 0.9 * sharp_dt_2d(f, gs));
      if (std::isinf(dt)) dt = 1.0;
      StepReport sr;
      Density next = step2d(rho, xi, dt, 1.0, &sr);
      CHECK(next.min_value() >= 0.0);
      CHECK(sr.mass_drift < 1e-12);
    }
  }

  SUBCASE("overlong planar steps are rejected with the admissible value") {
    Density rho = discretize(g, tu::gauss2(0.0, 0.3, 0.0, 0.3));
    std::vector<double> xi(size_t(g.size()));
    for (int i = 0; i < g.size(); ++i) {
      Vec z = g.point(i);
      xi[size_t(i)] = std::sin(z.v[0]) * std::cos(z.v[1]);
    }
    FaceField2D f = face_velocities_2d(xi, g, 1.0);
    const double bound = sharp_dt_2d(f, g);
    CHECK_THROWS_AS(step2d(rho, xi, 2.0 * bound, 1.0, nullptr), CflError);
  }

  SUBCASE("planar relaxation contracts to the planar reference") {
    Grid gs = Grid::make_2d(-4.0, 4.0, 30, -4.0, 4.0, 30);
    EnergyModel m = EnergyModel::make(LogisticCost::zero(2), InteractionKernel::none(),
                                      ReferenceDistribution::gaussian2(0.0, 0.25, 0.0, 0.25), gs,
                                      discretize(gs, tu::gauss2(0.0, 0.25, 0.0, 0.25)), 0.2, 1.0,
                                      Vec::of(0.0, 0.0));
    Density rho = discretize(gs, tu::gauss2(0.5, 0.3, -0.5, 0.3));
    auto field = [&](const Density& r) {
      return first_variation_rho(r, m.x0, m, VariationKind::Aligned);
    };
    AdvanceReport rep;
    rho = advance_density(std::move(rho), field, 1.0, 20.0, 0.45, &rep);
    CHECK(rep.max_mass_drift < 1e-12);
    CHECK(rep.min_cell_value >= 0.0);
    CHECK(kl(rho, m.rho_tilde) < 1e-5);
  }
}

TEST_CASE("automatic substepping under the scenario field") {
  // first coupled-scenario step: either the configured dt is already stable
  // or the driver subdivides; mass and positivity hold either way
  Grid g = Grid::make_1d(-6.0, 6.0, 240);
  EnergyModel m = EnergyModel::make(LogisticCost::one_d(3.0), InteractionKernel::none(),
                                    ReferenceDistribution::gaussian1(0.0, 0.25), g,
                                    discretize(g, tu::gauss1(1.0, 0.25)), 0.1, 0.05,
                                    Vec::scalar(1.5));
  Density rho = m.rho_tilde;
  auto field = [&](const Density& r) {
    return first_variation_rho(r, m.x0, m, VariationKind::Competitive);
  };

  const auto xi0 = field(rho);
  auto u0 = face_velocities(xi0, g, -1.0);
  const double stable = std::min(cfl_dt(u0, g, 0.45), 0.9 * sharp_dt(u0, g));

  AdvanceReport rep;
  Density out = advance_density(rho, field, -1.0, 0.01, 0.45, &rep);
  if (stable >= 0.01) {
    CHECK(rep.substeps == 1);
  } else {
    CHECK(rep.substeps >= 2);
  }
  CHECK(rep.max_mass_drift < 1e-12);
  CHECK(rep.min_cell_value >= 0.0);
  CHECK(std::abs(out.mass() - 1.0) < 1e-10);

  SUBCASE("zero-duration advance is the identity with no substeps") {
    AdvanceReport r0;
    Density same = advance_density(rho, field, -1.0, 0.0, 0.45, &r0);
    CHECK(r0.substeps == 0);
    for (int i = 0; i < g.size(); ++i) CHECK(same.values[size_t(i)] == rho.values[size_t(i)]);
  }
}
