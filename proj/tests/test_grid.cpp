#include <doctest.h>

#include <driftflow/grid.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "test_util.hpp"

using namespace driftflow;

TEST_CASE("grid construction and cell geometry") {
  Grid g = Grid::make_1d(-2.0, 3.0, 10);
  CHECK(g.dim == 1);
  CHECK(g.size() == 10);
  CHECK(g.dz[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g.cell_volume() == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g.center(0, 0) == doctest::Approx(-1.75).epsilon(1e-15));
  CHECK(g.center(0, 9) == doctest::Approx(2.75).epsilon(1e-15));

  Grid g2 = Grid::make_2d(0.0, 1.0, 8, -1.0, 1.0, 16);
  CHECK(g2.dim == 2);
  CHECK(g2.size() == 128);
  CHECK(g2.cell_volume() == doctest::Approx(0.125 * 0.125).epsilon(1e-14));
  // flat index is row-major in axis 0
  Vec p = g2.point(g2.flat(3, 5));
  CHECK(p.v[0] == doctest::Approx(g2.center(0, 3)).epsilon(1e-15));
  CHECK(p.v[1] == doctest::Approx(g2.center(1, 5)).epsilon(1e-15));

  SUBCASE("degenerate boxes and tiny cell counts are rejected") {
    CHECK_THROWS_AS(Grid::make_1d(0.0, 0.0, 10), InvalidArgument);
    CHECK_THROWS_AS(Grid::make_1d(1.0, 0.0, 10), InvalidArgument);
    CHECK_THROWS_AS(Grid::make_1d(0.0, 1.0, 3), InvalidArgument);
    CHECK_THROWS_AS(Grid::make_2d(0.0, 1.0, 4, 0.0, 1.0, 2), InvalidArgument);
  }
}

TEST_CASE("discretize produces unit-mass midpoint densities") {
  SUBCASE("uniform pdf on [0,1] gives every cell value 1") {
    Grid g = Grid::make_1d(0.0, 1.0, 10);
    Density d = discretize(g, [](Vec) { return 1.0; });
    for (double v : d.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(d.mass() == doctest::Approx(1.0).epsilon(1e-14));
  }

  SUBCASE("standard Gaussian on [-5,5] has mass 1 and mean 0") {
    Grid g = Grid::make_1d(-5.0, 5.0, 200);
    Density d = discretize(g, tu::gauss1(0.0, 1.0));
    CHECK(d.mass() == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(std::abs(moment(d, 1).v[0]) < 1e-8);
  }

  SUBCASE("second central moment matches a fine-quadrature oracle") {
    Grid g = Grid::make_1d(-5.0, 5.0, 200);
    Density d = discretize(g, tu::gauss1(1.0, 0.25));
    const double m1 = moment(d, 1).v[0];
    const double m2c = moment(d, 2).v[0] - m1 * m1;

    // independent oracle: midpoint quadrature of the same pdf at n=20000
    auto pdf = tu::gauss1(1.0, 0.25);
    const int n = 20000;
    const double dz = 10.0 / n;
    double mass = 0.0, s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double z = -5.0 + (i + 0.5) * dz;
      const double p = pdf(Vec::scalar(z));
      mass += p;
      s1 += z * p;
      s2 += z * z * p;
    }
    s1 /= mass;
    s2 /= mass;
    const double oracle = s2 - s1 * s1;
    CHECK(std::abs(oracle - 0.25) < 1e-8);  // quadrature itself is tight
    CHECK(std::abs(m2c - oracle) < 1e-3);
  }

  SUBCASE("normalization is scale invariant bitwise") {
    Grid g = Grid::make_1d(-4.0, 4.0, 64);
    auto pdf = tu::gauss1(0.5, 2.0);
    Density a = discretize(g, pdf);
    Density b = discretize(g, [&](Vec z) { return 2.0 * pdf(z); });
    for (int i = 0; i < g.size(); ++i) CHECK(a.values[size_t(i)] == b.values[size_t(i)]);
  }

  SUBCASE("2D product Gaussian") {
    Grid g = Grid::make_2d(-5.0, 5.0, 60, -4.0, 6.0, 50);
    Density d = discretize(g, tu::gauss2(0.0, 1.0, 1.0, 0.5));
    CHECK(d.mass() == doctest::Approx(1.0).epsilon(1e-13));
    Vec m1 = moment(d, 1);
    CHECK(std::abs(m1.v[0]) < 1e-8);
    CHECK(std::abs(m1.v[1] - 1.0) < 1e-6);
  }

  SUBCASE("negative or zero pdfs are rejected") {
    Grid g = Grid::make_1d(0.0, 1.0, 10);
    CHECK_THROWS_AS(discretize(g, [](Vec) { return 0.0; }), InvalidArgument);
    CHECK_THROWS_AS(discretize(g, [](Vec z) { return z.v[0] - 0.5; }), InvalidArgument);
  }
}

TEST_CASE("density constructors enforce the probability contract") {
  Grid g = Grid::make_1d(0.0, 1.0, 10);
  std::vector<double> vals(10, 2.0);

  SUBCASE("from_values rescales to unit mass") {
    Density d = Density::from_values(g, std::vector<double>(vals));
    CHECK(d.mass() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(d.values[0] == doctest::Approx(1.0).epsilon(1e-14));
  }

  SUBCASE("raw accepts only values already near unit mass") {
    std::vector<double> unit(10, 1.0);
    Density d = Density::raw(g, std::vector<double>(unit));
    CHECK(d.values[3] == 1.0);
    CHECK_THROWS_AS(Density::raw(g, std::vector<double>(vals)), InvalidArgument);
  }

  SUBCASE("negative entries and zero mass are rejected") {
    std::vector<double> neg(10, 1.0);
    neg[4] = -0.1;
    CHECK_THROWS_AS(Density::from_values(g, std::move(neg)), InvalidArgument);
    CHECK_THROWS_AS(Density::from_values(g, std::vector<double>(10, 0.0)), InvalidArgument);
    CHECK_THROWS_AS(Density::from_values(g, std::vector<double>(7, 1.0)), InvalidArgument);
  }
}

TEST_CASE("moment handles supported orders and rejects the rest") {
  Grid g = Grid::make_1d(-6.0, 6.0, 240);
  Density d = discretize(g, tu::gauss1(0.0, 1.0));

  CHECK(moment(d, 0).v[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(moment(d, 1).v[0]) < 1e-8);  // symmetric density about 0
  CHECK(std::abs(moment(d, 2).v[0] - 1.0) < 1e-2);
  CHECK(std::abs(moment(d, 4).v[0] - 3.0) < 0.1);  // Gaussian kurtosis
  CHECK_THROWS_AS(moment(d, 5), InvalidArgument);
  CHECK_THROWS_AS(moment(d, -1), InvalidArgument);
}

namespace {

// piecewise-linear CDF of a cell-averaged density, evaluated independently
double density_cdf(const Density& rho, double z) {
  const Grid& g = rho.grid;
  const double dz = g.dz[0];
  if (z <= g.lower[0]) return 0.0;
  double acc = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    const double left = g.lower[0] + i * dz;
    if (z < left + dz) return acc + rho.values[size_t(i)] * (z - left);
    acc += rho.values[size_t(i)] * dz;
  }
  return 1.0;
}

}  // namespace

TEST_CASE("sample draws reproducible points from the density") {
  Grid g = Grid::make_1d(-6.0, 6.0, 240);
  Density d = discretize(g, tu::gauss1(0.0, 1.0));

  SUBCASE("same seed gives identical lists, different seed differs") {
    auto a = sample(d, 500, 11);
    auto b = sample(d, 500, 11);
    auto c = sample(d, 500, 12);
    REQUIRE(a.size() == 500);
    bool all_eq = true, any_diff = false;
    for (size_t i = 0; i < a.size(); ++i) {
      all_eq = all_eq && a[i].v[0] == b[i].v[0];
      any_diff = any_diff || a[i].v[0] != c[i].v[0];
    }
    CHECK(all_eq);
    CHECK(any_diff);
  }

  SUBCASE("point mass in one cell confines all samples to that cell") {
    std::vector<double> vals(size_t(g.size()), 0.0);
    vals[100] = 1.0;
    Density spike = Density::from_values(g, std::move(vals));
    const double left = g.lower[0] + 100 * g.dz[0];
    for (const Vec& z : sample(spike, 1000, 3)) {
      CHECK(z.v[0] >= left);
      CHECK(z.v[0] <= left + g.dz[0]);
    }
  }

  SUBCASE("sample mean obeys the CLT bound") {
    auto zs = sample(d, 100000, 7);
    double mean = 0.0;
    for (const Vec& z : zs) mean += z.v[0];
    mean /= double(zs.size());
    CHECK(std::abs(mean) < 3e-2);  // 3 sigma / sqrt(n) with sigma ~ 1
  }

  SUBCASE("empirical CDF is close in Kolmogorov-Smirnov distance") {
    const int count = 10000;
    auto zs = sample(d, count, 19);
    std::vector<double> pts;
    pts.reserve(zs.size());
    for (const Vec& z : zs) pts.push_back(z.v[0]);
    std::sort(pts.begin(), pts.end());
    double ks = 0.0;
    for (int i = 0; i < count; ++i) {
      const double f = density_cdf(d, pts[size_t(i)]);
      ks = std::max(ks, std::abs(f - double(i) / count));
      ks = std::max(ks, std::abs(double(i + 1) / count - f));
    }
    CHECK(ks <= 1.63 / std::sqrt(double(count)));  // 1% level
  }

  SUBCASE("2D sampling stays in the box and matches axis means") {
    Grid g2 = Grid::make_2d(-5.0, 5.0, 50, -3.0, 7.0, 50);
    Density d2 = discretize(g2, tu::gauss2(-1.0, 0.5, 2.0, 0.5));
    auto zs = sample(d2, 20000, 23);
    double m0 = 0.0, m1 = 0.0;
    for (const Vec& z : zs) {
      CHECK(z.v[0] >= -5.0);
      CHECK(z.v[0] <= 5.0);
      CHECK(z.v[1] >= -3.0);
      CHECK(z.v[1] <= 7.0);
      m0 += z.v[0];
      m1 += z.v[1];
    }
    m0 /= double(zs.size());
    m1 /= double(zs.size());
    CHECK(std::abs(m0 + 1.0) < 3.0 * std::sqrt(0.5 / 20000.0) + 1e-3);
    CHECK(std::abs(m1 - 2.0) < 3.0 * std::sqrt(0.5 / 20000.0) + 1e-3);
  }

  SUBCASE("invalid counts are rejected") {
    CHECK_THROWS_AS(sample(d, 0, 1), InvalidArgument);
    CHECK_THROWS_AS(sample(d, -5, 1), InvalidArgument);
  }
}

TEST_CASE("density CSV round trip is bitwise exact") {
  auto dir = tu::fresh_dir("grid_csv");

  SUBCASE("1D") {
    Grid g = Grid::make_1d(-3.0, 3.0, 48);
    Density d = discretize(g, tu::mixture1(0.3, -1.0, 0.2, 1.5, 0.7));
    const std::string path = (dir / "rho.csv").string();
    write_density_csv(d, path);
    Density r = read_density_csv(g, path);
    for (int i = 0; i < g.size(); ++i) CHECK(r.values[size_t(i)] == d.values[size_t(i)]);
  }

  SUBCASE("2D") {
    Grid g = Grid::make_2d(-2.0, 2.0, 12, -1.0, 3.0, 10);
    Density d = discretize(g, tu::gauss2(0.0, 0.5, 1.0, 0.8));
    const std::string path = (dir / "rho2.csv").string();
    write_density_csv(d, path);
    Density r = read_density_csv(g, path);
    for (int i = 0; i < g.size(); ++i) CHECK(r.values[size_t(i)] == d.values[size_t(i)]);
  }

  SUBCASE("grid mismatch and missing files are errors") {
    Grid g = Grid::make_1d(-3.0, 3.0, 48);
    Density d = discretize(g, tu::gauss1(0.0, 1.0));
    const std::string path = (dir / "rho3.csv").string();
    write_density_csv(d, path);
    Grid shifted = Grid::make_1d(-3.1, 2.9, 48);
    CHECK_THROWS_AS(read_density_csv(shifted, path), InvalidArgument);
    Grid coarse = Grid::make_1d(-3.0, 3.0, 24);
    CHECK_THROWS_AS(read_density_csv(coarse, path), InvalidArgument);
    CHECK_THROWS(read_density_csv(g, (dir / "absent.csv").string()));
  }

  SUBCASE("write failure reports an I/O error") {
    Grid g = Grid::make_1d(-3.0, 3.0, 48);
    Density d = discretize(g, tu::gauss1(0.0, 1.0));
    CHECK_THROWS_AS(write_density_csv(d, (dir / "no_such_dir" / "rho.csv").string()), IoError);
  }
}
