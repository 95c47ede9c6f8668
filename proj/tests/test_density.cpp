#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "zpo/density.hpp"
#include "zpo/error.hpp"

using namespace zpo;

namespace {
const double kPi = std::acos(-1.0);
}

TEST_CASE("cauchy closed forms") {
  const Density1D d = make_power_tail(2.0);
  CHECK(d.pdf(0.0) == doctest::Approx(0.3183098862).epsilon(1e-10));
  CHECK(d.cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(d.cdf(1.0) == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(std::abs(d.quantile(0.5)) < 1e-15);
  CHECK(d.quantile(0.75) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(d.quantile(d.cdf(2.5)) == doctest::Approx(2.5).epsilon(1e-13));
  for (double x : {-30.0, -2.0, -0.3, 0.01, 0.7, 4.0, 100.0}) {
    CHECK(d.pdf(x) == doctest::Approx(1.0 / (kPi * (1 + x * x))).epsilon(1e-14));
    CHECK(d.cdf(x) == doctest::Approx(0.5 + std::atan(x) / kPi).epsilon(1e-13));
    CHECK(d.sf(x) == doctest::Approx(0.5 - std::atan(x) / kPi).epsilon(1e-13));
  }
}

TEST_CASE("power tail family") {
  CHECK_THROWS_AS(make_power_tail(1.5), Error);
  CHECK_THROWS_AS(make_power_tail(3.5), Error);
  const Density1D d3 = make_power_tail(3.0);
  CHECK(d3.pdf(0.0) == doctest::Approx(0.5).epsilon(1e-14));
  // closed form for p=3: F(x) = (1 + x/√(1+x²))/2
  for (double x : {-5.0, -0.4, 0.9, 12.0})
    CHECK(d3.cdf(x) == doctest::Approx(0.5 * (1 + x / std::sqrt(1 + x * x))).epsilon(1e-12));
  for (double p : {2.0, 2.5, 3.0}) {
    const Density1D d = make_power_tail(p);
    QuadOptions o;
    o.abs_tol = 1e-12;
    const double mass = integrate_from_minus_inf([&](double x) { return d.pdf(x); }, 0.0, o).value +
                        integrate_to_inf([&](double x) { return d.pdf(x); }, 0.0, o).value;
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("quantile inverse and symmetry") {
  for (double p : {2.0, 2.4, 3.0}) {
    const Density1D d = make_power_tail(p);
    for (int i = -40; i <= 40; ++i) {
      const double x = 0.37 * i + 0.011;
      CHECK(std::abs(d.quantile(d.cdf(x)) - x) <= 1e-10 * std::max(1.0, std::abs(x)));
      CHECK(d.pdf(-x) == doctest::Approx(d.pdf(x)).epsilon(1e-15));
    }
    for (double t : {1e-6, 0.01, 0.2, 0.4999}) CHECK(d.quantile(1 - t) == doctest::Approx(-d.quantile(t)).epsilon(1e-9));
  }
  const Density1D d = make_power_tail(2.0);
  CHECK_THROWS_AS(d.quantile(0.0), Error);
  CHECK_THROWS_AS(d.quantile(1.0), Error);
}

TEST_CASE("cdf derivative equals pdf at random points") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-20.0, 20.0);
  for (double p : {2.0, 2.7}) {
    const Density1D d = make_power_tail(p);
    for (int i = 0; i < 100; ++i) {
      const double x = U(rng);
      const double h = 1e-5;
      const double fd = (d.cdf(x + h) - d.cdf(x - h)) / (2 * h);
      CHECK(std::abs(fd - d.pdf(x)) < 1e-8);
      const double fd2 = (d.pdf(x + h) - d.pdf(x - h)) / (2 * h);
      CHECK(std::abs(fd2 - d.dpdf(x)) < 1e-8);
    }
  }
}

TEST_CASE("tail hypothesis") {
  const Density1D d = make_power_tail(2.0);
  // |x|³/(π(1+x²)) is increasing; it is 0.859 at |x| = 3 and crosses 1 near |x| = 3.35.
  CHECK(tail_check(d, 3.0, 1e4).min_value == doctest::Approx(27.0 / (10.0 * kPi)).epsilon(1e-12));
  const TailCheck tc = tail_check(d, 3.5, 1e4);
  CHECK(tc.min_value >= 1.0);
  CHECK(tail_check(make_power_tail(3.0), 3.0, 1e4).min_value > 0.0);
}

TEST_CASE("kinetic energy of the cauchy density") {
  const Density1D d = make_power_tail(2.0);
  const double k50 = kinetic_energy_1d(d, -50, 50);
  const double k100 = kinetic_energy_1d(d, -100, 100);
  CHECK(std::isfinite(k50));
  CHECK(std::abs(k100 - k50) < 1e-6);
  // closed form: ∫ x²/(2π(1+x²)³) dx = 1/16
  CHECK(kinetic_energy_1d(d, -1e4, 1e4) == doctest::Approx(1.0 / 16.0).epsilon(1e-8));
}

TEST_CASE("tabulated gaussian") {
  const double sigma = 0.8, mu = 0.3;
  std::vector<double> xs, fs;
  for (int i = 0; i <= 1200; ++i) {
    const double x = mu - 8 * sigma + 16 * sigma * i / 1200.0;
    xs.push_back(x);
    fs.push_back(std::exp(-0.5 * (x - mu) * (x - mu) / (sigma * sigma)) / (sigma * std::sqrt(2 * kPi)));
  }
  const Density1D d = make_tabulated(xs, fs);
  CHECK(std::abs(d.cdf(0.0) - 0.5) < 1e-12);  // recentred on the median
  CHECK(d.pdf(0.0) == doctest::Approx(1.0 / (sigma * std::sqrt(2 * kPi))).epsilon(1e-6));
  CHECK(d.quantile(d.cdf(0.9)) == doctest::Approx(0.9).epsilon(1e-10));
  for (int i = 0; i < 50; ++i) {
    const double x = -3.0 + 0.121 * i;
    CHECK(d.pdf(x) > 0.0);
    const double h = 1e-6;
    CHECK(std::abs((d.cdf(x + h) - d.cdf(x - h)) / (2 * h) - d.pdf(x)) < 1e-7);
  }
  // Fisher information of N(μ,σ²) is 1/σ², so KE = 1/(8σ²).
  const double ke = kinetic_energy_1d(d, -8 * sigma, 8 * sigma);
  CHECK(ke == doctest::Approx(1.0 / (8 * sigma * sigma)).epsilon(2e-4));
}

TEST_CASE("tabulated csv and flat patch") {
  const char* path = "zpo_test_table.csv";
  {
    std::ofstream out(path);
    out << "x,pdf\n";
    for (int i = 0; i <= 40; ++i) {
      const double x = -4 + 0.2 * i;
      const double f = std::abs(x) <= 1.0 ? 0.5 : 0.5 * std::exp(-4 * (std::abs(x) - 1) * (std::abs(x) - 1));
      out << x << "," << f << "\n";
    }
  }
  const Density1D d = load_tabulated_csv(path);
  std::remove(path);
  // The flat patch contributes nothing to the kinetic energy.
  CHECK(kinetic_energy_1d(d, -0.75, 0.75) < 1e-20);
  CHECK(kinetic_energy_1d(d, -3, 3) > 0.0);
  CHECK(density_from_json({{"kind", "power_tail"}, {"p", 2.0}}).pdf(0) == doctest::Approx(1 / kPi));
  CHECK_THROWS_AS(density_from_json({{"kind", "gaussian"}}), Error);
  CHECK_THROWS_AS(load_tabulated_csv("/nonexistent/table.csv"), Error);
}

TEST_CASE("tabulated rejects bad tables") {
  CHECK_THROWS_AS(make_tabulated({0, 1, 2, 3}, {1, 2, -1, 1}), Error);
  CHECK_THROWS_AS(make_tabulated({0, 1, 1, 3}, {1, 2, 2, 1}), Error);
  CHECK_THROWS_AS(make_tabulated({0, 1, 2, 3}, {2, 1, 1, 2}), Error);
}

TEST_CASE("scaled density") {
  const Density1D d = make_power_tail(2.0).scaled(3.0);
  CHECK(d.pdf(0.5) == doctest::Approx(3.0 / (kPi * (1 + 2.25))).epsilon(1e-14));
  CHECK(d.quantile(0.75) == doctest::Approx(1.0 / 3.0).epsilon(1e-13));
}
