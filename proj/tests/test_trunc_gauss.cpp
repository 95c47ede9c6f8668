#include <doctest.h>

#include <cmath>
#include <random>

#include "zpo/error.hpp"
#include "zpo/numerics.hpp"
#include "zpo/trunc_gauss.hpp"

using namespace zpo;

namespace {
const double kPi = std::acos(-1.0);

double g_by_quadrature(double alpha, double N) {
  const double r = std::sqrt(N / alpha), c = std::exp(-0.5 * N);
  auto f = [&](double t) {
    const double d = std::exp(-0.5 * alpha * t * t) - c;
    return d > 0 ? d * d : 0.0;
  };
  return integrate(f, -r, r).value;
}

// ½∫|∇√Γ|² by tensor quadrature in the eigenframe, gradient of √Γ by Richardson differences.
double ke_quadrature(const TruncatedGaussian& k) {
  const double W = k.half_w(), Z = k.half_z();
  const GaussRule& g = gauss_legendre(20);
  auto root = [&](double w, double z) { return std::sqrt(k.h1(w) * k.h2(z)); };
  auto d = [&](auto f, double x, double h) {
    const double d1 = (f(x + h) - f(x - h)) / (2 * h);
    const double d2 = (f(x + h / 2) - f(x - h / 2)) / h;
    return (4 * d2 - d1) / 3;
  };
  CompensatedSum s;
  const int p = 16;
  for (int i = 0; i < p; ++i)
    for (int a = 0; a < 20; ++a) {
      const double w = -W + 2 * W * (i + 0.5 * (g.nodes[a] + 1)) / p;
      const double ww = W / p * g.weights[a];
      for (int j = 0; j < p; ++j)
        for (int b = 0; b < 20; ++b) {
          const double z = -Z + 2 * Z * (j + 0.5 * (g.nodes[b] + 1)) / p;
          const double wz = Z / p * g.weights[b];
          const double gw = d([&](double t) { return root(t, z); }, w, 1e-4 * W);
          const double gz = d([&](double t) { return root(w, t); }, z, 1e-4 * Z);
          s.add(ww * wz * 0.5 * (gw * gw + gz * gz));
        }
    }
  return s.value();
}
}  // namespace

TEST_CASE("normalisation constant") {
  CHECK(g_alpha_n(1.0, kNoTruncation) == doctest::Approx(std::sqrt(kPi)).epsilon(1e-15));
  CHECK(g_alpha_n(4.0, kNoTruncation) == doctest::Approx(std::sqrt(kPi) / 2).epsilon(1e-15));
  for (double alpha : {0.3, 1.0, 20.0, 70.0})
    for (double N : {3.0, 8.0, 12.0, 30.0})
      CHECK(std::abs(g_alpha_n(alpha, N) - g_by_quadrature(alpha, N)) < 1e-10);
  for (double N : {3.0, 6.0, 12.0, 24.0}) CHECK(g_alpha_n(2.0, N) < g_alpha_n(2.0, kNoTruncation));
  CHECK_THROWS_AS(g_alpha_n(0.0, 5.0), Error);
}

TEST_CASE("profile derivatives") {
  for (double N : {5.0, kNoTruncation})
    for (double t : {-1.7, -0.3, 0.0, 0.8, 2.1}) {
      const double h = 1e-5;
      CHECK(profile_d1(t, N) == doctest::Approx((profile(t + h, N) - profile(t - h, N)) / (2 * h)).epsilon(1e-7));
      CHECK(profile_d2(t, N) ==
            doctest::Approx((profile_d1(t + h, N) - profile_d1(t - h, N)) / (2 * h)).epsilon(1e-7));
    }
  CHECK(profile(3.0, 8.0) == 0.0);
}

TEST_CASE("kernel construction") {
  // A with eigenvalue 1/√2 along (1,0) gives q = 1/2; A/√ε + I/β at ε = 1e-4, β = 0.05
  const double l = 1 / std::sqrt(2.0);
  const TruncatedGaussian k = make_kernel({l, 0, 0}, 1e-4, 0.05, 12);
  CHECK(k.a() == doctest::Approx(l * 100 + 20).epsilon(1e-14));
  CHECK(k.b() == doctest::Approx(20).epsilon(1e-14));

  // kernel of A along (1,1) → θ = π/4
  const TruncatedGaussian k2 = make_kernel({0.5, -0.5, 0.5}, 1e-2, 0.1, 10);
  CHECK(std::abs(k2.theta()) == doctest::Approx(kPi / 4).epsilon(1e-12));
  const Sym2 M = k2.M();
  CHECK(M.xx == doctest::Approx(0.5 * 10 + 10).epsilon(1e-12));
  CHECK(M.xy == doctest::Approx(-0.5 * 10).epsilon(1e-12));

  const TruncatedGaussian k0 = make_kernel({0, 0, 0}, 1e-2, 0.1, 10);
  CHECK(k0.a() == doctest::Approx(10));
  CHECK(k0.b() == doctest::Approx(10));
  CHECK(k0.theta() == 0.0);

  CHECK_THROWS_AS(make_kernel({1, 0, 1}, 1e-2, 0.1, 10), Error);
  CHECK_THROWS_AS(make_kernel({1, 0, 0}, 1e-2, 0.0, 10), Error);
  CHECK_THROWS_AS(TruncatedGaussian(1, 1, 0, 2.0), Error);

  const TruncatedGaussian r = TruncatedGaussian::from_matrix({3, 1, 2}, 9);
  const Sym2 Mr = r.M();
  CHECK(Mr.xx == doctest::Approx(3));
  CHECK(Mr.xy == doctest::Approx(1));
  CHECK(Mr.yy == doctest::Approx(2));
}

TEST_CASE("unit mass and symmetry") {
  const TruncatedGaussian k(40, 6, 0.7, 9, {0.3, -1.2});
  const Interval sx = k.support_x();
  double mass = 0;
  const GaussRule& g = gauss_legendre(8);
  const int p = 200;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < 8; ++j) {
      const double x = sx.lo + sx.length() * (i + 0.5 * (g.nodes[j] + 1)) / p;
      mass += sx.length() / p * 0.5 * g.weights[j] * k.marginal_x(x);
    }
  CHECK(mass == doctest::Approx(1).epsilon(1e-9));
  for (double dx : {0.05, 0.2})
    for (double dy : {-0.1, 0.3})
      CHECK(k(0.3 + dx, -1.2 + dy) == doctest::Approx(k(0.3 - dx, -1.2 - dy)).epsilon(1e-14));
}

TEST_CASE("kinetic energy") {
  CHECK(TruncatedGaussian(2, 2, 0, kNoTruncation).ke() == doctest::Approx(1.0).epsilon(1e-15));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.5, 30), T(-1.5, 1.5);
  for (int i = 0; i < 4; ++i) {
    const TruncatedGaussian k(U(rng), U(rng), T(rng), 8);
    CHECK(std::abs(k.ke() - ke_quadrature(k)) < 1e-6 * k.ke());
  }
}

TEST_CASE("truncation constants") {
  const TruncationReport r = truncation_error_report(70, 20, 12);
  CHECK(r.g_strict);
  CHECK(r.max_constant() <= 10);
  double prev_l1 = 1e300;
  for (double N : {4.0, 8.0, 12.0, 16.0, 20.0}) {
    const TruncationReport t = truncation_error_report(70, 20, N, 0.4);
    CHECK(t.g_strict);
    CHECK(t.max_constant() <= 20);
    CHECK(t.l1 < prev_l1);
    prev_l1 = t.l1;
  }
  for (double ratio : {1.0, 10.0, 1e3, 1e5})
    for (double N : {3.0, 6.0, 12.0, 18.0, 24.0}) {
      const TruncationReport t = truncation_error_report(ratio, 1.0, N, 0.6);
      CHECK(t.g_strict);
      CHECK(t.max_constant() <= 20);
    }
}

TEST_CASE("marginal representation") {
  const TruncatedGaussian k(50, 4, 0.9, 10, {1.0, 2.0});
  const Interval sx = k.support_x();
  for (int i = 0; i < 50; ++i) {
    const double x = sx.lo + sx.length() * (i + 0.5) / 50;
    CHECK(std::abs(k.marginal_x(x) - k.marginal_x_direct(x)) < 1e-8);
  }
  // θ = 0: first marginal is h² itself
  const TruncatedGaussian k0(50, 4, 0.0, 10);
  CHECK(k0.marginal_x(0.2) == doctest::Approx(k0.h2(0.2)).epsilon(1e-12));
  CHECK(k0.marginal_y(0.05) == doctest::Approx(k0.h1(0.05)).epsilon(1e-12));
}

TEST_CASE("derivative bound of the transverse factor") {
  // β^{1/2}‖h²'‖₁ + β‖h²''‖₁ does not depend on β
  std::vector<double> vals;
  for (double beta : {1.0, 0.01, 1e-4}) {
    const TruncatedGaussian k(1 / beta + 100, 1 / beta, 0.3, 10);
    const double Z = k.half_z();
    const double d1 = integrate([&](double z) { return std::abs(k.dh2(z)); }, -Z, Z).value;
    const double d2 = integrate_pieces([&](double z) { return std::abs(k.d2h2(z)); }, {-Z, -Z / 3, 0, Z / 3, Z}).value;
    vals.push_back(std::sqrt(beta) * d1 + beta * d2);
  }
  CHECK(vals[0] <= 10);
  CHECK(vals[1] == doctest::Approx(vals[0]).epsilon(1e-6));
  CHECK(vals[2] == doctest::Approx(vals[0]).epsilon(1e-6));
  // ‖η¹‖∞ √β stays bounded as β → 0
  for (double beta : {0.1, 0.01, 0.001}) {
    const TruncatedGaussian k(1e4 + 1 / beta, 1 / beta, 0.5, 10);
    CHECK(k.marginal_x(0.0) * std::sqrt(beta) < 1.0);
  }
}

TEST_CASE("kernel L1 distance") {
  const TruncatedGaussian k(30, 5, 0.4, 10);
  CHECK(kernel_l1_distance(k, k) < 1e-14);
  const double grad = k.gradient_l1();
  for (double s : {1e-3, 1e-2}) {
    const TruncatedGaussian ks(30, 5, 0.4, 10, {s, 0});
    CHECK(kernel_l1_distance(k, ks) <= grad * s * 1.001);
  }
  // linear response to a matrix perturbation
  const double d1 = kernel_l1_distance(k, TruncatedGaussian(30 * 1.001, 5, 0.4, 10));
  const double d2 = kernel_l1_distance(k, TruncatedGaussian(30 * 1.002, 5, 0.4, 10));
  CHECK(d2 / d1 == doctest::Approx(2.0).epsilon(0.1));
  CHECK(kernel_distance_bound_shape(1e-4, 0.01, 0.1) == doctest::Approx(10 * 0.01 + 100 * 0.001));
}
