#include <doctest.h>

#include <cmath>

#include "zpo/coulomb_ot.hpp"
#include "zpo/error.hpp"

using namespace zpo;

namespace {
const double kPi = std::acos(-1.0);
const CoulombOT& cauchy() {
  static const CoulombOT sol(make_power_tail(2.0));
  return sol;
}
double u_exact(double x) { return kPi / 8 - 0.5 * (std::atan(std::abs(x)) - std::abs(x) / (1 + x * x)); }
// Reference ½∫√q ρ for the Cauchy density, 30-digit quadrature of the closed-form q.
const double kFzpoCauchy = 0.316950780082823465;
}  // namespace

TEST_CASE("optimal map") {
  const CoulombOT& s = cauchy();
  CHECK(s.T(2.0) == doctest::Approx(-0.5).epsilon(1e-14));
  CHECK(s.T(s.T(-3.7)) == doctest::Approx(-3.7).epsilon(1e-12));
  const Density1D& d = s.density();
  CHECK(d.cdf(s.T(-1.0)) - d.cdf(-1.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(s.T(0.0), Error);
  for (int i = 1; i <= 100; ++i) {
    const double x = -10 + 9.9 * (i - 1) / 99.0;
    CHECK(std::abs(s.T(x) + 1 / x) < 1e-12);
    CHECK(std::abs(s.T(-x) - 1 / x) < 1e-12);
    CHECK(std::abs(s.T(s.T(x)) - x) < 1e-8);
    CHECK(std::abs(d.cdf(s.T(x)) - d.cdf(x) - 0.5) < 1e-10);
    CHECK(s.dT(x) == doctest::Approx(1 / (x * x)).epsilon(1e-11));
    CHECK(s.d2T(x) == doctest::Approx(-2 / (x * x * x)).epsilon(1e-9));
  }
  CHECK(s.T(-1e-8) == doctest::Approx(1e8).epsilon(1e-7));
}

TEST_CASE("kantorovich potential") {
  const CoulombOT& s = cauchy();
  CHECK(s.du(-1.0) == doctest::Approx(0.25).epsilon(1e-13));
  CHECK(std::abs(s.ddu(1.0)) < 1e-12);
  CHECK(std::abs(s.ddu(-1.0)) < 1e-12);
  CHECK(s.u0() == doctest::Approx(kPi / 8).epsilon(1e-11));
  for (double x : {-7.0, -2.0, -0.3, 0.2, 1.5, 6.0}) {
    CHECK(s.u(x) == doctest::Approx(u_exact(x)).epsilon(1e-11));
    const double ax = std::abs(x);
    CHECK(s.ddu(x) == doctest::Approx(2 * ax * (x * x - 1) / std::pow(1 + x * x, 3)).epsilon(1e-10));
  }
  const double x = -2.0;
  CHECK(std::abs(s.u(x) + s.u(s.T(x)) - 1 / std::abs(x - s.T(x))) < 1e-12);
}

TEST_CASE("effective potential and hessian") {
  const CoulombOT& s = cauchy();
  CHECK(std::abs(s.V(-1, 1)) < 1e-12);
  CHECK(s.q(-1.0) == doctest::Approx(0.5).epsilon(1e-10));
  const Vec2 g = s.gradV(-1, 1);
  CHECK(std::abs(g.x) < 1e-12);
  CHECK(std::abs(g.y) < 1e-12);
  CHECK_THROWS_AS(s.V(0.3, 0.3), Error);
  const DomainH dom = s.domain(4.0);
  for (const Interval& iv : dom.omega)
    for (int k = 0; k < 100; ++k) {
      const double x = iv.lo + iv.length() * k / 99.0;
      const double y = s.T(x);
      const Sym2 h = s.hess(x, y);
      const Vec2 kv = h.apply({1.0, s.dT(x)});
      CHECK(norm(kv) <= 1e-6 * h.frobenius());
      const Sym2 A = s.sqrtA(x);
      const Sym2 A2 = square(A);
      CHECK(std::abs(A2.xx - h.xx) + std::abs(A2.xy - h.xy) + std::abs(A2.yy - h.yy) < 1e-8);
      CHECK(std::abs(s.q(x) - h.trace()) < 1e-14);
      CHECK(norm(s.gradV(x, y)) <= 1e-7 * (1 + h.frobenius()));
      const double t = std::abs(x);
      CHECK(s.q(x) == doctest::Approx(2 * t * (1 + t * t * t * t) / std::pow(1 + t * t, 3)).epsilon(1e-9));
    }
  for (const Interval& iv : dom.omega_p)
    for (int k = 0; k < 50; ++k) CHECK(s.q(iv.lo + iv.length() * k / 49.0) > 0.0);
}

TEST_CASE("V nonnegative away from the diagonal") {
  const CoulombOT& s = cauchy();
  double vmin = 1.0;
  for (int i = 0; i < 60; ++i)
    for (int j = 0; j < 60; ++j) {
      const double x = -6 + 12 * (i + 0.5) / 60, y = -6 + 12 * (j + 0.37) / 60;
      if (std::abs(x - y) < 1e-3) continue;
      vmin = std::min(vmin, s.V(x, y));
    }
  CHECK(vmin >= -1e-8);
}

TEST_CASE("invariant domain") {
  const CoulombOT& s = cauchy();
  const DomainH dom = s.domain(4.0);
  CHECK(dom.rH == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(dom.omega[0].lo == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(dom.omega[0].hi == doctest::Approx(-0.25).epsilon(1e-12));
  CHECK(s.T(dom.omega[1].lo) == doctest::Approx(dom.omega[0].lo).epsilon(1e-12));
  CHECK(s.T(dom.omega[1].hi) == doctest::Approx(dom.omega[0].hi).epsilon(1e-12));
  const Density1D& d = s.density();
  const double mneg = d.cdf(dom.omega[0].hi) - d.cdf(dom.omega[0].lo);
  const double mpos = d.cdf(dom.omega[1].hi) - d.cdf(dom.omega[1].lo);
  CHECK(std::abs(mneg - mpos) < 1e-10);
  for (int c = 0; c < 2; ++c) {
    CHECK(dom.omega_p[c].lo <= dom.omega[c].lo);
    CHECK(dom.omega_p[c].hi >= dom.omega[c].hi);
  }
  CHECK(s.diagonal_gap(dom) == doctest::Approx(2.0).epsilon(1e-6));
  const LConstant L = s.L(dom);
  CHECK(std::isfinite(L.value));
  CHECK(L.value >= L.inv_q_max);
  const LConstant Lf = s.L(dom, 1601);
  CHECK(Lf.ddu_max == doctest::Approx(L.ddu_max).epsilon(1e-3));
  CHECK_THROWS_AS(s.domain(0.5), Error);
}

TEST_CASE("duality residual on the invariant domain") {
  const CoulombOT& s = cauchy();
  const DomainH dom = s.domain(4.0);
  double worst = 0.0;
  for (const Interval& iv : dom.omega)
    for (int k = 0; k < 200; ++k) {
      const double x = iv.lo + iv.length() * k / 199.0;
      worst = std::max(worst, std::abs(s.u(x) + s.u(s.T(x)) - 1 / std::abs(x - s.T(x))));
    }
  CHECK(worst < 1e-7);
}

TEST_CASE("functionals") {
  const CoulombOT& s = cauchy();
  const FunctionalValue fot = f_ot(s);
  CHECK(fot.value == doctest::Approx(1 / kPi).epsilon(1e-9));
  const FunctionalValue neg = f_ot(s, Interval{-1e9, 0.0});
  const FunctionalValue pos = f_ot(s, Interval{0.0, 1e9});
  CHECK(neg.value == doctest::Approx(pos.value).epsilon(1e-9));
  const FunctionalValue win = f_ot(s, Interval{-5.0, 5.0});
  CHECK(win.tail > 0.0);
  CHECK(win.total() == doctest::Approx(1 / kPi).epsilon(1e-9));
  // dilation: F_OT(λρ(λ·)) = λ F_OT(ρ)
  const CoulombOT s3(make_power_tail(2.0).scaled(3.0));
  CHECK(f_ot(s3).value == doctest::Approx(3 / kPi).epsilon(1e-8));
  const double up = u_pairing(s);
  CHECK(std::abs(up - fot.value) < 1e-7);

  const FunctionalValue fz = f_zpo(s);
  CHECK(fz.value == doctest::Approx(kFzpoCauchy).epsilon(1e-8));
  // integrand at x=-1
  CHECK(0.5 * std::sqrt(s.q(-1)) * s.density().pdf(-1) ==
        doctest::Approx(0.5 * std::sqrt(0.5) / (2 * kPi)).epsilon(1e-10));
  // a constant weight w ≡ 1 reproduces F_ZPO
  CHECK(f_zpo_weighted(s, [](double) { return 1.0; }, {}) == doctest::Approx(fz.value).epsilon(1e-9));
}

TEST_CASE("quadratic growth") {
  const CoulombOT& s = cauchy();
  const GrowthReport r = quadratic_growth_check(s, 4.0);
  CHECK(r.samples > 0);
  CHECK(r.excluded > 0);
  CHECK(r.max_graph_V < 1e-10);
  CHECK(std::isfinite(r.C));
  CHECK(r.min_ratio > 0.0);
  // Taylor limit at (-1, 1)
  const double nrm = std::sqrt(2.0);
  for (double sft : {1e-2, 1e-3}) {
    const double ratio = s.V(-1 - sft / nrm, 1 + sft / nrm) / (sft * sft);
    CHECK(ratio == doctest::Approx(0.25).epsilon(10 * sft));
  }
}

TEST_CASE("p = 3 density") {
  const CoulombOT s(make_power_tail(3.0));
  for (double x : {-3.0, -0.5, 0.8}) {
    CHECK(s.T(s.T(x)) == doctest::Approx(x).epsilon(1e-10));
    CHECK(std::abs(s.u(x) + s.u(s.T(x)) - 1 / std::abs(x - s.T(x))) < 1e-9);
  }
  CHECK(f_ot(s).value == doctest::Approx(u_pairing(s)).epsilon(1e-7));
}
