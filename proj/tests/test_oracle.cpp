#include <doctest.h>

#include <cmath>
#include <random>

#include "zpo/error.hpp"
#include "zpo/oracle.hpp"

using namespace zpo;

namespace {

const CoulombOT& cauchy() {
  static const CoulombOT sol(make_power_tail(2.0));
  return sol;
}

GridField2D random_field(const Axis& ax, std::mt19937_64& rng, int kind) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  GridField2D f(ax, ax);
  if (kind % 5 == 4) {
    for (double& v : f.v) v = 2.0 * U(rng) - 1.0;
    return f;
  }
  const int bumps = 1 + int(U(rng) * 6);
  for (int b = 0; b < bumps; ++b) {
    const double cx = ax.lo + U(rng) * (ax.hi() - ax.lo), cy = ax.lo + U(rng) * (ax.hi() - ax.lo);
    const double s = 0.05 + U(rng), a = 2.0 * U(rng) - 1.0;
    for (int i = 0; i < ax.n; ++i)
      for (int j = 0; j < ax.n; ++j) {
        const double dx = ax.x(i) - cx, dy = ax.x(j) - cy;
        f.at(i, j) += a * std::exp(-(dx * dx + dy * dy) / (2.0 * s * s));
      }
  }
  return f;
}

GridField2D squared(GridField2D f) {
  for (double& v : f.v) v *= v;
  return f;
}

Axis box_x(int n) { return {-4.0, 3.75 / n, n}; }
Axis box_y(int n) { return {0.25, 3.75 / n, n}; }

}  // namespace

TEST_CASE("oscillator ground state is tr(A) sqrt(eps)") {
  const Axis ax = Axis::centered(1.5, 512);
  const Sym2 A{1.0, 0.0, 2.0};
  const GridOperator op = oscillator_operator(A, 1e-2, ax, ax);
  CHECK(op.point_symmetric);
  const Eigenpair e = lowest_eigenpair_multilevel(op);
  REQUIRE(e.converged);
  CHECK(std::abs(e.value - 0.3) / 0.3 < 1e-2);

  // Rayleigh minimality against the Gaussian and a few random trials on the same grid
  const OscillatorEnergy g = oscillator_energy(gaussian_trial(A, 1e-2, ax, ax), A, 1e-2);
  CHECK(e.value <= g.ratio + 1e-12);
  std::mt19937_64 rng(7);
  for (int k = 0; k < 5; ++k) CHECK(e.value <= oscillator_energy(random_field(ax, rng, k), A, 1e-2).ratio);
}

TEST_CASE("oscillator inequality on random fields") {
  const Sym2 A{1.0, 0.0, 2.0};
  const double eps = 1e-2;
  const Axis fine = Axis::centered(1.5, 512);
  const OscillatorEnergy g = oscillator_energy(gaussian_trial(A, eps, fine, fine), A, eps);
  CHECK(g.exact == doctest::Approx(0.3));
  CHECK(std::abs(g.ratio - 0.3) / 0.3 < 1e-2);
  CHECK(g.C == doctest::Approx(std::sqrt(2.0)));

  const Axis ax = Axis::centered(2.0, 256);
  std::mt19937_64 rng(20240611);
  for (int k = 0; k < 50; ++k) {
    const OscillatorEnergy o = oscillator_energy(random_field(ax, rng, k), A, eps);
    CHECK(o.ratio >= o.bound);
  }
  CHECK_THROWS_AS(oscillator_energy(GridField2D(ax, ax), A, eps), Error);
  CHECK_THROWS_AS(oscillator_energy(gaussian_trial(A, eps, ax, ax), Sym2{1.0, 0.0, 0.0}, eps), Error);
}

TEST_CASE("eigen solve on a masked operator stays on the active set") {
  const Axis ax = Axis::centered(1.5, 64);
  GridOperator op = oscillator_operator(Sym2{1.0, 0.0, 1.0}, 1e-2, ax, ax);
  op.active.assign(op.size(), 1);
  for (int i = 0; i < 64; ++i) op.active[size_t(i) * 64 + 10] = 0;
  detect_point_symmetry(op);
  CHECK_FALSE(op.point_symmetric);
  const Eigenpair e = lowest_eigenpair(op);
  REQUIRE(e.converged);
  for (int i = 0; i < 64; ++i) CHECK(e.vec[size_t(i) * 64 + 10] == 0.0);
  // pinning a line can only raise the bottom of the spectrum
  const Eigenpair free = lowest_eigenpair(oscillator_operator(Sym2{1.0, 0.0, 1.0}, 1e-2, ax, ax));
  CHECK(e.value >= free.value - 1e-10);
}

TEST_CASE("Cauchy ground state approaches min of half sqrt q") {
  const double X = cauchy().density().quantile(0.95);
  const Axis ax = Axis::centered(X, 512);
  const double eps = 1e-3;
  const GroundStateResult g = ground_state(cauchy(), eps, ax, ax);
  REQUIRE(g.converged);
  // the graph ends at the grid edge, where q is smallest
  const PredictedLimit pl = predicted_limit(cauchy(), ax, ax);
  CHECK(std::abs(std::abs(pl.x) - X) < 1e-3);
  CHECK(pl.value == doctest::Approx(0.5 * std::sqrt(cauchy().q(X))).epsilon(1e-6));
  CHECK(g.eigenvalue > g.predicted_limit);
  CHECK((g.eigenvalue - g.predicted_limit) / g.predicted_limit < 0.1);

  const PotentialField pot = make_potential(cauchy(), ax, ax);
  const GridField2D dens = squared(g.eigenfield);
  CHECK(dens.mass() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(e_eps(dens, pot, eps).e == doctest::Approx(g.eigenvalue).epsilon(1e-9));
  for (double t : {0.01, 0.1}) {
    const MarkovCheck m = markov_check(g, pot, eps, t);
    CHECK(m.ok);
    CHECK(m.mass_above <= m.bound);
  }
  // coarser grid: within the O(h²) discretisation error
  const GroundStateResult c = ground_state(make_potential(cauchy(), Axis::centered(X, 256), Axis::centered(X, 256)), eps);
  CHECK(std::abs(c.eigenvalue - g.eigenvalue) / g.eigenvalue < 0.02);
}

TEST_CASE("ground state decreases as eps halves") {
  double prev = 1e300;
  double limit = 0.0;
  for (double eps : {1e-3, 5e-4, 2.5e-4}) {
    const GroundStateResult g = ground_state(cauchy(), eps, box_x(256), box_y(256));
    REQUIRE(g.converged);
    CHECK(g.eigenvalue < prev);
    CHECK(g.eigenvalue > g.predicted_limit);
    prev = g.eigenvalue;
    limit = g.predicted_limit;
  }
  CHECK(limit == doctest::Approx(0.5 * std::sqrt(cauchy().q(-4.0))).epsilon(1e-6));
}

TEST_CASE("ground state errors") {
  const double X = cauchy().density().quantile(0.95);
  const Axis ax = Axis::centered(X, 64);
  try {
    ground_state(cauchy(), 1e-4, ax, ax);
    FAIL("expected a resolution error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::resolution);
  }
  const Axis far{10.0, 0.1, 16};
  CHECK_THROWS_AS(predicted_limit(cauchy(), far, far), Error);
  EigenOptions tight;
  tight.max_outer = 1;
  tight.tol = 1e-14;
  CHECK_THROWS_AS(ground_state(make_potential(cauchy(), ax, ax), 1e-2, tight), Error);
}

TEST_CASE("constrained minimum with V = 0 is the product plan") {
  const Axis ax = Axis::centered(3.0, 32);
  const GridField1D rho =
      sample_cells([](double x) { return 0.4 * std::exp(-0.5 * x * x) + 0.002 * (1.0 + std::sin(3.0 * x)); }, ax);
  const PotentialField pot = make_potential([](double, double) { return 0.0; }, ax, ax);
  const double eps = 1e-2;
  const ConstrainedResult r = constrained_min(pot, rho, rho, eps);
  REQUIRE(r.converged);
  CHECK(r.kkt <= 1e-5);
  CHECK(r.marginal_residual <= 1e-8);
  CHECK(r.plan.min() >= 0.0);
  const double expect = 2.0 * std::sqrt(eps) * kinetic_energy(rho);
  CHECK(std::abs(r.energy.e - expect) / expect < 1e-5);
  CHECK(r.dual_value <= r.energy.e + 1e-12);
  // plan close to ρ⊗ρ/m
  const double m = rho.mass();
  double d = 0.0;
  for (int i = 0; i < ax.n; ++i)
    for (int j = 0; j < ax.n; ++j) d += std::abs(r.plan.at(i, j) - rho.v[i] * rho.v[j] / m);
  CHECK(d * r.plan.cell_area() < 1e-3 * m);
}

TEST_CASE("constrained minimum on the Cauchy potential") {
  const double X = cauchy().density().quantile(0.95);
  const Axis ax = Axis::centered(X, 32);
  const double eps = 1e-2;
  const PotentialField pot = make_potential(cauchy(), ax, ax);
  const GridField1D rho = sample_density(cauchy().density(), ax);
  const ConstrainedResult r = constrained_min(pot, rho, rho, eps);
  REQUIRE(r.converged);
  CHECK(r.kkt <= 1e-5);
  CHECK(r.marginal_residual <= 1e-8);
  CHECK(r.plan.min() >= 0.0);
  const GroundStateResult g = ground_state(pot, eps);
  CHECK(r.energy.e >= r.mass * g.eigenvalue);
  // the potential part alone cannot beat the discrete OT cost
  CHECK(r.energy.pe >= discrete_coulomb_ot(rho, pot).cost - 1e-12);
  // and no feasible plan we can write down does better: the product plan
  GridField2D prod(ax, ax);
  for (int i = 0; i < ax.n; ++i)
    for (int j = 0; j < ax.n; ++j) prod.at(i, j) = rho.v[i] * rho.v[j] / r.mass;
  CHECK(r.energy.e <= e_eps(prod, pot, eps).e);
}

TEST_CASE("constrained minimum rejects bad input") {
  const Axis big = Axis::centered(3.0, 65);
  const PotentialField pb = make_potential([](double, double) { return 0.0; }, big, big);
  const GridField1D rb(big, 1.0);
  CHECK_THROWS_AS(constrained_min(pb, rb, rb, 1e-2), Error);
  const Axis ax = Axis::centered(3.0, 16);
  const PotentialField p = make_potential([](double, double) { return 0.0; }, ax, ax);
  GridField1D a(ax, 1.0), b(ax, 1.1);
  CHECK_THROWS_AS(constrained_min(p, a, b, 1e-2), Error);
  b.v.assign(16, 1.0);
  b.v[3] = -1.0;
  b.v[4] = 3.0;
  CHECK_THROWS_AS(constrained_min(p, a, b, 1e-2), Error);
}

TEST_CASE("delta construction") {
  CHECK(std::abs(delta_h(20.0) - 1.0) < 1e-3);
  CHECK(std::abs(delta_h(5.0) - 1.0) > std::abs(delta_h(10.0) - 1.0));

  for (double eps : {1e-3, 1e-5}) {
    const double eta = delta_eta(eps);
    CHECK(std::sqrt(eta) / (-2.0 * std::log(eta)) == doctest::Approx(std::sqrt(eps)).epsilon(1e-10));
  }
  CHECK_THROWS_AS(delta_eta(0.05), Error);

  const Sym2 B{1.0, 0.0, 0.0};
  auto V = [](Vec2 x) { return 0.5 * x.x * x.x; };
  const auto recs = delta_recovery(B, V, {1e-3, 1e-4, 1e-5});
  REQUIRE(recs.size() == 3);
  for (size_t k = 0; k < recs.size(); ++k) {
    CHECK(recs[k].target == doctest::Approx(0.5));
    CHECK(recs[k].energy <= recs[k].bound + 1e-12);
    CHECK(recs[k].energy > recs[k].target);
    if (k > 0) CHECK(recs[k].energy < recs[k - 1].energy);
  }
  CHECK(std::abs(recs[2].energy - 0.5) / 0.5 < 0.05);

  // flat Hessian: target 0, energies shrink with eps
  const auto flat = delta_recovery(Sym2{}, [](Vec2) { return 0.0; }, {1e-3, 1e-5, 1e-7});
  CHECK(flat[0].target == 0.0);
  CHECK(flat[1].energy < flat[0].energy);
  CHECK(flat[2].energy < flat[1].energy);
  CHECK(flat[2].energy < 0.05);

  // nondegenerate quadratic: the bound and the energy both sit near ½ tr √B
  const Sym2 B2{1.0, 0.0, 4.0};
  const auto nd = delta_recovery(B2, [](Vec2 x) { return 0.5 * (x.x * x.x + 4.0 * x.y * x.y); }, {1e-6});
  CHECK(nd[0].target == doctest::Approx(1.5));
  CHECK(std::abs(nd[0].energy - 1.5) / 1.5 < 0.05);
  CHECK_THROWS_AS(delta_recovery(Sym2{-1.0, 0.0, 1.0}, V, {1e-4}), Error);
}
