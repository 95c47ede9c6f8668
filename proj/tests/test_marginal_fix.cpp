#include <doctest.h>

#include <cmath>
#include <random>

#include "zpo/error.hpp"
#include "zpo/marginal_fix.hpp"
#include "zpo/numerics.hpp"

using namespace zpo;

namespace {

const double kPi = std::acos(-1.0);

const CoulombOT& cauchy() {
  static const CoulombOT sol(make_power_tail(2.0));
  return sol;
}

GridField2D random_plan(const Axis& ax, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  GridField2D g(ax, ax);
  for (double& v : g.v) v = U(rng) < 0.25 ? 0.0 : U(rng);
  return g;
}

double l1(const GridField2D& a, const GridField2D& b) {
  double s = 0.0;
  for (size_t k = 0; k < a.v.size(); ++k) s += std::abs(a.v[k] - b.v[k]);
  return s * a.cell_area();
}

// Plan carried by the graph of T over [x0, x1] with a smooth bump density; each atom is split
// between the two y cells bracketing T(x) so that its mean sits on the graph.
struct GraphPlan {
  GridField2D pi0;
  GridField1D s1, s2;
};

GraphPlan graph_plan(double h) {
  const CoulombOT& sol = cauchy();
  const double x0 = -1.25, x1 = -0.8;
  const Axis ax{x0 - 0.1, h, int(std::ceil((x1 - x0 + 0.2) / h))};
  const Axis ay{sol.T(x0) - 0.1, h, int(std::ceil((sol.T(x1) - sol.T(x0) + 0.2) / h))};
  GraphPlan g{GridField2D(ax, ay), {}, {}};
  for (int i = 0; i < ax.n; ++i) {
    const double x = ax.x(i);
    if (x <= x0 || x >= x1) continue;
    const double t = (x - x0) / (x1 - x0);
    const double m = std::pow(std::sin(kPi * t), 4);
    const double u = (sol.T(x) - ay.lo) / h - 0.5;
    const int j = int(std::floor(u));
    const double f = u - j;
    g.pi0.at(i, j) += m * (1 - f);
    g.pi0.at(i, j + 1) += m * f;
  }
  g.pi0 = scaled(g.pi0, 1.0 / g.pi0.mass());
  g.s1 = g.pi0.marginal_x();
  g.s2 = g.pi0.marginal_y();
  return g;
}

double pe(const GridField2D& g, const PotentialField& pot) {
  CompensatedSum s;
  for (size_t k = 0; k < g.v.size(); ++k) s.add(g.v[k] * pot.V.v[k]);
  return s.value() * g.cell_area();
}

}  // namespace

TEST_CASE("bump marginal") {
  const double m = integrate(bump_marginal, -1.0, 1.0).value;
  CHECK(m == doctest::Approx(1.0).epsilon(1e-12));
  // marginal of (4/π)(1-|x|²)³ by direct integration
  for (double x : {0.0, 0.3, 0.77}) {
    const double r = std::sqrt(1 - x * x);
    const double d = integrate([&](double y) { return 4 / kPi * std::pow(1 - x * x - y * y, 3); }, -r, r).value;
    CHECK(bump_marginal(x) == doctest::Approx(d).epsilon(1e-12));
  }
  // ½∫|(√θ)'|²
  const double ke = integrate(
      [](double x) {
        const double c = 128.0 / (35.0 * kPi), s = 1 - x * x;
        const double d = std::sqrt(c) * 1.75 * std::pow(s, 0.75) * (-2 * x);
        return 0.5 * d * d;
      },
      -1.0, 1.0).value;
  CHECK(ke == doctest::Approx(kBumpMarginalKE).epsilon(1e-10));
  CHECK(bump_marginal(1.0) == 0.0);
  CHECK(bump_marginal(-1.5) == 0.0);
}

TEST_CASE("bump kernel on the lattice") {
  const Axis ax = Axis::centered(1.0, 40);  // h = 0.05
  const GridField2D K = bump_kernel(0.2, ax);
  CHECK(K.ax.n == 9);
  CHECK(K.mass() == doctest::Approx(1.0).epsilon(1e-14));
  for (int p = 0; p < K.ax.n; ++p)
    for (int q = 0; q < K.ay.n; ++q) {
      CHECK(K.at(p, q) == doctest::Approx(K.at(q, p)).epsilon(1e-15));
      CHECK(K.at(p, q) == doctest::Approx(K.at(K.ax.n - 1 - p, q)).epsilon(1e-15));
    }
  // below one cell: a delta
  const GridField2D D = bump_kernel(0.01, ax);
  CHECK(D.ax.n == 1);
  CHECK(D.at(0, 0) * D.cell_area() == doctest::Approx(1.0));
  CHECK_THROWS_AS(bump_kernel(0.0, ax), Error);
}

TEST_CASE("deconvolution keeps the marginals on random 8x8 plans") {
  std::mt19937_64 rng(20240917);
  const Axis ax = Axis::centered(0.4, 8);  // h = 0.1
  for (int trial = 0; trial < 20; ++trial) {
    const GridField2D pi0 = random_plan(ax, rng);
    const GridField1D s1 = pi0.marginal_x(), s2 = pi0.marginal_y();
    const double eps = std::pow(0.1 + 0.3 * trial / 19.0, 4);  // radius 1..4 cells
    const DeconvolvedPlan dp = deconvolve(pi0, s1, s2, eps);
    CHECK(dp.marginal_error <= 1e-12);
    CHECK(l1_distance(dp.pi_tilde.marginal_x(), s1) <= 1e-12);
    CHECK(l1_distance(dp.pi_tilde.marginal_y(), s2) <= 1e-12);
    CHECK(dp.pi_tilde.min() >= 0.0);
    CHECK(dp.pi_tilde.mass() == doctest::Approx(pi0.mass()).epsilon(1e-13));
  }
}

TEST_CASE("product plans are fixed points") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.1, 1.0);
  const Axis ax = Axis::centered(1.0, 24);
  GridField1D s1(ax), s2(ax);
  for (int i = 0; i < ax.n; ++i) {
    s1.v[i] = U(rng);
    s2.v[i] = U(rng);
  }
  const double m1 = s1.mass();
  const double f2 = m1 / s2.mass();
  for (double& v : s2.v) v *= f2;
  GridField2D prod(ax, ax);
  for (int i = 0; i < ax.n; ++i)
    for (int j = 0; j < ax.n; ++j) prod.at(i, j) = s1.v[i] * s2.v[j] / m1;
  for (double eps : {1e-4, 1e-3, 1e-2}) {
    const double r = std::pow(eps, 0.25);
    const DeconvolvedPlan sep = deconvolve_with(prod, s1, s2, separable_bump_kernel(r, ax));
    CHECK(sep.kernel.ax.n > 1);
    CHECK(l1(sep.pi_tilde, prod) <= 1e-10);
    // the radial kernel does not factor, so the product moves a little (but keeps its marginals)
    const DeconvolvedPlan rad = deconvolve(prod, s1, s2, eps);
    CHECK(l1(rad.pi_tilde, prod) > 1e-6);
    CHECK(l1(rad.pi_tilde, prod) <= 1e-3 * prod.mass());
    CHECK(rad.marginal_error <= 1e-12);
  }
}

TEST_CASE("deconvolution is linear in the plan") {
  std::mt19937_64 rng(3);
  const Axis ax = Axis::centered(0.8, 16);
  const GridField2D pi0 = random_plan(ax, rng);
  const GridField2D two = scaled(pi0, 2.0);
  const DeconvolvedPlan a = deconvolve(pi0, pi0.marginal_x(), pi0.marginal_y(), 1e-2);
  const DeconvolvedPlan b = deconvolve(two, two.marginal_x(), two.marginal_y(), 1e-2);
  CHECK(l1(scaled(a.pi_tilde, 2.0), b.pi_tilde) <= 1e-13 * b.pi_tilde.mass());
  const PotentialField pot = make_potential(cauchy(), ax, ax);
  CHECK(pe(b.pi_tilde, pot) == doctest::Approx(2 * pe(a.pi_tilde, pot)).epsilon(1e-13));
}

TEST_CASE("PE of the deconvolved graph plan scales like sqrt(eps)") {
  const GraphPlan g = graph_plan(1e-3);
  const PotentialField pot = make_potential(cauchy(), g.pi0.ax, g.pi0.ay);
  const double pe0 = pe(g.pi0, pot);
  RemainderPlan rp;
  rp.sigma1 = g.s1;
  rp.sigma2 = g.s2;
  rp.pi0 = g.pi0;
  std::vector<double> le, lp;
  for (double eps : {1e-5, 1e-6, 1e-7, 1e-8}) {
    const DeconvolvedPlan dp = deconvolve(g.pi0, g.s1, g.s2, eps);
    CHECK(dp.marginal_error <= 1e-12);
    const double p = pe(dp.pi_tilde, pot);
    CHECK(pe0 <= 0.01 * p);  // the plan itself sits on the graph up to the lattice
    le.push_back(std::log(eps));
    lp.push_back(std::log(p));
    const DeconvolutionCheck c = deconvolution_pe_bound_check(rp, dp, pot, eps);
    CHECK(c.support_ok);
    CHECK(c.pe_constant < 1.0);
  }
  double mx = 0, my = 0;
  for (size_t k = 0; k < le.size(); ++k) {
    mx += le[k] / le.size();
    my += lp[k] / lp.size();
  }
  double sxy = 0, sxx = 0;
  for (size_t k = 0; k < le.size(); ++k) {
    sxy += (le[k] - mx) * (lp[k] - my);
    sxx += (le[k] - mx) * (le[k] - mx);
  }
  const double slope = sxy / sxx;
  CHECK(slope == doctest::Approx(0.5).epsilon(0.2));
}

TEST_CASE("remainder coupling") {
  const CoulombOT& sol = cauchy();
  const double X = grid_half_width(sol.density(), 0.05);
  const TargetDensity t = make_target(sol, 4.0, X);
  const Axis ax = Axis::centered(X, 512);
  const GridField1D rho = sample_cells([&](double x) { return t.pdf(x); }, ax);
  // empty main plan: σ¹ = σ² = ρw, the coupling follows T
  const DomainH dom = sol.domain(4.0);
  const RemainderPlan rp = remainder_from_marginals(
      rho, rho, [&](double x) { return sol.T(x); }, [&](double x) { return dom.in_omega_p(x); });
  CHECK(l1_distance(rp.pi0.marginal_x(), rho) <= 1e-6);
  CHECK(l1_distance(rp.pi0.marginal_y(), rho) <= 1e-6);
  CHECK(rp.max_shift <= 2 * ax.h);
  const PotentialField pot = make_potential(sol, ax, ax);
  const double p = pe(rp.pi0, pot);
  CHECK(p >= 0.0);
  CHECK(p <= 1e-4);
  GridField1D other = rho;
  other.v[ax.n / 3] += 1e-3 / ax.h;
  CHECK_THROWS_AS(remainder_from_marginals(rho, other, [](double x) { return x; }), Error);
}

TEST_CASE("full recovery on a coarse grid") {
  const CoulombOT& sol = cauchy();
  Overrides ov;
  ov.c_beta = 0.15;
  ov.c_delta = 0.5;
  ov.c_tau = 0.02;
  const double eps = 1e-2;
  const ParameterSchedule s = schedule(eps, 4.0, ov);
  const double X = grid_half_width(sol.density(), 0.05);
  const TargetDensity t = make_target(sol, 4.0, X);
  const Axis ax = Axis::centered(X, 256);
  const Partition part = build_partition(sol, sol.domain(4.0), s.delta);
  MainPlan mp = build_main_plan(sol, part, s, ax, t);
  trim_to_target(mp);
  const PotentialField pot = make_potential(sol, ax, ax);
  const RemainderPlan rp = remainder_plan(mp, part, pot, s);
  CHECK(rp.sigma_min >= -1e-10);
  CHECK(rp.mass == doctest::Approx(mp.target.mass() - mp.gammabar.mass()).epsilon(1e-9));
  CHECK(l1_distance(rp.pi0.marginal_x(), rp.sigma1) <= 1e-6);
  CHECK(l1_distance(rp.pi0.marginal_y(), rp.sigma2) <= 1e-6);
  CHECK(rp.pe_scaled >= 0.0);
  const DeconvolvedPlan dp = deconvolve(rp.pi0, rp.sigma1, rp.sigma2, eps);
  CHECK(dp.marginal_error <= 1e-12);
  const DeconvolutionCheck c = deconvolution_pe_bound_check(rp, dp, pot, eps);
  CHECK(c.ke_ok);
  CHECK(c.ke_constant <= 10 * kBumpMarginalKE);
  CHECK(c.support_ok);
  const RecoveryField rf = assemble_recovery(mp, dp, pot, eps, t.f_zpo());
  CHECK(rf.marginal_residual <= 1e-10);
  CHECK(rf.psi_sq.min() >= 0.0);
  CHECK(rf.upper_sandwich);
  CHECK(rf.gap > 0.0);
  CHECK(rf.energy.e == doctest::Approx(rf.gap + rf.f_zpo));
  CHECK(naive_deconvolution_overhead(mp, pot, eps) > 0.0);
}
