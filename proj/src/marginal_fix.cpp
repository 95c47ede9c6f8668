#include "zpo/marginal_fix.hpp"

#include <algorithm>
#include <cmath>

#include "zpo/error.hpp"
#include "zpo/numerics.hpp"

namespace zpo {

namespace {
const double kPi = std::acos(-1.0);
}

double bump_marginal(double x) {
  const double s = 1.0 - x * x;
  return s <= 0.0 ? 0.0 : 128.0 / (35.0 * kPi) * s * s * s * std::sqrt(s);
}

nlohmann::json RemainderPlan::to_json() const {
  return {{"mass", mass},         {"clipped_mass", clipped_mass}, {"sigma_min", sigma_min},
          {"PE", pe},             {"PE_scaled", pe_scaled},       {"W2sq", w2sq},
          {"max_shift", max_shift}, {"shift_shape", shift_shape}};
}

RemainderPlan remainder_from_marginals(const GridField1D& s1, const GridField1D& s2,
                                       const std::function<double(double)>& map,
                                       const std::function<bool(double)>& where) {
  require(s1.ax.same(s2.ax), "remainder: marginal axes differ");
  const Axis& ax = s1.ax;
  RemainderPlan rp;
  rp.sigma1 = s1;
  rp.sigma2 = s2;
  const double m1 = s1.mass(), m2 = s2.mass();
  if (std::abs(m1 - m2) > 1e-6)
    fail(ErrorCode::numerical, "remainder: sigma masses differ by " + format_double(m1 - m2));
  rp.mass = m1;
  std::vector<double> pos, ms, md(size_t(ax.n));
  std::vector<int> idx;
  for (int i = 0; i < ax.n; ++i) {
    md[i] = s2.v[i] * ax.h;
    if (s1.v[i] > 0.0) {
      pos.push_back(map(ax.x(i)));
      ms.push_back(s1.v[i] * ax.h);
      idx.push_back(i);
    }
  }
  rp.pi0 = GridField2D(ax, ax);
  const double area = rp.pi0.cell_area();
  CompensatedSum w2;
  std::vector<double> ysum(pos.size(), 0.0), msum(pos.size(), 0.0);
  for (const CouplingEntry& e : monotone_coupling(pos, ms, md, 1e-6)) {
    rp.pi0.at(idx[e.src], e.dst) += e.mass / area;
    const double d = pos[e.src] - ax.x(e.dst);
    w2.add(e.mass * d * d);
    ysum[e.src] += e.mass * ax.x(e.dst);
    msum[e.src] += e.mass;
  }
  rp.w2sq = w2.value();
  for (size_t k = 0; k < pos.size(); ++k)
    if (msum[k] > 0.0 && (!where || where(ax.x(idx[k])))) rp.max_shift = std::max(rp.max_shift, std::abs(ysum[k] / msum[k] - pos[k]));
  return rp;
}

RemainderPlan remainder_plan(const MainPlan& mp, const Partition& part, const PotentialField& pot,
                             const ParameterSchedule& sched) {
  const Axis& ax = mp.target.ax;
  GridField1D s1(ax), s2(ax);
  double clipped = 0.0, smin = 0.0;
  for (int i = 0; i < ax.n; ++i) {
    const double a = mp.target.v[i] - mp.rho1.v[i], b = mp.target.v[i] - mp.rho2.v[i];
    smin = std::min({smin, a, b});
    s1.v[i] = std::max(0.0, a);
    s2.v[i] = std::max(0.0, b);
    clipped += (s1.v[i] - a + s2.v[i] - b) * ax.h;
  }
  const DomainH& dom = part.domain();
  RemainderPlan rp = remainder_from_marginals(
      s1, s2, [&](double x) { return part.Tdelta(x); }, [&](double x) { return dom.in_omega_p(x); });
  rp.clipped_mass = clipped;
  rp.sigma_min = smin;
  CompensatedSum pe;
  for (size_t k = 0; k < rp.pi0.v.size(); ++k)
    if (rp.pi0.v[k] != 0.0) pe.add(rp.pi0.v[k] * pot.V.v[k]);
  rp.pe = pe.value() * rp.pi0.cell_area();
  rp.pe_scaled = rp.pe / std::sqrt(sched.eps);
  rp.shift_shape = std::cbrt(rp.w2sq / sched.tau);
  return rp;
}

nlohmann::json DeconvolvedPlan::to_json() const {
  return {{"kernel_cells", kernel.ax.n}, {"marginal_error", marginal_error}, {"lost_mass", lost_mass}};
}

GridField2D bump_kernel(double radius, const Axis& like) {
  require(radius > 0.0, "bump_kernel: radius must be positive");
  const double h = like.h;
  const int R = int(std::floor(radius / h));
  const Axis k{-(R + 0.5) * h, h, 2 * R + 1};
  GridField2D K(k, k);
  for (int p = 0; p < k.n; ++p)
    for (int q = 0; q < k.n; ++q) {
      const double x = (p - R) * h / radius, y = (q - R) * h / radius;
      const double s = 1.0 - x * x - y * y;
      K.at(p, q) = s > 0.0 ? 4.0 / kPi * s * s * s / (radius * radius) : 0.0;
    }
  if (K.mass() <= 0.0) K.at(R, R) = 1.0;
  return scaled(K, 1.0 / K.mass());
}

GridField2D separable_bump_kernel(double radius, const Axis& like) {
  const GridField1D t = bump_kernel(radius, like).marginal_x();
  GridField2D K(t.ax, t.ax);
  for (int p = 0; p < t.ax.n; ++p)
    for (int q = 0; q < t.ax.n; ++q) K.at(p, q) = t.v[p] * t.v[q];
  return K;
}

DeconvolvedPlan deconvolve(const GridField2D& pi0, const GridField1D& s1, const GridField1D& s2, double eps) {
  require(eps > 0.0, "deconvolve: eps must be positive");
  return deconvolve_with(pi0, s1, s2, bump_kernel(std::pow(eps, 0.25), pi0.ax));
}

DeconvolvedPlan deconvolve_with(const GridField2D& pi0, const GridField1D& s1, const GridField1D& s2,
                                const GridField2D& kernel) {
  require(pi0.ax.same(s1.ax) && pi0.ay.same(s2.ax), "deconvolve: marginal axes differ from the plan");
  require(kernel.ax.n == kernel.ay.n && kernel.ax.n % 2 == 1, "deconvolve: kernel must be square with odd size");
  require(std::abs(pi0.ax.h - pi0.ay.h) <= 1e-12 * pi0.ax.h, "deconvolve: plan needs equal spacings");
  DeconvolvedPlan dp;
  dp.kernel = kernel;
  dp.theta = dp.kernel.marginal_x();
  const int r = dp.kernel.ax.n / 2;
  const int nx = pi0.ax.n, ny = pi0.ay.n;
  dp.pi_eps = convolve2d(pi0, dp.kernel);
  const GridField1D se1 = dp.pi_eps.marginal_x(), se2 = dp.pi_eps.marginal_y();
  const int px = dp.pi_eps.ax.n;
  const double hx = pi0.ax.h, hy = pi0.ay.h;
  const std::vector<double>& t = dp.theta.v;
  // R1(x', y) = Σ_q t(q) Q(x', y + q) h
  GridField2D R1(dp.pi_eps.ax, pi0.ay);
  for (int i = 0; i < px; ++i) {
    if (!(se1.v[i] > 0.0)) continue;
    const double inv1 = 1.0 / std::max(se1.v[i], 1e-300);
    for (int j = 0; j < ny; ++j) {
      if (!(s2.v[j] > 0.0)) continue;
      double acc = 0.0;
      for (int q = 0; q <= 2 * r; ++q) {
        const int jp = j + q;  // padded index of y + (q - r)h
        const double v = dp.pi_eps.at(i, jp);
        if (v != 0.0) acc += t[q] * v / std::max(se2.v[jp], 1e-300);
      }
      R1.at(i, j) = acc * inv1 * hy;
    }
  }
  dp.pi_tilde = GridField2D(pi0.ax, pi0.ay);
  for (int i = 0; i < nx; ++i) {
    if (!(s1.v[i] > 0.0)) continue;
    for (int j = 0; j < ny; ++j) {
      if (!(s2.v[j] > 0.0)) continue;
      double acc = 0.0;
      for (int p = 0; p <= 2 * r; ++p) acc += t[p] * R1.at(i + p, j);
      dp.pi_tilde.at(i, j) = s1.v[i] * s2.v[j] * acc * hx;
    }
  }
  dp.marginal_error = std::max(l1_distance(dp.pi_tilde.marginal_x(), s1), l1_distance(dp.pi_tilde.marginal_y(), s2));
  return dp;
}

nlohmann::json DeconvolutionCheck::to_json() const {
  return {{"mass_pi0", mass_pi0},       {"KE_tilde", ke_tilde},     {"KE_sigma1", ke_sigma1},
          {"KE_sigma2", ke_sigma2},     {"KE_constant", ke_constant}, {"KE_ok", ke_ok},
          {"PE_tilde_scaled", pe_tilde_scaled}, {"PE_pi0_scaled", pe_pi0_scaled},
          {"C_H", c_H},                 {"PE_constant", pe_constant}, {"support_ok", support_ok}};
}

namespace {

double potential_energy(const GridField2D& g, const PotentialField& pot) {
  require(g.ax.same(pot.V.ax) && g.ay.same(pot.V.ay), "potential energy: grid mismatch");
  CompensatedSum s;
  for (size_t k = 0; k < g.v.size(); ++k)
    if (g.v[k] != 0.0) s.add(g.v[k] * pot.V.v[k]);
  return s.value() * g.cell_area();
}

// Separable L∞ dilation of the support mask by r cells.
std::vector<unsigned char> dilate(const GridField2D& f, int r) {
  const int nx = f.ax.n, ny = f.ay.n;
  std::vector<unsigned char> a(f.v.size(), 0), b(f.v.size(), 0);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      if (f.at(i, j) > 0.0)
        for (int q = std::max(0, j - r); q <= std::min(ny - 1, j + r); ++q) a[size_t(i) * ny + q] = 1;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      if (a[size_t(i) * ny + j])
        for (int p = std::max(0, i - r); p <= std::min(nx - 1, i + r); ++p) b[size_t(p) * ny + j] = 1;
  return b;
}

}  // namespace

DeconvolutionCheck deconvolution_pe_bound_check(const RemainderPlan& rp, const DeconvolvedPlan& dp,
                                                const PotentialField& pot, double eps) {
  DeconvolutionCheck c;
  const double se = std::sqrt(eps);
  c.mass_pi0 = rp.pi0.mass();
  c.ke_tilde = kinetic_energy(dp.pi_tilde);
  c.ke_sigma1 = kinetic_energy(rp.sigma1);
  c.ke_sigma2 = kinetic_energy(rp.sigma2);
  if (c.mass_pi0 > 0.0) c.ke_constant = (c.ke_tilde - c.ke_sigma1 - c.ke_sigma2) * se / c.mass_pi0;
  c.ke_ok = c.ke_constant <= 10.0 * kBumpMarginalKE;
  c.pe_tilde_scaled = potential_energy(dp.pi_tilde, pot) / se;
  c.pe_pi0_scaled = potential_energy(rp.pi0, pot) / se;
  if (c.mass_pi0 > 0.0) c.pe_constant = std::max(0.0, c.pe_tilde_scaled - c.c_H * c.pe_pi0_scaled) / c.mass_pi0;
  // Π̃ may only live within 2 kernel radii (in each coordinate) of π₀
  const int r = dp.kernel.ax.n / 2;
  const std::vector<unsigned char> near = dilate(rp.pi0, 2 * r + 1);
  c.support_ok = true;
  for (size_t k = 0; k < dp.pi_tilde.v.size(); ++k)
    if (dp.pi_tilde.v[k] > 0.0 && !near[k]) c.support_ok = false;
  return c;
}

double naive_deconvolution_overhead(const MainPlan& mp, const PotentialField& pot, double eps) {
  const DeconvolvedPlan dp = deconvolve(mp.gammabar, mp.rho1, mp.rho2, eps);
  return (potential_energy(dp.pi_tilde, pot) - potential_energy(mp.gammabar, pot)) / std::sqrt(eps);
}

nlohmann::json RecoveryField::to_json() const {
  return {{"energy", energy.to_json()},
          {"E_main", E_main},
          {"E_tilde", E_tilde},
          {"marginal_residual", marginal_residual},
          {"upper_sandwich", upper_sandwich},
          {"lower_sandwich", lower_sandwich},
          {"F_ZPO", f_zpo},
          {"gap", gap}};
}

RecoveryField assemble_recovery(const MainPlan& mp, const DeconvolvedPlan& dp, const PotentialField& pot,
                                double eps, double f_zpo) {
  RecoveryField r;
  r.psi_sq = mp.gammabar + dp.pi_tilde;
  r.energy = e_eps(r.psi_sq, pot, eps);
  r.E_main = e_eps(mp.gammabar, pot, eps).e;
  r.E_tilde = e_eps(dp.pi_tilde, pot, eps).e;
  r.marginal_residual = std::max(l1_distance(r.psi_sq.marginal_x(), mp.target), l1_distance(r.psi_sq.marginal_y(), mp.target));
  const double tol = 1e-12 * std::max(1.0, std::abs(r.energy.e));
  r.upper_sandwich = r.energy.e <= r.E_main + r.E_tilde + tol;
  r.lower_sandwich = r.energy.e >= r.E_main - tol;
  r.f_zpo = f_zpo;
  r.gap = r.energy.e - f_zpo;
  return r;
}

}  // namespace zpo
