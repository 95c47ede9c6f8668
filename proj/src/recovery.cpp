#include "zpo/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "zpo/error.hpp"
#include "zpo/numerics.hpp"

namespace zpo {

namespace {

double mass_between(const Density1D& d, double a, double b) {
  return a >= 0.0 ? d.sf(a) - d.sf(b) : d.cdf(b) - d.cdf(a);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------- schedule

Overrides Overrides::from_json(const nlohmann::json& j) {
  Overrides o;
  if (j.is_null()) return o;
  require(j.is_object(), "overrides must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    require(it.value().is_number(), "override '" + it.key() + "' must be a number");
    const double v = it.value().get<double>();
    require(v > 0.0 && std::isfinite(v), "override '" + it.key() + "' must be positive");
    const std::string& k = it.key();
    if (k == "N") o.N = v;
    else if (k == "beta") o.beta = v;
    else if (k == "delta") o.delta = v;
    else if (k == "tau") o.tau = v;
    else if (k == "c_N") o.c_N = v;
    else if (k == "c_beta") o.c_beta = v;
    else if (k == "c_delta") o.c_delta = v;
    else if (k == "c_tau") o.c_tau = v;
    else fail(ErrorCode::invalid_argument, "unknown override '" + k + "'");
  }
  return o;
}

nlohmann::json Overrides::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  auto put = [&](const char* k, const std::optional<double>& v) {
    if (v) j[k] = *v;
  };
  put("N", N);
  put("beta", beta);
  put("delta", delta);
  put("tau", tau);
  put("c_N", c_N);
  put("c_beta", c_beta);
  put("c_delta", c_delta);
  put("c_tau", c_tau);
  return j;
}

bool Overrides::empty() const { return to_json().empty(); }

std::vector<Ordering> evaluate_orderings(double le, double lN, double lb, double ld, double lt) {
  struct Row {
    const char* name;
    double lr;
  };
  const Row rows[] = {
      {"eps^(1/2) N << beta", 0.5 * le + lN - lb},
      {"beta << eps^(2/5)", lb - 0.4 * le},
      {"(beta N)^(1/2) << delta", 0.5 * (lb + lN) - ld},
      {"delta << eps^(1/8) N^(-3/5)", ld - (le / 8.0 - 0.6 * lN)},
      {"delta^2 / eps^(1/4) << tau", 2.0 * ld - 0.25 * le - lt},
      {"eps^(1/2) N^2 / beta << tau", 0.5 * le + 2.0 * lN - lb - lt},
      {"beta delta N / eps^(1/2) << tau", lb + ld + lN - 0.5 * le - lt},
      {"delta << N", ld - lN},
      {"(beta N)^(1/2) << tau", 0.5 * (lb + lN) - lt},
      {"eps^(1/4) << (beta N)^(1/2)", 0.25 * le - 0.5 * (lb + lN)},
      {"beta << eps^(1/4)", lb - 0.25 * le},
  };
  std::vector<Ordering> out;
  const double lim = std::log(kOrderingRatio);
  for (const Row& r : rows) out.push_back({r.name, r.lr, r.lr <= lim, r.lr / std::log(10.0)});
  return out;
}

bool ParameterSchedule::all_hold() const {
  return std::all_of(validity.begin(), validity.end(), [](const Ordering& o) { return o.holds; });
}

nlohmann::json ParameterSchedule::to_json() const {
  nlohmann::json v = nlohmann::json::array();
  for (const Ordering& o : validity)
    v.push_back({{"ordering", o.name}, {"ratio", std::exp(o.log_ratio)}, {"log10_ratio", o.margin}, {"holds", o.holds}});
  return {{"eps", eps},     {"H", H},         {"N", N},
          {"beta", beta},   {"delta", delta}, {"tau", tau},
          {"overrides", overrides.to_json()}, {"orderings", v}, {"all_hold", all_hold()}};
}

ParameterSchedule schedule(double eps, double H, const Overrides& ov) {
  require(eps > 0.0 && eps < std::exp(-1.0), "schedule: eps must lie in (0, 1/e)");
  require(H > 1.0 && std::isfinite(H), "schedule: H must exceed 1");
  const double L = std::abs(std::log(eps));
  ParameterSchedule s;
  s.eps = eps;
  s.H = H;
  s.overrides = ov;
  s.N = ov.N ? *ov.N : std::pow(L, 1.25) * ov.c_N.value_or(1.0);
  s.beta = ov.beta ? *ov.beta : ov.c_beta ? *ov.c_beta * std::sqrt(eps) * s.N : std::sqrt(eps) * L * L * L;
  s.delta = ov.delta ? *ov.delta : std::pow(eps, 0.125) / L * ov.c_delta.value_or(1.0);
  s.tau = ov.tau ? *ov.tau : std::pow(L, -1.0 / 3.0) * ov.c_tau.value_or(1.0);
  for (double v : {s.N, s.beta, s.delta, s.tau})
    if (!(v > 0.0) || !std::isfinite(v)) fail(ErrorCode::invalid_argument, "schedule: nonpositive parameter");
  require(s.N >= 3.0, "schedule: truncation level N must be at least 3");
  s.validity = evaluate_orderings(std::log(eps), std::log(s.N), std::log(s.beta), std::log(s.delta), std::log(s.tau));
  return s;
}

AllPassEstimate all_pass_threshold() {
  auto rows = [](double L) {
    const double lL = std::log(L);
    return evaluate_orderings(-L, 1.25 * lL, -0.5 * L + 3.0 * lL, -L / 8.0 - lL, -lL / 3.0);
  };
  auto ok = [&](double L) {
    for (const Ordering& o : rows(L))
      if (!o.holds) return false;
    return true;
  };
  // last failing point on a geometric scan, then bisection in log L
  double last_fail = 1.0;
  // beyond ~1e12 the ±L/2 terms swamp the log L terms in double precision
  const double top = 1e12;
  for (double L = 1.0; L <= top; L *= 1.05)
    if (!ok(L)) last_fail = L;
  require(last_fail < top, "all_pass_threshold: orderings never hold on the scanned range");
  double lo = std::log(last_fail), hi = std::log(last_fail * 1.05);
  for (int k = 0; k < 200 && hi - lo > 1e-13; ++k) {
    const double m = 0.5 * (lo + hi);
    (ok(std::exp(m)) ? hi : lo) = m;
  }
  AllPassEstimate r;
  r.L = std::exp(hi);
  r.symbolic = fmt("eps <= exp(-%.6g) = 10^(-%.6g)", r.L, r.L / std::log(10.0));
  double worst = -1e300;
  for (const Ordering& o : rows(std::exp(lo)))
    if (o.log_ratio > worst) {
      worst = o.log_ratio;
      r.binding = o.name;
    }
  return r;
}

// ---------------------------------------------------------------- target density

TargetDensity::TargetDensity(const CoulombOT& sol, double x_in, double x_out)
    : sol_(&sol), x_in_(x_in), x_out_(x_out) {
  require(x_in > 0.0 && x_out > x_in, "TargetDensity: need 0 < x_in < x_out");
}

double TargetDensity::s(double r) const {
  if (r <= x_in_) return 1.0;
  if (r >= x_out_) return 0.0;
  const double t = std::log(r / x_in_) / std::log(x_out_ / x_in_);
  return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
}

double TargetDensity::window(double x) const {
  if (x == 0.0 || !std::isfinite(x)) return 0.0;
  const double a = s(std::abs(x));
  if (a == 0.0) return 0.0;
  return a * s(std::abs(sol_->T(x)));
}

std::vector<double> TargetDensity::breakpoints() const {
  const CoulombOT& S = *sol_;
  std::vector<double> b = {-x_out_, -x_in_, S.T(x_out_), S.T(x_in_), 0.0, S.T(-x_in_), S.T(-x_out_), x_in_, x_out_};
  std::sort(b.begin(), b.end());
  return b;
}

double TargetDensity::mass() const {
  QuadOptions o;
  o.abs_tol = 1e-14;
  o.rel_tol = 1e-12;
  return integrate_pieces([&](double x) { return pdf(x); }, breakpoints(), o).value;
}

double TargetDensity::f_zpo() const {
  return f_zpo_weighted(*sol_, [&](double x) { return window(x); }, breakpoints());
}

nlohmann::json TargetDensity::to_json() const {
  return {{"x_in", x_in_}, {"x_out", x_out_}, {"mass", mass()}, {"F_ZPO", f_zpo()}};
}

double grid_half_width(const Density1D& d, double tail_mass) {
  require(tail_mass > 0.0 && tail_mass < 0.25, "tail_mass must lie in (0, 0.25)");
  return d.quantile_split(true, tail_mass, 0.5 - tail_mass);
}

TargetDensity make_target(const CoulombOT& sol, double H, double X) {
  const DomainH dom = sol.domain(H);
  double x_in = 0.0;
  for (const Interval& iv : dom.omega_p) x_in = std::max({x_in, std::abs(iv.lo), std::abs(iv.hi)});
  if (!(X > 1.05 * x_in))
    fail(ErrorCode::invalid_argument,
         fmt("grid half-width %.6g is too small for H = %.6g (needs > %.6g); lower tail_mass or H", X, H, 1.05 * x_in));
  return TargetDensity(sol, x_in, X);
}

// ---------------------------------------------------------------- partition

Partition::Partition(const CoulombOT& sol, DomainH dom, double delta, std::vector<Piece> pieces)
    : sol_(&sol), dom_(dom), delta_(delta), pieces_(std::move(pieces)) {}

double Partition::Tdelta(double x) const {
  auto it = std::upper_bound(pieces_.begin(), pieces_.end(), x, [](double v, const Piece& p) { return v < p.a; });
  if (it != pieces_.begin()) {
    const Piece& p = *std::prev(it);
    if (x <= p.b) {
      if (x == p.b) return p.Tb;
      return p.Ta + p.slope * (x - p.a);
    }
  }
  return sol_->T(x);
}

double Partition::max_interp_error(int m) const {
  double e = 0.0;
  for (const Piece& p : pieces_)
    for (int k = 0; k <= m; ++k) {
      const double x = p.a + (p.b - p.a) * k / m;
      e = std::max(e, std::abs(Tdelta(x) - sol_->T(x)));
    }
  return e;
}

double Partition::d2T_sup() const {
  double e = 0.0;
  for (const Interval& iv : dom_.omega)
    for (int k = 0; k <= 2000; ++k) e = std::max(e, std::abs(sol_->d2T(iv.lo + iv.length() * k / 2000.0)));
  return e;
}

nlohmann::json Partition::to_json() const {
  double res = 0.0;
  int fb = 0;
  for (const Piece& p : pieces_) {
    res = std::max(res, p.slope_residual);
    fb += p.fallback;
  }
  return {{"pieces", pieces_.size()},      {"delta", delta_},
          {"max_slope_residual", res},     {"fallbacks", fb},
          {"max_interp_error", max_interp_error()}, {"d2T_sup", d2T_sup()}};
}

Partition build_partition(const CoulombOT& sol, const DomainH& dom, double delta) {
  require(delta > 0.0, "build_partition: delta must be positive");
  std::vector<Piece> pieces;
  for (const Interval& iv : dom.omega) {
    const double len = iv.length();
    if (!(delta < 0.5 * len))
      fail(ErrorCode::invalid_argument, fmt("build_partition: delta = %.6g must be below half the component length %.6g", delta, len));
    const int k = int(std::floor(len / delta)) + 1;
    double prevT = sol.T(iv.lo);
    for (int i = 0; i < k; ++i) {
      Piece p;
      p.a = iv.lo + len * i / k;
      p.b = i + 1 == k ? iv.hi : iv.lo + len * (i + 1) / k;
      p.Ta = prevT;
      p.Tb = sol.T(p.b);
      prevT = p.Tb;
      p.slope = (p.Tb - p.Ta) / (p.b - p.a);
      auto g = [&](double x) { return sol.dT(x) - p.slope; };
      double lo = p.a, hi = p.b, glo = g(lo), ghi = g(hi);
      bool bracket = glo * ghi <= 0.0;
      for (int s = 1; !bracket && s < 32; ++s) {
        // look for an interior sign change
        const double x = p.a + (p.b - p.a) * s / 32.0;
        const double gx = g(x);
        if (gx * glo <= 0.0) {
          hi = x;
          bracket = true;
        } else if (gx * ghi <= 0.0) {
          lo = x;
          bracket = true;
        }
      }
      if (bracket) {
        p.xi = find_root(g, lo, hi, 1e-15);
      } else {
        p.xi = 0.5 * (p.a + p.b);
        p.fallback = true;
      }
      p.slope_residual = std::abs(g(p.xi));
      pieces.push_back(p);
    }
  }
  return Partition(sol, dom, delta, std::move(pieces));
}

// ---------------------------------------------------------------- main plan

nlohmann::json MainPlan::to_json() const {
  return {{"mass", mass},
          {"mass_expected", mass_expected},
          {"mass_analytic", mass_analytic},
          {"mass_error", std::abs(mass - mass_expected)},
          {"c_H", c_H},
          {"max_overlap", max_overlap}, {"trimmed_mass", trimmed_mass},
          {"cells_per_width", cells_per_width},
          {"max_half_w", max_half_w},
          {"max_half_z", max_half_z},
          {"kernels", kernels.size()}};
}

double PieceDensity::Table::operator()(double z) const {
  const double u = (z - z0) / dz;
  const int n = int(v.size());
  if (u <= 0.0 || u >= n - 1) return 0.0;
  int k = int(u);
  k = std::clamp(k, 1, n - 3);
  const double t = u - k;
  const double wm = -t * (t - 1.0) * (t - 2.0) / 6.0, w0 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
  const double w1 = -(t + 1.0) * t * (t - 2.0) / 2.0, w2 = (t + 1.0) * t * (t - 1.0) / 6.0;
  return wm * v[k - 1] + w0 * v[k] + w1 * v[k + 1] + w2 * v[k + 2];
}

PieceDensity::PieceDensity(const CoulombOT& sol, const Piece& p, const ParameterSchedule& sched, int table_per_width)
    : piece_(p),
      kernel_(std::sqrt(sol.q(p.xi)) / std::sqrt(sched.eps) + 1.0 / sched.beta, 1.0 / sched.beta, std::atan(p.slope),
              sched.N) {
  const Density1D& d = sol.density();
  const double tau = sched.tau;
  c_ = std::sqrt(1.0 + p.slope * p.slope);
  ell_ = (p.b - p.a) * c_;
  ct_ = std::cos(kernel_.theta());
  st_ = std::sin(kernel_.theta());
  const double Z = kernel_.half_z();
  // L(z) = (1/c) ∫ h²(t) (ρ - τ)(a + (z - t)/c) dt over t ∈ [max(-Z, z - ℓ), min(Z, z)]
  const double span = ell_ + 2.0 * Z;
  const int K = std::max(64, int(std::ceil(span / (std::sqrt(sched.beta) / table_per_width))));
  L_ = Table{-Z, span / K, std::vector<double>(size_t(K) + 1, 0.0)};
  const GaussRule& gl = gauss_legendre(12);
  for (int m = 1; m < K; ++m) {
    const double z = -Z + m * L_.dz;
    const double t0 = std::max(-Z, z - ell_), t1 = std::min(Z, z);
    if (!(t1 > t0)) continue;
    const int panels = 3;
    const double ph = (t1 - t0) / panels;
    double s = 0.0;
    for (int q = 0; q < panels; ++q)
      for (size_t r = 0; r < gl.nodes.size(); ++r) {
        const double t = t0 + ph * (q + 0.5 * (gl.nodes[r] + 1.0));
        const double x = std::clamp(p.a + (z - t) / c_, p.a, p.b);
        s += 0.5 * ph * gl.weights[r] * kernel_.h2(t) * (d.pdf(x) - tau);
      }
    L_.v[m] = s / c_;
  }
  CompensatedSum m;
  for (double v : L_.v) m.add(v * L_.dz);
  mass_ = m.value();
}

double PieceDensity::operator()(double x, double y) const {
  const double dx = x - piece_.a, dy = y - piece_.Ta;
  const double w = -st_ * dx + ct_ * dy;
  if (std::abs(w) >= kernel_.half_w()) return 0.0;
  const double z = ct_ * dx + st_ * dy;
  if (z <= -kernel_.half_z() || z >= ell_ + kernel_.half_z()) return 0.0;
  return std::max(0.0, kernel_.h1(w) * L_(z));
}

std::array<double, 4> PieceDensity::bounding_box() const {
  const double W = kernel_.half_w(), Z = kernel_.half_z();
  const double ex = st_ * W + ct_ * Z, ey = ct_ * W + st_ * Z;
  return {std::min(piece_.a, piece_.b) - ex, std::max(piece_.a, piece_.b) + ex, std::min(piece_.Ta, piece_.Tb) - ey,
          std::max(piece_.Ta, piece_.Tb) + ey};
}

MainPlan build_main_plan(const CoulombOT& sol, const Partition& part, const ParameterSchedule& sched,
                         const Axis& axis, const TargetDensity& target, const MainPlanOptions& opt) {
  const double eps = sched.eps, beta = sched.beta, tau = sched.tau;
  const Density1D& d = sol.density();
  const DomainH& dom = part.domain();
  for (const Interval& iv : dom.omega_p)
    for (int k = 0; k <= 400; ++k) {
      const double x = iv.lo + iv.length() * k / 400.0;
      if (!(d.pdf(x) - tau > 0.0))
        fail(ErrorCode::domain, fmt("rho - tau <= 0 at x = %.6g (tau = %.6g): lower tau or H", x, tau));
    }
  const double h = axis.h;
  double a_max = 0.0;
  for (const Piece& p : part.pieces()) a_max = std::max(a_max, std::sqrt(sol.q(p.xi)) / std::sqrt(eps) + 1.0 / beta);
  MainPlan mp;
  mp.cells_per_width = 1.0 / std::sqrt(a_max) / h;
  if (mp.cells_per_width < opt.min_cells) {
    const int need = int(std::ceil(axis.n * opt.min_cells / mp.cells_per_width));
    fail(ErrorCode::resolution, fmt("grid too coarse: %.3g cells per kernel width (need %.3g); use n >= %.0f",
                                    mp.cells_per_width, opt.min_cells, double(need)));
  }
  mp.gammabar = GridField2D(axis, axis);
  std::vector<int> cover_x(size_t(axis.n) + 1, 0), cover_y(size_t(axis.n) + 1, 0);
  CompensatedSum analytic;
  for (const Piece& p : part.pieces()) {
    const PieceDensity pd(sol, p, sched, opt.table_per_width);
    const TruncatedGaussian& k = pd.kernel();
    mp.max_half_w = std::max(mp.max_half_w, k.half_w());
    mp.max_half_z = std::max(mp.max_half_z, k.half_z());
    mp.kernels.push_back({k.a(), k.b(), k.theta(), p.a, p.Ta, pd.length()});
    analytic.add(pd.mass());

    const auto [x0, x1, y0, y1] = pd.bounding_box();
    if (x0 < axis.lo || y0 < axis.lo || x1 > axis.hi() || y1 > axis.hi())
      fail(ErrorCode::domain, fmt("kernel support [%.4g, %.4g] leaves the grid; need half-width >= %.4g", std::min(x0, y0),
                                  std::max(x1, y1), std::max({-x0, -y0, x1, y1})));
    const int i0 = std::max(0, axis.cell(x0)), i1 = std::min(axis.n - 1, axis.cell(x1));
    const int j0 = std::max(0, axis.cell(y0)), j1 = std::min(axis.n - 1, axis.cell(y1));
    cover_x[size_t(i0)] += 1;
    cover_x[size_t(i1) + 1] -= 1;
    cover_y[size_t(j0)] += 1;
    cover_y[size_t(j1) + 1] -= 1;
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j) {
        const double val = pd(axis.x(i), axis.x(j));
        if (val > 0.0) mp.gammabar.at(i, j) += val;
      }
  }
  int run_x = 0, run_y = 0;
  for (int i = 0; i < axis.n; ++i) {
    run_x += cover_x[size_t(i)];
    run_y += cover_y[size_t(i)];
    mp.max_overlap = std::max({mp.max_overlap, run_x, run_y});
  }
  mp.mass_analytic = analytic.value();
  mp.mass = mp.gammabar.mass();
  for (const Interval& iv : dom.omega) mp.mass_expected += mass_between(d, iv.lo, iv.hi) - tau * iv.length();
  mp.rho1 = mp.gammabar.marginal_x();
  mp.rho2 = mp.gammabar.marginal_y();
  mp.target = sample_cells([&](double x) { return target.pdf(x); }, axis);
  double cmin = 1e300;
  for (int i = 0; i < axis.n; ++i)
    if (dom.in_omega_p(axis.x(i)))
      cmin = std::min({cmin, (mp.target.v[i] - mp.rho1.v[i]) / tau, (mp.target.v[i] - mp.rho2.v[i]) / tau});
  mp.c_H = cmin;
  return mp;
}

nlohmann::json MainPlanEnergy::to_json() const {
  return {{"KE_scaled", ke_scaled}, {"PE_scaled", pe_scaled}, {"E", E},       {"target", target},
          {"target_tau", target_tau}, {"gap", gap},             {"masked_mass", masked_mass}};
}

double trim_to_target(MainPlan& mp) {
  GridField2D& g = mp.gammabar;
  const int nx = g.ax.n, ny = g.ay.n;
  const double before = g.mass();
  for (int i = 0; i < nx; ++i) {
    const double m = mp.rho1.v[i];
    if (m > mp.target.v[i] && m > 0.0) {
      const double f = std::max(0.0, mp.target.v[i]) / m;
      for (int j = 0; j < ny; ++j) g.at(i, j) *= f;
    }
  }
  mp.rho2 = g.marginal_y();
  for (int j = 0; j < ny; ++j) {
    const double m = mp.rho2.v[j];
    if (m > mp.target.v[j] && m > 0.0) {
      const double f = std::max(0.0, mp.target.v[j]) / m;
      for (int i = 0; i < nx; ++i) g.at(i, j) *= f;
    }
  }
  mp.rho1 = g.marginal_x();
  mp.rho2 = g.marginal_y();
  const double removed = before - g.mass();
  mp.trimmed_mass += removed;
  return removed;
}

MainPlanEnergy main_plan_energy(const MainPlan& mp, const PotentialField& pot, const CoulombOT& sol,
                                const ParameterSchedule& sched) {
  const EnergyRecord e = e_eps(mp.gammabar, pot, sched.eps);
  const DomainH dom = sol.domain(sched.H);
  MainPlanEnergy r;
  r.ke_scaled = std::sqrt(sched.eps) * e.ke;
  r.pe_scaled = e.pe / std::sqrt(sched.eps);
  r.E = e.e;
  r.masked_mass = e.masked_mass;
  r.target = f_zpo_omega(sol, dom, 0.0);
  r.target_tau = f_zpo_omega(sol, dom, sched.tau);
  r.gap = r.E - r.target;
  return r;
}

}  // namespace zpo
