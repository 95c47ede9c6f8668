#include "zpo/coulomb_ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "zpo/error.hpp"

namespace zpo {

namespace {
double sgn(double x) { return x < 0 ? -1.0 : 1.0; }
}  // namespace

CoulombOT::CoulombOT(Density1D d, double anchor) : d_(std::move(d)), anchor_(anchor) {
  require(anchor != 0.0 && std::isfinite(anchor), "anchor must be finite and nonzero");
  const double ta = T(anchor_);
  if (!(std::abs(ta - anchor_) > 0.0)) fail(ErrorCode::numerical, "degenerate anchor: T(x0) = x0");
  u0_ = 0.5 * (1.0 / std::abs(anchor_ - ta) - primitive_du(anchor_) - primitive_du(ta));
}

double CoulombOT::T(double x) const {
  if (x == 0.0 || !std::isfinite(x)) fail(ErrorCode::domain, "T is undefined at 0");
  const bool neg = x < 0.0;
  const double outer = neg ? d_.cdf(x) : d_.sf(x);
  const double centre = d_.central_mass(x);
  // Image lies on the other side: its outer tail is `centre`, its central mass is `outer`.
  return d_.quantile_split(neg, centre, outer);
}

double CoulombOT::dT(double x) const { return d_.pdf(x) / d_.pdf(T(x)); }

double CoulombOT::d2T(double x) const {
  const double t = T(x);
  const double rt = d_.pdf(t);
  const double dt = d_.pdf(x) / rt;
  return (d_.dpdf(x) - dt * dt * d_.dpdf(t)) / rt;
}

double CoulombOT::du(double x) const {
  if (x == 0.0) return 0.0;
  const double g = T(x) - x;
  return -sgn(x) / (g * g);
}

double CoulombOT::ddu(double x) const {
  if (x == 0.0) return 0.0;
  const double g = T(x) - x;
  return sgn(x) * 2.0 * (dT(x) - 1.0) / (g * g * g);
}

double CoulombOT::primitive_du(double x) const {
  if (x == 0.0) return 0.0;
  QuadOptions opt;
  opt.abs_tol = 1e-14;
  opt.rel_tol = 1e-13;
  auto f = [&](double t) { return du(t); };
  return integrate(f, 0.0, x, opt).value;
}

double CoulombOT::u(double x) const { return u0_ + primitive_du(x); }

double CoulombOT::V(double x, double y) const {
  if (x == y) fail(ErrorCode::domain, "V is singular on the diagonal");
  return 1.0 / std::abs(x - y) - u(x) - u(y);
}

Vec2 CoulombOT::gradV(double x, double y) const {
  if (x == y) fail(ErrorCode::domain, "gradV is singular on the diagonal");
  const double d = x - y;
  const double c = sgn(d) / (d * d);
  return {-c - du(x), c - du(y)};
}

Sym2 CoulombOT::hess(double x, double y) const {
  if (x == y) fail(ErrorCode::domain, "hess is singular on the diagonal");
  const double c = 2.0 / std::pow(std::abs(y - x), 3);
  return {c - ddu(x), -c, c - ddu(y)};
}

double CoulombOT::q(double x) const { return hess(x, T(x)).trace(); }

Sym2 CoulombOT::sqrtA(double x) const {
  const Sym2 h = hess(x, T(x));
  const double tr = h.trace();
  if (!(tr > 0.0)) fail(ErrorCode::numerical, "Hessian trace is not positive on the graph");
  return (1.0 / std::sqrt(tr)) * h;
}

DomainH CoulombOT::domain(double H) const {
  require(H > 1.0 && std::isfinite(H), "H must exceed 1");
  auto inner = [&](double h) {
    // ρ([0, r]) = ρ([h, ∞))
    return d_.quantile_split(true, 0.5 - d_.sf(h), d_.sf(h));
  };
  DomainH dom;
  dom.H = H;
  dom.rH = inner(H);
  require(dom.rH < H, "H too small: r_H >= H");
  dom.omega = {Interval{T(dom.rH), T(H)}, Interval{dom.rH, H}};
  const double rp = inner(H + 1.0);
  dom.omega_p = {Interval{T(rp), T(H + 1.0)}, Interval{rp, H + 1.0}};
  return dom;
}

nlohmann::json LConstant::to_json() const {
  return {{"L", value},          {"rho_max", rho_max}, {"inv_rho_max", inv_rho_max},
          {"inv_dT_max", inv_dT_max}, {"T_C2", T_c2}, {"u_C2", u_c2},
          {"q_max", q_max},      {"inv_q_max", inv_q_max}, {"lip_rho", lip_rho},
          {"lip_ddu", lip_ddu},  {"max_abs_ddu", ddu_max}, {"max_abs_d2T", d2T_max}};
}

LConstant CoulombOT::L(const DomainH& dom, int samples) const {
  LConstant c;
  for (const Interval& iv : dom.omega_p) {
    const double hfd = 1e-4 * iv.length() / samples + 1e-6;
    for (int k = 0; k < samples; ++k) {
      const double x = iv.lo + iv.length() * k / (samples - 1.0);
      const double r = d_.pdf(x);
      const double t = T(x);
      const double dt = dT(x);
      const double d2t = d2T(x);
      const double qq = q(x);
      const double dd = ddu(x);
      c.rho_max = std::max(c.rho_max, r);
      c.inv_rho_max = std::max(c.inv_rho_max, 1.0 / r);
      c.inv_dT_max = std::max(c.inv_dT_max, 1.0 / dt);
      c.T_c2 = std::max({c.T_c2, std::abs(t), std::abs(dt), std::abs(d2t)});
      c.d2T_max = std::max(c.d2T_max, std::abs(d2t));
      c.u_c2 = std::max({c.u_c2, std::abs(u(x)), std::abs(du(x)), std::abs(dd)});
      c.q_max = std::max(c.q_max, qq);
      c.inv_q_max = std::max(c.inv_q_max, 1.0 / qq);
      c.lip_rho = std::max(c.lip_rho, std::abs(d_.dpdf(x)));
      c.ddu_max = std::max(c.ddu_max, std::abs(dd));
      const double xa = std::clamp(x - hfd, iv.lo, iv.hi), xb = std::clamp(x + hfd, iv.lo, iv.hi);
      c.lip_ddu = std::max(c.lip_ddu, std::abs(ddu(xb) - ddu(xa)) / (xb - xa));
    }
  }
  c.value = std::max({c.rho_max, c.inv_rho_max, c.inv_dT_max, c.T_c2, c.u_c2, c.q_max,
                      c.inv_q_max, c.lip_rho, c.lip_ddu});
  return c;
}

double CoulombOT::diagonal_gap(const DomainH& dom, int samples) const {
  double g = std::numeric_limits<double>::infinity();
  for (const Interval& iv : dom.omega)
    for (int k = 0; k < samples; ++k) {
      const double x = iv.lo + iv.length() * k / (samples - 1.0);
      g = std::min(g, std::abs(T(x) - x));
    }
  return g;
}

namespace {

QuadOptions functional_opts() {
  QuadOptions o;
  o.abs_tol = 1e-13;
  o.rel_tol = 1e-12;
  o.max_subdivisions = 20000;
  return o;
}

// Integral over the real line split at breakpoints, optionally restricted to a window.
FunctionalValue line_integral(const Fn1& f, std::vector<double> br, std::optional<Interval> window) {
  const QuadOptions opt = functional_opts();
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end()), br.end());
  FunctionalValue out;
  out.window = window;
  const double lo = window ? window->lo : -std::numeric_limits<double>::infinity();
  const double hi = window ? window->hi : std::numeric_limits<double>::infinity();
  std::vector<double> inside{}, below{}, above{};
  for (double b : br) {
    if (b > lo && b < hi) inside.push_back(b);
    if (b < lo) below.push_back(b);
    if (b > hi) above.push_back(b);
  }
  CompensatedSum in, tail;
  auto piecewise = [&](std::vector<double> pts, CompensatedSum& acc) {
    QuadResult r = integrate_pieces(f, std::move(pts), opt);
    acc.add(r.value);
    out.error += r.error;
  };
  if (window) {
    inside.insert(inside.begin(), lo);
    inside.push_back(hi);
    piecewise(inside, in);
    below.push_back(lo);
    above.insert(above.begin(), hi);
    piecewise(below, tail);
    piecewise(above, tail);
    QuadResult l = integrate_from_minus_inf(f, below.front(), opt);
    QuadResult r = integrate_to_inf(f, above.back(), opt);
    tail.add(l.value);
    tail.add(r.value);
    out.error += l.error + r.error;
  } else {
    piecewise(br, in);
    QuadResult l = integrate_from_minus_inf(f, br.front(), opt);
    QuadResult r = integrate_to_inf(f, br.back(), opt);
    in.add(l.value);
    in.add(r.value);
    out.error += l.error + r.error;
  }
  out.value = in.value();
  out.tail = tail.value();
  return out;
}

std::vector<double> standard_breaks(const CoulombOT& sol) {
  const Density1D& d = sol.density();
  std::vector<double> br{0.0};
  for (double t : {0.25, 0.5, 0.75}) br.push_back(d.quantile(t));
  for (double t : {0.05, 0.95}) br.push_back(d.quantile(t));
  return br;
}

}  // namespace

FunctionalValue f_ot(const CoulombOT& sol, std::optional<Interval> window) {
  const Density1D& d = sol.density();
  auto f = [&](double x) {
    if (x == 0.0 || !std::isfinite(x)) return 0.0;
    return d.pdf(x) / std::abs(x - sol.T(x));
  };
  return line_integral(f, standard_breaks(sol), window);
}

FunctionalValue f_zpo(const CoulombOT& sol, std::optional<Interval> window) {
  const Density1D& d = sol.density();
  auto f = [&](double x) {
    if (x == 0.0 || !std::isfinite(x)) return 0.0;
    return 0.5 * std::sqrt(std::max(0.0, sol.q(x))) * d.pdf(x);
  };
  return line_integral(f, standard_breaks(sol), window);
}

double f_zpo_weighted(const CoulombOT& sol, const std::function<double(double)>& w,
                      const std::vector<double>& extra_breaks) {
  const Density1D& d = sol.density();
  auto f = [&](double x) {
    if (x == 0.0 || !std::isfinite(x)) return 0.0;
    const double wx = w(x);
    if (wx == 0.0) return 0.0;
    return 0.5 * std::sqrt(std::max(0.0, sol.q(x))) * d.pdf(x) * wx;
  };
  std::vector<double> br = standard_breaks(sol);
  br.insert(br.end(), extra_breaks.begin(), extra_breaks.end());
  return line_integral(f, br, std::nullopt).value;
}

double f_zpo_omega(const CoulombOT& sol, const DomainH& dom, double tau) {
  const Density1D& d = sol.density();
  auto f = [&](double x) { return 0.5 * std::sqrt(std::max(0.0, sol.q(x))) * (d.pdf(x) - tau); };
  const QuadOptions opt = functional_opts();
  double s = 0.0;
  for (const Interval& iv : dom.omega) s += integrate(f, iv.lo, iv.hi, opt).value;
  return s;
}

double u_pairing(const CoulombOT& sol) {
  const Density1D& d = sol.density();
  auto f = [&](double x) {
    if (!std::isfinite(x)) return 0.0;
    return 2.0 * sol.u(x) * d.pdf(x);
  };
  QuadOptions opt;
  opt.abs_tol = 1e-11;
  opt.rel_tol = 1e-10;
  const double a = integrate_from_minus_inf(f, -1.0, opt).value;
  const double b = integrate(f, -1.0, 0.0, opt).value;
  const double c = integrate(f, 0.0, 1.0, opt).value;
  const double e = integrate_to_inf(f, 1.0, opt).value;
  return a + b + c + e;
}

nlohmann::json GrowthReport::to_json() const {
  return {{"eps0", eps0},       {"C", C},
          {"min_ratio", min_ratio}, {"max_graph_V", max_graph_V},
          {"samples", samples}, {"excluded", excluded}};
}

GrowthReport quadratic_growth_check(const CoulombOT& sol, double H, double eps0, int base_points,
                                    int offsets) {
  const DomainH dom = sol.domain(H);
  if (eps0 <= 0.0) eps0 = 0.25 * dom.rH;
  require(eps0 < 0.5 * dom.rH, "quadratic_growth_check: eps0 must stay below r_H/2");
  GrowthReport rep;
  rep.eps0 = eps0;
  rep.min_ratio = std::numeric_limits<double>::infinity();
  for (const Interval& iv : dom.omega) {
    for (int k = 0; k < base_points; ++k) {
      const double xf = iv.lo + iv.length() * k / (base_points - 1.0);
      const double yf = sol.T(xf);
      rep.max_graph_V = std::max(rep.max_graph_V, std::abs(sol.V(xf, yf)));
      const double slope = sol.dT(xf);
      const double nrm = std::hypot(1.0, slope);
      const Vec2 n{-slope / nrm, 1.0 / nrm};
      for (int j = -offsets; j <= offsets + 1; ++j) {
        if (j == 0) continue;  // on the graph: 0/0, V checked above
        // the last offset deliberately lands outside eps0 to exercise the exclusion rule
        const double s = (j == offsets + 1) ? 1.5 * eps0 : eps0 * j / offsets;
        const double px = xf + s * n.x, py = yf + s * n.y;
        auto dist2 = [&](double t) {
          const double dx = px - t, dy = py - sol.T(t);
          return dx * dx + dy * dy;
        };
        const double w = 2.0 * std::abs(s);
        double lo = xf - w, hi = xf + w;
        if (xf < 0) hi = std::min(hi, -1e-3 * dom.rH);
        else lo = std::max(lo, 1e-3 * dom.rH);
        const double tmin = golden_min(dist2, lo, hi, 1e-13 * std::max(1.0, std::abs(xf)));
        const double dist = std::sqrt(dist2(tmin));
        if (dist > eps0) {
          ++rep.excluded;
          continue;
        }
        const double ratio = sol.V(px, py) / (dist * dist);
        rep.C = std::max(rep.C, ratio);
        rep.min_ratio = std::min(rep.min_ratio, ratio);
        ++rep.samples;
      }
    }
  }
  if (rep.samples == 0) fail(ErrorCode::numerical, "quadratic_growth_check: no admissible samples");
  if (!std::isfinite(rep.C)) fail(ErrorCode::numerical, "quadratic_growth_check: ratio diverges");
  return rep;
}

}  // namespace zpo
