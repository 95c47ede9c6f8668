#include "zpo/trunc_gauss.hpp"

#include <algorithm>
#include <cmath>

#include "zpo/error.hpp"
#include "zpo/numerics.hpp"

namespace zpo {

namespace {

const double kPi = std::acos(-1.0);

// Effective half-width (unit scale) used in place of √N for untruncated profiles.
double unit_half(double N) { return std::isfinite(N) ? std::sqrt(N) : std::sqrt(40.0); }

QuadOptions tight() {
  QuadOptions o;
  o.abs_tol = 1e-15;
  o.rel_tol = 1e-13;
  return o;
}

// Tensor Gauss-Legendre over [x0,x1]×[y0,y1] with px×py panels of 8 nodes.
template <class F>
double tensor_gl(F&& f, double x0, double x1, double y0, double y1, int px, int py) {
  const GaussRule& g = gauss_legendre(8);
  CompensatedSum s;
  const double hx = (x1 - x0) / px, hy = (y1 - y0) / py;
  for (int i = 0; i < px; ++i)
    for (int k = 0; k < 8; ++k) {
      const double x = x0 + hx * (i + 0.5 * (g.nodes[k] + 1.0));
      const double wx = 0.5 * hx * g.weights[k];
      for (int j = 0; j < py; ++j)
        for (int l = 0; l < 8; ++l) {
          const double y = y0 + hy * (j + 0.5 * (g.nodes[l] + 1.0));
          s.add(wx * 0.5 * hy * g.weights[l] * f(x, y));
        }
    }
  return s.value();
}

}  // namespace

double g_alpha_n(double alpha, double N) {
  require(alpha > 0.0, "g_alpha_n: alpha must be positive");
  const double ginf = std::sqrt(kPi / alpha);
  if (!std::isfinite(N)) return ginf;
  require(N > 0.0, "g_alpha_n: N must be positive");
  return ginf * std::erf(std::sqrt(N)) -
         2.0 * std::exp(-0.5 * N) * std::sqrt(2.0 * kPi / alpha) * std::erf(std::sqrt(0.5 * N)) +
         2.0 * std::exp(-N) * std::sqrt(N / alpha);
}

double profile(double t, double N) {
  if (!std::isfinite(N)) return std::exp(-t * t);
  if (t * t >= N) return 0.0;
  const double d = std::exp(-0.5 * t * t) - std::exp(-0.5 * N);
  return d * d;
}

double profile_d1(double t, double N) {
  if (!std::isfinite(N)) return -2.0 * t * std::exp(-t * t);
  if (t * t >= N) return 0.0;
  const double e = std::exp(-0.5 * t * t);
  return -2.0 * t * e * (e - std::exp(-0.5 * N));
}

double profile_d2(double t, double N) {
  if (!std::isfinite(N)) return (4.0 * t * t - 2.0) * std::exp(-t * t);
  if (t * t >= N) return 0.0;
  const double e = std::exp(-0.5 * t * t);
  return 2.0 * e * ((t * t - 1.0) * (e - std::exp(-0.5 * N)) + t * t * e);
}

TruncatedGaussian::TruncatedGaussian(double a, double b, double theta, double N, Vec2 center)
    : a_(a), b_(b), theta_(theta), N_(N), c_(center) {
  require(a > 0.0 && b > 0.0 && std::isfinite(a) && std::isfinite(b),
          "TruncatedGaussian: eigenvalues must be positive and finite");
  require(!std::isfinite(N) || N >= 3.0, "TruncatedGaussian: truncation level must be >= 3");
  ga_ = g_alpha_n(a, N);
  gb_ = g_alpha_n(b, N);
  ga1_ = g_alpha_n(1.0, N);
  sa_ = std::sqrt(a);
  sb_ = std::sqrt(b);
}

TruncatedGaussian TruncatedGaussian::from_matrix(const Sym2& M, double N, Vec2 center) {
  const Eig2 e = eig(M);
  require(e.small > 0.0, "TruncatedGaussian: M must be positive definite");
  return TruncatedGaussian(e.large, e.small, e.theta, N, center);
}

Sym2 TruncatedGaussian::M() const {
  const double c = std::cos(theta_), s = std::sin(theta_);
  // a along e_w = (-s, c), b along e_z = (c, s)
  return {a_ * s * s + b_ * c * c, (b_ - a_) * s * c, a_ * c * c + b_ * s * s};
}

Vec2 TruncatedGaussian::to_eigen(double x, double y) const {
  const double dx = x - c_.x, dy = y - c_.y;
  const double c = std::cos(theta_), s = std::sin(theta_);
  return {-s * dx + c * dy, c * dx + s * dy};
}

double TruncatedGaussian::operator()(double x, double y) const {
  const Vec2 e = to_eigen(x, y);
  return h1(e.x) * h2(e.y);
}

Interval TruncatedGaussian::support_x() const {
  const double W = unit_half(N_) / sa_, Z = unit_half(N_) / sb_;
  const double r = std::abs(std::sin(theta_)) * W + std::abs(std::cos(theta_)) * Z;
  return {c_.x - r, c_.x + r};
}

Interval TruncatedGaussian::support_y() const {
  const double W = unit_half(N_) / sa_, Z = unit_half(N_) / sb_;
  const double r = std::abs(std::cos(theta_)) * W + std::abs(std::sin(theta_)) * Z;
  return {c_.y - r, c_.y + r};
}

double TruncatedGaussian::conv(double x, double s1, double s2) const {
  // ∫ (h¹)_{s1}(x - t) (h²)_{s2}(t) dt with (h)_s(u) = h(u/s)/s
  const double W = unit_half(N_) / sa_, Z = unit_half(N_) / sb_;
  constexpr double tiny = 1e-13;
  if (s1 < tiny) return s2 < tiny ? 0.0 : h2(x / s2) / s2;
  if (s2 < tiny) return h1(x / s1) / s1;
  const double lo = std::max(-s2 * Z, x - s1 * W);
  const double hi = std::min(s2 * Z, x + s1 * W);
  if (!(hi > lo)) return 0.0;
  auto f = [&](double t) { return h1((x - t) / s1) / s1 * h2(t / s2) / s2; };
  return integrate(f, lo, hi, tight()).value;
}

double TruncatedGaussian::marginal_x(double x) const {
  return conv(x - c_.x, std::abs(std::sin(theta_)), std::abs(std::cos(theta_)));
}

double TruncatedGaussian::marginal_y(double y) const {
  return conv(y - c_.y, std::abs(std::cos(theta_)), std::abs(std::sin(theta_)));
}

double TruncatedGaussian::marginal_x_direct(double x) const {
  const double dx = x - c_.x;
  const double c = std::cos(theta_), s = std::sin(theta_);
  const double W = unit_half(N_) / sa_, Z = unit_half(N_) / sb_;
  double lo = -1e300, hi = 1e300;
  // |w| = |-s dx + c dy| <= W and |z| = |c dx + s dy| <= Z, as constraints on dy
  auto clip = [&](double coef, double off, double half) {
    if (std::abs(coef) < 1e-15) {
      if (std::abs(off) > half) hi = lo - 1.0;
      return;
    }
    double l = (-half - off) / coef, h = (half - off) / coef;
    if (l > h) std::swap(l, h);
    lo = std::max(lo, l);
    hi = std::min(hi, h);
  };
  clip(c, -s * dx, W);
  clip(s, c * dx, Z);
  if (!(hi > lo)) return 0.0;
  auto f = [&](double dy) { return (*this)(x, c_.y + dy); };
  return integrate(f, lo, hi, tight()).value;
}

double TruncatedGaussian::ke() const {
  if (!truncated()) return 0.25 * (a_ + b_);
  const double f = 0.25 * std::sqrt(kPi) *
                   (std::erf(std::sqrt(N_)) - 2.0 / std::sqrt(kPi) * std::exp(-N_) * std::sqrt(N_));
  return (sa_ / ga_ + sb_ / gb_) * f;
}

double TruncatedGaussian::gradient_l1() const {
  const double W = unit_half(N_) / sa_, Z = unit_half(N_) / sb_;
  auto f = [&](double w, double z) {
    const double g1 = dh1(w) * h2(z), g2 = h1(w) * dh2(z);
    return std::sqrt(g1 * g1 + g2 * g2);
  };
  return tensor_gl(f, -W, W, -Z, Z, 48, 48);
}

TruncatedGaussian make_kernel(const Sym2& A, double eps, double beta, double N, Vec2 center) {
  require(eps > 0.0 && N > 0.0, "make_kernel: eps and N must be positive");
  if (!(beta > 0.0) || !std::isfinite(beta))
    fail(ErrorCode::invalid_argument, "make_kernel: singular M (beta must be finite and positive)");
  const Eig2 e = eig(A);
  const double scale = std::max(1.0, std::abs(e.large));
  require(e.small >= -1e-8 * scale && std::abs(e.small) <= 1e-8 * scale,
          "make_kernel: A must be PSD with a zero eigenvalue");
  const double lam = std::max(0.0, e.large);
  return TruncatedGaussian(lam / std::sqrt(eps) + 1.0 / beta, 1.0 / beta, e.theta, N, center);
}

double TruncationReport::max_constant() const {
  return std::max({c_g, c_linf, c_l1, c_marg, c_quad, c_ke});
}

nlohmann::json TruncationReport::to_json() const {
  return {{"a", a},         {"b", b},           {"N", N},         {"theta", theta},
          {"G_strict", g_strict}, {"C_G", c_g}, {"C_Linf", c_linf}, {"C_L1", c_l1},
          {"C_marginal", c_marg}, {"C_quadratic", c_quad}, {"C_KE", c_ke}};
}

TruncationReport truncation_error_report(double a, double b, double N, double theta) {
  require(N >= 3.0 && std::isfinite(N), "truncation_error_report: N must be finite and >= 3");
  TruncationReport r;
  r.a = a;
  r.b = b;
  r.N = N;
  r.theta = theta;
  const double en = std::exp(-0.5 * N);
  const double gN = g_alpha_n(a, N) * g_alpha_n(b, N);
  const double gI = g_alpha_n(a, kNoTruncation) * g_alpha_n(b, kNoTruncation);
  r.g_strict = gN < gI;
  r.c_g = (gI - gN) / (en * gI);

  // In the scaled variables s = √a w, t = √b z the kernels become √(ab) Φ(s,t) with Φ a product
  // of unit profiles, so the L∞/L¹/quadratic constants only depend on N.
  const double g1N = g_alpha_n(1.0, N), g1I = std::sqrt(kPi);
  auto phiN = [&](double s) { return profile(s, N) / g1N; };
  auto phiI = [&](double s) { return std::exp(-s * s) / g1I; };
  auto diff = [&](double s, double t) { return std::abs(phiN(s) * phiN(t) - phiI(s) * phiI(t)); };
  const double rN = std::sqrt(N);
  double sup = 0.0;
  const int m = 400;
  for (int i = 0; i <= m; ++i)
    for (int j = 0; j <= m; ++j) {
      const double s = (rN + 1.0) * i / m, t = (rN + 1.0) * j / m;
      sup = std::max(sup, diff(s, t));
    }
  r.linf = std::sqrt(a * b) * sup;
  r.c_linf = sup / en;

  const double S = rN + 7.0;
  // quadrant integrals, split at the truncation edge √N
  double l1 = 0.0, q = 0.0;
  const double edges[3] = {0.0, rN, S};
  for (int ia = 0; ia < 2; ++ia)
    for (int ib = 0; ib < 2; ++ib) {
      l1 += tensor_gl(diff, edges[ia], edges[ia + 1], edges[ib], edges[ib + 1], 40, 40);
      q += tensor_gl([&](double s, double t) { return s * s * diff(s, t); }, edges[ia], edges[ia + 1],
                     edges[ib], edges[ib + 1], 40, 40);
    }
  l1 *= 4.0;
  q *= 4.0;
  r.l1 = l1;
  r.c_l1 = l1 / (N * en);
  r.quad = (a + b) * q;
  r.c_quad = q / (N * en);

  const TruncatedGaussian kN(a, b, theta, N), kI(a, b, theta, kNoTruncation);
  r.ke_diff = std::abs(kN.ke() - kI.ke());
  r.c_ke = r.ke_diff / ((a + b) * en);

  const double sn = std::sin(theta), cs = std::cos(theta);
  const double var = sn * sn / (2.0 * a) + cs * cs / (2.0 * b);
  const Interval sx = kN.support_x();
  double msup = 0.0;
  const int mx = 600;
  for (int i = 0; i <= mx; ++i) {
    const double x = sx.hi * 1.2 * (2.0 * i / mx - 1.0);
    const double ei = std::exp(-x * x / (2.0 * var)) / std::sqrt(2.0 * kPi * var);
    msup = std::max(msup, std::abs(kN.marginal_x(x) - ei));
  }
  r.marg = msup;
  r.c_marg = msup / (std::sqrt(a) * rN * en);
  return r;
}

double kernel_l1_distance(const TruncatedGaussian& k1, const TruncatedGaussian& k2) {
  // Work in the eigenframe of k1; box covers both supports.
  const double c = std::cos(k1.theta()), s = std::sin(k1.theta());
  auto frame = [&](double x, double y) {
    const double dx = x - k1.center().x, dy = y - k1.center().y;
    return Vec2{-s * dx + c * dy, c * dx + s * dy};
  };
  double w0 = -k1.half_w(), w1 = k1.half_w(), z0 = -k1.half_z(), z1 = k1.half_z();
  {
    const double c2 = std::cos(k2.theta()), s2 = std::sin(k2.theta());
    for (int sw : {-1, 1})
      for (int sz : {-1, 1}) {
        const double w = sw * k2.half_w(), z = sz * k2.half_z();
        const Vec2 p{k2.center().x - s2 * w + c2 * z, k2.center().y + c2 * w + s2 * z};
        const Vec2 e = frame(p.x, p.y);
        w0 = std::min(w0, e.x);
        w1 = std::max(w1, e.x);
        z0 = std::min(z0, e.y);
        z1 = std::max(z1, e.y);
      }
  }
  require(std::isfinite(w0 + w1 + z0 + z1), "kernel_l1_distance: kernels must be truncated");
  auto f = [&](double w, double z) {
    const double x = k1.center().x - s * w + c * z, y = k1.center().y + c * w + s * z;
    return std::abs(k1(x, y) - k2(x, y));
  };
  const double pw = std::min(k1.half_w(), k2.half_w()) / 6.0;
  const double pz = std::min(k1.half_z(), k2.half_z()) / 6.0;
  const int nw = std::clamp(int(std::ceil((w1 - w0) / pw)), 8, 400);
  const int nz = std::clamp(int(std::ceil((z1 - z0) / pz)), 8, 400);
  return tensor_gl(f, w0, w1, z0, z1, nw, nz);
}

double kernel_distance_bound_shape(double eps, double beta, double delta) {
  return std::pow(eps, -0.25) * delta * delta + std::pow(eps, -0.5) * beta * delta;
}

}  // namespace zpo
