#pragma once

#include <limits>

#include <json.hpp>

#include "zpo/coulomb_ot.hpp"
#include "zpo/linalg2.hpp"

namespace zpo {

constexpr double kNoTruncation = std::numeric_limits<double>::infinity();

// G_{α,N} = ∫ (e^{-αt²/2} - e^{-N/2})₊² dt, and G_{α,∞} = √(π/α).
double g_alpha_n(double alpha, double N);

// Unit-scale truncated profile (e^{-t²/2} - e^{-N/2})₊² (or e^{-t²} when N = ∞) and derivatives.
double profile(double t, double N);
double profile_d1(double t, double N);
double profile_d2(double t, double N);

// Γ_{M,N} = h¹(w) h²(z), with eigen-coordinates w = -sinθ Δx + cosθ Δy, z = cosθ Δx + sinθ Δy
// relative to the center; a is the eigenvalue along w, b along z.
class TruncatedGaussian {
 public:
  TruncatedGaussian(double a, double b, double theta, double N, Vec2 center = {});
  static TruncatedGaussian from_matrix(const Sym2& M, double N, Vec2 center = {});

  double a() const { return a_; }
  double b() const { return b_; }
  double theta() const { return theta_; }
  double N() const { return N_; }
  Vec2 center() const { return c_; }
  bool truncated() const { return std::isfinite(N_); }
  Sym2 M() const;
  double norm_const() const { return ga_ * gb_; }  // G_{M,N}

  double h1(double w) const { return profile(std::sqrt(a_) * w, N_) * sa_ / ga1_; }
  double h2(double z) const { return profile(std::sqrt(b_) * z, N_) * sb_ / ga1_; }
  double dh1(double w) const { return profile_d1(std::sqrt(a_) * w, N_) * a_ / ga1_; }
  double dh2(double z) const { return profile_d1(std::sqrt(b_) * z, N_) * b_ / ga1_; }
  double d2h2(double z) const { return profile_d2(std::sqrt(b_) * z, N_) * b_ * sb_ / ga1_; }

  Vec2 to_eigen(double x, double y) const;  // (w, z)
  double operator()(double x, double y) const;

  // Half-widths of the support rectangle (infinite when untruncated).
  double half_w() const { return std::sqrt(N_ / a_); }
  double half_z() const { return std::sqrt(N_ / b_); }
  Interval support_x() const;
  Interval support_y() const;

  // First and second marginals via the convolution-of-rescalings representation.
  double marginal_x(double x) const;
  double marginal_y(double y) const;
  // First marginal by direct quadrature of Γ along y (oracle for marginal_x).
  double marginal_x_direct(double x) const;

  double ke() const;  // ½∫|∇√Γ|², closed form
  double gradient_l1() const;  // ∫|∇Γ| by quadrature

 private:
  double conv(double x, double s1, double s2) const;
  double a_, b_, theta_, N_;
  Vec2 c_;
  double ga_, gb_, ga1_, sa_, sb_;
};

// M = A/√ε + I/β for a rank-one PSD A (A = 0 allowed).
TruncatedGaussian make_kernel(const Sym2& A, double eps, double beta, double N, Vec2 center = {});

struct TruncationReport {
  double a = 0, b = 0, N = 0, theta = 0;
  bool g_strict = false;   // G_{M,N} < G_{M,∞}
  double c_g = 0;          // (G_∞ - G_N) / (e^{-N/2} G_∞)
  double c_linf = 0;       // ‖Γ_N - Γ_∞‖_∞ / (√det M e^{-N/2})
  double c_l1 = 0;         // ‖Γ_N - Γ_∞‖_1 / (N e^{-N/2})
  double c_marg = 0;       // ‖η_N - η_∞‖_∞ / (√a √N e^{-N/2})
  double c_quad = 0;       // ∫|Mx|²|Γ_N - Γ_∞| / (tr M N e^{-N/2})
  double c_ke = 0;         // |KE_N - KE_∞| / (tr M e^{-N/2})
  double linf = 0, l1 = 0, marg = 0, quad = 0, ke_diff = 0;
  double max_constant() const;
  nlohmann::json to_json() const;
};

TruncationReport truncation_error_report(double a, double b, double N, double theta = 0.0);

// ‖Γ₁ - Γ₂‖₁ by tensor Gauss-Legendre quadrature over a box covering both supports.
double kernel_l1_distance(const TruncatedGaussian& k1, const TruncatedGaussian& k2);
// Shape of the frozen-matrix bound ε^{-1/4}δ² + ε^{-1/2}βδ.
double kernel_distance_bound_shape(double eps, double beta, double delta);

}  // namespace zpo
