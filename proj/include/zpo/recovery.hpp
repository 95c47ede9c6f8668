#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zpo/coulomb_ot.hpp"
#include "zpo/grid.hpp"
#include "zpo/trunc_gauss.hpp"

namespace zpo {

// Absolute values win over relative factors. c_beta: β = c_β √ε N; c_delta, c_tau, c_N scale the
// default δ, τ, N.
struct Overrides {
  std::optional<double> N, beta, delta, tau;
  std::optional<double> c_N, c_beta, c_delta, c_tau;

  static Overrides from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  bool empty() const;
};

struct Ordering {
  std::string name;   // "lhs << rhs"
  double log_ratio;   // natural log of lhs/rhs
  bool holds;         // lhs/rhs <= kOrderingRatio
  double margin;      // log10(lhs/rhs)
};

constexpr double kOrderingRatio = 0.1;

struct ParameterSchedule {
  double eps = 0, H = 0, N = 0, beta = 0, delta = 0, tau = 0;
  Overrides overrides;
  std::vector<Ordering> validity;
  bool all_hold() const;
  nlohmann::json to_json() const;
};

// Default formulas N = L^{5/4}, β = √ε L³, δ = ε^{1/8}/L, τ = L^{-1/3} with L = |log ε|.
ParameterSchedule schedule(double eps, double H, const Overrides& ov = {});
// Orderings evaluated from logarithms so that astronomically small ε are representable.
std::vector<Ordering> evaluate_orderings(double log_eps, double log_N, double log_beta, double log_delta,
                                         double log_tau);

struct AllPassEstimate {
  double L = 0;             // smallest |log ε| from which every default ordering holds
  std::string symbolic;     // e.g. "eps <= exp(-1.23e+06) = 10^(-5.34e+05)"
  std::string binding;      // slowest ordering
};
AllPassEstimate all_pass_threshold();

// Smooth window w(x) = s(|x|) s(|T x|), with s = 1 below x_in and 0 above x_out (smootherstep in
// log r). w∘T = w, so T stays the optimal map of ρw.
class TargetDensity {
 public:
  TargetDensity(const CoulombOT& sol, double x_in, double x_out);
  double window(double x) const;
  double pdf(double x) const { return sol_->density().pdf(x) * window(x); }
  double x_in() const { return x_in_; }
  double x_out() const { return x_out_; }
  double mass() const;
  double f_zpo() const;  // ½∫√q ρ w
  std::vector<double> breakpoints() const;
  const CoulombOT& solution() const { return *sol_; }
  nlohmann::json to_json() const;

 private:
  double s(double r) const;
  const CoulombOT* sol_;
  double x_in_, x_out_;
};

// Grid half-width X = quantile(1 - tail_mass); it must exceed the outer edge of Ω_H'; window from there to X.
double grid_half_width(const Density1D& d, double tail_mass);
TargetDensity make_target(const CoulombOT& sol, double H, double X);

struct Piece {
  double a = 0, b = 0;  // I¹_i
  double Ta = 0, Tb = 0;
  double slope = 0;     // (T(b)-T(a))/(b-a)
  double xi = 0;        // freeze point, T'(xi) = slope
  double slope_residual = 0;
  bool fallback = false;
};

class Partition {
 public:
  Partition(const CoulombOT& sol, DomainH dom, double delta, std::vector<Piece> pieces);
  const std::vector<Piece>& pieces() const { return pieces_; }
  const DomainH& domain() const { return dom_; }
  double delta() const { return delta_; }
  double Tdelta(double x) const;
  double max_interp_error(int samples_per_piece = 16) const;  // sup |T_δ - T| on Ω_H
  double d2T_sup() const;                                       // sup |T''| on Ω_H (sampled)
  nlohmann::json to_json() const;

 private:
  const CoulombOT* sol_;
  DomainH dom_;
  double delta_;
  std::vector<Piece> pieces_;
};

Partition build_partition(const CoulombOT& sol, const DomainH& dom, double delta);

struct KernelRecord {
  double a = 0, b = 0, theta = 0;  // eigenvalues of M_{ε,β}(x_i) and frame angle
  double xa = 0, ya = 0;           // start of the centre path
  double length = 0;               // path length along the kernel's long axis
};

// One summand of γ̄: h1(w) L(z) in the frame of the piece's kernel, with L tabulated along the
// long axis (4-point Lagrange between table points).
class PieceDensity {
 public:
  PieceDensity(const CoulombOT& sol, const Piece& p, const ParameterSchedule& sched, int table_per_width = 48);
  double operator()(double x, double y) const;
  double mass() const { return mass_; }       // ∫ L
  double length() const { return ell_; }      // piece length along the graph chord
  const TruncatedGaussian& kernel() const { return kernel_; }
  std::array<double, 4> bounding_box() const;  // x0, x1, y0, y1

 private:
  struct Table {
    double z0 = 0, dz = 1;
    std::vector<double> v;
    double operator()(double z) const;
  };
  Piece piece_;
  TruncatedGaussian kernel_;
  double c_ = 1, ell_ = 0, ct_ = 1, st_ = 0;
  Table L_;
  double mass_ = 0;
};

struct MainPlanOptions {
  double min_cells = 3.0;   // grid cells per transverse length 1/√a
  int table_per_width = 48; // L_i table points per √β
};

struct MainPlan {
  GridField2D gammabar;
  GridField1D rho1, rho2;
  GridField1D target;          // cell averages of ρw
  double mass = 0;             // rasterised, before any trimming
  double mass_expected = 0;    // ρ(Ω_H) - τ|Ω_H|
  double mass_analytic = 0;    // Σ ∫ L_i
  double c_H = 0;              // min over Ω_H' nodes of (ρw - ρ^i_ε)/τ
  double trimmed_mass = 0;     // removed by trim_to_target
  int max_overlap = 0;
  double cells_per_width = 0;
  double max_half_w = 0, max_half_z = 0;
  std::vector<KernelRecord> kernels;
  nlohmann::json to_json() const;
};

MainPlan build_main_plan(const CoulombOT& sol, const Partition& part, const ParameterSchedule& sched,
                         const Axis& axis, const TargetDensity& target, const MainPlanOptions& opt = {});

// Where a marginal of γ̄ exceeds the target (only possible where the window is below one, i.e.
// outside Ω_H'), scale those rows and then columns down to it. Returns the removed mass.
double trim_to_target(MainPlan& mp);

struct MainPlanEnergy {
  double ke_scaled = 0;   // √ε KE
  double pe_scaled = 0;   // PE/√ε
  double E = 0;
  double target = 0;      // ½∫_{Ω_H} √q ρ
  double target_tau = 0;  // ½∫_{Ω_H} √q (ρ - τ)
  double gap = 0;         // E - target
  double masked_mass = 0;
  nlohmann::json to_json() const;
};

MainPlanEnergy main_plan_energy(const MainPlan& mp, const PotentialField& pot, const CoulombOT& sol,
                                const ParameterSchedule& sched);

}  // namespace zpo
