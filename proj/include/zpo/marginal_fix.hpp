#pragma once

#include <json.hpp>

#include "zpo/grid.hpp"
#include "zpo/recovery.hpp"

namespace zpo {

// 1D marginal of Θ(x) = (4/π)(1-|x|²)³₊: θ(x) = 128/(35π) (1-x²)^{7/2}, KE(θ) = 7/5.
double bump_marginal(double x);
constexpr double kBumpMarginalKE = 1.4;

struct RemainderPlan {
  GridField1D sigma1, sigma2;
  GridField2D pi0;
  double mass = 0;
  double clipped_mass = 0;   // negative parts removed from σ¹, σ²
  double sigma_min = 0;      // most negative value before clipping
  double pe = 0;             // ∫V dπ₀
  double pe_scaled = 0;      // ε^{-1/2} ∫V dπ₀
  double w2sq = 0;           // Σ m |T_δ x - y|² over the coupling
  double max_shift = 0;      // sup over Ω_H' atoms of |S(T_δ x) - T_δ x|
  double shift_shape = 0;    // (W₂²/τ)^{1/3}
  nlohmann::json to_json() const;
};

// σ^i = target - ρ^i_ε, clipped at zero; π₀ couples T_δ#σ¹ monotonically with σ².
RemainderPlan remainder_plan(const MainPlan& mp, const Partition& part, const PotentialField& pot,
                             const ParameterSchedule& sched);
// Same coupling from explicit σ¹, σ² and a map; max_shift only looks at atoms where `where` holds.
RemainderPlan remainder_from_marginals(const GridField1D& s1, const GridField1D& s2,
                                       const std::function<double(double)>& map,
                                       const std::function<bool(double)>& where = nullptr);

struct DeconvolvedPlan {
  GridField2D kernel;      // Θ_ε on the grid lattice, unit discrete mass
  GridField1D theta;       // its discrete marginal
  GridField2D pi_eps;      // π₀ * Θ_ε on padded axes
  GridField2D pi_tilde;    // on the axes of π₀
  double marginal_error = 0;  // max_i ‖marg_i Π̃ - σ^i‖₁
  double lost_mass = 0;       // mass of Π̃ outside the axes of π₀ (zero by construction)
  nlohmann::json to_json() const;
};

GridField2D bump_kernel(double radius, const Axis& like);
// Outer product of the discrete marginals of bump_kernel; product plans are exact fixed points of
// deconvolution with this kernel, not with the radial one.
GridField2D separable_bump_kernel(double radius, const Axis& like);
DeconvolvedPlan deconvolve(const GridField2D& pi0, const GridField1D& s1, const GridField1D& s2, double eps);
// Same with an explicit odd-sized, unit-mass, symmetric kernel on the plan's lattice.
DeconvolvedPlan deconvolve_with(const GridField2D& pi0, const GridField1D& s1, const GridField1D& s2,
                                const GridField2D& kernel);

struct DeconvolutionCheck {
  double mass_pi0 = 0;
  double ke_tilde = 0, ke_sigma1 = 0, ke_sigma2 = 0;
  double ke_constant = 0;  // (KE(Π̃) - KE(σ¹) - KE(σ²)) √ε / ‖Π₀‖₁
  bool ke_ok = false;      // ke_constant <= 10 KE(θ)
  double pe_tilde_scaled = 0, pe_pi0_scaled = 0;
  double c_H = 2.0;        // fixed multiplier on the π₀ term
  double pe_constant = 0;  // (ε^{-1/2}PE(Π̃) - c_H ε^{-1/2}PE(Π₀)) / ‖Π₀‖₁
  bool support_ok = false; // supp Π̃ inside the 2ε^{1/4} neighbourhood of supp π₀
  nlohmann::json to_json() const;
};

DeconvolutionCheck deconvolution_pe_bound_check(const RemainderPlan& rp, const DeconvolvedPlan& dp,
                                                const PotentialField& pot, double eps);

// ε^{-1/2}(PE(Π̃) - PE(π)) when the whole main plan is deconvolved with its own marginals.
double naive_deconvolution_overhead(const MainPlan& mp, const PotentialField& pot, double eps);

struct RecoveryField {
  GridField2D psi_sq;
  EnergyRecord energy;
  double E_main = 0, E_tilde = 0;
  double marginal_residual = 0;  // max_i ‖marg_i ψ² - target‖₁
  bool upper_sandwich = false;   // E(ψ) <= E(√γ̄) + E(√Π̃)
  bool lower_sandwich = false;   // E(ψ) >= E(√γ̄)
  double f_zpo = 0;
  double gap = 0;                // E(ψ) - F_ZPO
  nlohmann::json to_json() const;
};

RecoveryField assemble_recovery(const MainPlan& mp, const DeconvolvedPlan& dp, const PotentialField& pot,
                                double eps, double f_zpo);

}  // namespace zpo
