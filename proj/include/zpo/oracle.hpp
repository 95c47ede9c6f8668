#pragma once

#include <functional>
#include <vector>

#include <json.hpp>

#include "zpo/coulomb_ot.hpp"
#include "zpo/grid.hpp"
#include "zpo/linalg2.hpp"

namespace zpo {

// H = kin·(−Δ_h) + W on a cell-centred grid, 5-point Laplacian with zero ghost cells.
// Inactive cells are pinned to zero (Dirichlet on the active set).
struct GridOperator {
  Axis ax, ay;
  double kin = 0.0;
  std::vector<double> W;
  std::vector<unsigned char> active;  // empty: every cell active
  bool point_symmetric = false;       // W, active invariant under (i, j) -> (n-1-i, n-1-j)

  size_t size() const { return size_t(ax.n) * size_t(ay.n); }
  bool is_active(size_t k) const { return active.empty() || active[k]; }
  void apply(const std::vector<double>& x, std::vector<double>& y) const;
  double rayleigh(const std::vector<double>& x) const;
  // Lowest Dirichlet eigenvalue of kin·(−Δ) on the box; the natural excitation scale.
  double kinetic_scale() const;
};

// −√ε/2 Δ + V/√ε: E_ε(ψ²) = area·ψᵀHψ.
GridOperator schrodinger_operator(const PotentialField& pot, double eps);
GridOperator schrodinger_operator(const GridField2D& V, double eps);
// ε(−Δ) + |Ax|² on the given axes.
GridOperator oscillator_operator(const Sym2& A, double eps, const Axis& ax, const Axis& ay);
void detect_point_symmetry(GridOperator& op);

struct EigenOptions {
  double tol = 1e-8;         // residual relative to max(|λ|, kinetic scale)
  int max_outer = 400;
  int max_inner = 4000;
  double inner_tol = 1e-11;
  int coarse_n = 64;         // warm-start ladder stops here
};

struct Eigenpair {
  double value = 0.0;
  std::vector<double> vec;   // Euclidean unit norm
  double residual = 0.0;     // ‖Hx − λx‖
  int outer = 0;
  long inner = 0;
  bool converged = false;
};

// Shifted inverse iteration with preconditioned CG inner solves. An empty start means all ones.
Eigenpair lowest_eigenpair(const GridOperator& op, std::vector<double> start = {}, const EigenOptions& opt = {});
// Same, warm-started from a chain of 2× coarsened problems (W block-averaged).
Eigenpair lowest_eigenpair_multilevel(const GridOperator& op, const EigenOptions& opt = {});

struct GroundStateResult {
  double eigenvalue = 0.0;
  GridField2D eigenfield;     // ψ with Σψ² h² = 1
  double predicted_limit = 0.0;
  double residual = 0.0;
  int outer = 0;
  long inner = 0;
  bool converged = false;
  double cells_per_width = 0.0;  // (ε/q)^{1/4}/h at the predicted minimiser, 0 if unknown
  nlohmann::json to_json() const;
};

GroundStateResult ground_state(const PotentialField& pot, double eps, const EigenOptions& opt = {});
// Cauchy-type instance: potential from the OT layer on (ax, ay), limit = min of ½√q over the graph in the box.
GroundStateResult ground_state(const CoulombOT& sol, double eps, const Axis& ax, const Axis& ay,
                               const EigenOptions& opt = {});

// min over graph points (x, T x) inside the box of ½√q(x), and its argmin.
struct PredictedLimit {
  double value = 0.0;
  double x = 0.0;
};
PredictedLimit predicted_limit(const CoulombOT& sol, const Axis& ax, const Axis& ay);

struct MarkovCheck {
  double t = 0.0;
  double mass_above = 0.0;   // ∫_{V>t} ψ²
  double bound = 0.0;        // √ε E / t
  double strict_bound = 0.0; // ε E / t, as literally stated; reported only
  bool ok = false;
  nlohmann::json to_json() const;
};
MarkovCheck markov_check(const GroundStateResult& g, const PotentialField& pot, double eps, double t);

struct ConstrainedOptions {
  double tol = 1e-5;        // relative duality gap
  int max_iter = 3000;
  int memory = 15;
  EigenOptions eig{1e-10, 400, 4000, 1e-12, 64};
};

struct ConstrainedResult {
  GridField2D plan;
  EnergyRecord energy;
  double dual_value = 0.0;         // lower bound from the dual potentials
  double kkt = 0.0;                // (E − dual)/|E|
  double marginal_residual = 0.0;  // max_i ‖marg_i − ρ_i‖₁ of the returned plan
  double pre_round_residual = 0.0; // same before rounding
  double mass = 0.0;
  int iterations = 0;
  long evaluations = 0;
  bool converged = false;
  std::vector<double> phi, psi;    // dual potentials
  nlohmann::json to_json() const;
};

// min √ε KE(γ) + PE(γ)/√ε over γ ≥ 0 with marginals ρ1, ρ2 (equal masses), n ≤ 64.
ConstrainedResult constrained_min(const PotentialField& pot, const GridField1D& rho1, const GridField1D& rho2,
                                  double eps, const ConstrainedOptions& opt = {});

// ε Σ|∇ψ|² h² + Σ|Ax|²ψ² h² and Σψ² h² for an amplitude ψ (zero ghosts).
struct OscillatorEnergy {
  double form = 0.0;
  double norm = 0.0;
  double ratio = 0.0;
  double exact = 0.0;     // tr(A)√ε
  double C = 0.0;         // √2/(r²λ)
  double bound = 0.0;     // tr(A)√ε/(1 + C√ε)
  nlohmann::json to_json() const;
};
OscillatorEnergy oscillator_energy(const GridField2D& psi, const Sym2& A, double eps, double r = 1.0);
GridField2D gaussian_trial(const Sym2& A, double eps, const Axis& ax, const Axis& ay);

// Truncated-Gaussian ratio h(N) of the delta construction in dimension 2.
double delta_h(double N);

struct DeltaRecord {
  double eps = 0.0, eta = 0.0, N = 0.0;
  double trace_A = 0.0;
  double energy = 0.0;   // E_ε(ψ_ε) with the given V
  double bound = 0.0;    // ½ tr(A) h(N)
  double target = 0.0;   // ½ tr √(D²V(0))
  nlohmann::json to_json() const;
};

// η solves √ε = √η δ(η)² / (−2 log η); A = √(D²V(0)) + √η Id, N = −log η.
double delta_eta(double eps, const std::function<double(double)>& delta = nullptr);
std::vector<DeltaRecord> delta_recovery(const Sym2& hessian, const std::function<double(Vec2)>& V,
                                        const std::vector<double>& eps_list,
                                        const std::function<double(double)>& delta = nullptr);

}  // namespace zpo
