#pragma once

#include <array>
#include <optional>
#include <vector>

#include <json.hpp>

#include "zpo/density.hpp"
#include "zpo/linalg2.hpp"

namespace zpo {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double length() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct LConstant {
  double value = 0.0;  // max of the entries below
  double rho_max = 0.0, inv_rho_max = 0.0, inv_dT_max = 0.0;
  double T_c2 = 0.0, u_c2 = 0.0, q_max = 0.0, inv_q_max = 0.0;
  double lip_rho = 0.0, lip_ddu = 0.0;
  double ddu_max = 0.0;
  double d2T_max = 0.0;
  nlohmann::json to_json() const;
};

struct DomainH {
  double H = 0.0;
  double rH = 0.0;
  std::array<Interval, 2> omega;    // [T(r_H), T(H)] and [r_H, H]
  std::array<Interval, 2> omega_p;  // same with H+1
  double measure() const { return omega[0].length() + omega[1].length(); }
  bool in_omega(double x) const { return omega[0].contains(x) || omega[1].contains(x); }
  bool in_omega_p(double x) const { return omega_p[0].contains(x) || omega_p[1].contains(x); }
};

// 1D two-marginal Coulomb optimal transport: optimal map, Kantorovich potential, effective potential.
class CoulombOT {
 public:
  explicit CoulombOT(Density1D d, double anchor = -1.0);

  const Density1D& density() const { return d_; }

  double T(double x) const;
  double dT(double x) const;
  double d2T(double x) const;

  double u(double x) const;
  double du(double x) const;
  double ddu(double x) const;
  double u0() const { return u0_; }

  double V(double x, double y) const;
  Vec2 gradV(double x, double y) const;
  Sym2 hess(double x, double y) const;
  // Positive eigenvalue of the Hessian on the graph, and the matrix square root of that Hessian.
  double q(double x) const;
  Sym2 sqrtA(double x) const;

  DomainH domain(double H) const;
  LConstant L(const DomainH& dom, int samples = 801) const;
  // min over Ω_H of |T(x) - x|
  double diagonal_gap(const DomainH& dom, int samples = 801) const;

 private:
  double primitive_du(double x) const;  // ∫_0^x u'
  Density1D d_;
  double anchor_;
  double u0_ = 0.0;
};

struct FunctionalValue {
  double value = 0.0;       // over the window (or the whole line)
  double tail = 0.0;        // contribution of the complement of the window
  double error = 0.0;
  std::optional<Interval> window;
  double total() const { return value + tail; }
};

// ∫ ρ(x) / |x - T(x)| dx
FunctionalValue f_ot(const CoulombOT& sol, std::optional<Interval> window = std::nullopt);
// ½ ∫ √q(x) ρ(x) dx
FunctionalValue f_zpo(const CoulombOT& sol, std::optional<Interval> window = std::nullopt);
// 2 ∫ u dρ, reported next to F_OT as a consistency relation.
double u_pairing(const CoulombOT& sol);
// ½ ∫ √q ρ w over the line for a weight w (used for windowed targets).
double f_zpo_weighted(const CoulombOT& sol, const std::function<double(double)>& w,
                      const std::vector<double>& extra_breaks);
// ½ ∫_{Ω_H} √q (ρ - τ)
double f_zpo_omega(const CoulombOT& sol, const DomainH& dom, double tau = 0.0);

struct GrowthReport {
  double eps0 = 0.0;
  double C = 0.0;            // smallest admissible constant in V <= C dist²
  double min_ratio = 0.0;
  double max_graph_V = 0.0;  // |V| on the graph samples
  int samples = 0;
  int excluded = 0;          // offsets beyond eps0
  nlohmann::json to_json() const;
};

GrowthReport quadratic_growth_check(const CoulombOT& sol, double H, double eps0 = -1.0,
                                    int base_points = 41, int offsets = 8);

}  // namespace zpo
