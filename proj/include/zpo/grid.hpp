#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zpo/coulomb_ot.hpp"

namespace zpo {

// Uniform cell-centred axis: node i sits at lo + (i + ½)h.
struct Axis {
  double lo = 0.0;
  double h = 1.0;
  int n = 0;

  static Axis centered(double half_width, int n);
  double x(int i) const { return lo + (i + 0.5) * h; }
  double hi() const { return lo + n * h; }
  // Index of the cell containing x (may be out of range).
  int cell(double x) const;
  Axis padded(int left, int right) const { return {lo - left * h, h, n + left + right}; }
  bool same(const Axis& o) const { return lo == o.lo && h == o.h && n == o.n; }
  nlohmann::json to_json() const { return {{"lo", lo}, {"h", h}, {"n", n}}; }
};

struct GridField1D {
  Axis ax;
  std::vector<double> v;

  GridField1D() = default;
  GridField1D(Axis a, double fill = 0.0) : ax(a), v(size_t(a.n), fill) {}
  double mass() const;
  double mean() const;      // of the piecewise-constant density
  double variance() const;  // same, including the in-cell h²/12 term
  double max() const;
};

// Cell averages of a density (exact masses from the CDF).
GridField1D sample_density(const Density1D& d, const Axis& ax);
// Cell averages of f by a 4-point Gauss rule per cell.
GridField1D sample_cells(const std::function<double(double)>& f, const Axis& ax);
double l1_distance(const GridField1D& a, const GridField1D& b);

// Row-major in x: value(i, j) at (ax.x(i), ay.x(j)).
struct GridField2D {
  Axis ax, ay;
  std::vector<double> v;

  GridField2D() = default;
  GridField2D(Axis x, Axis y, double fill = 0.0) : ax(x), ay(y), v(size_t(x.n) * size_t(y.n), fill) {}
  double& at(int i, int j) { return v[size_t(i) * ay.n + j]; }
  double at(int i, int j) const { return v[size_t(i) * ay.n + j]; }
  double cell_area() const { return ax.h * ay.h; }
  double mass() const;
  GridField1D marginal_x() const;
  GridField1D marginal_y() const;
  double min() const;
  // Smallest index box holding all entries above thr; empty box has i0 > i1.
  struct Box {
    int i0, i1, j0, j1;
  };
  Box support_box(double thr = 0.0) const;
};

GridField2D operator+(const GridField2D& a, const GridField2D& b);
GridField2D scaled(const GridField2D& a, double s);
// Copy of f onto a larger axis pair that contains it on the same lattice.
GridField2D embed(const GridField2D& f, const Axis& ax, const Axis& ay);
// Average over factor×factor blocks (density-preserving; mass preserved).
GridField2D block_average(const GridField2D& f, int factor);
// Trim a padded field back onto (ax, ay); mass outside is returned in *lost.
GridField2D restrict_to(const GridField2D& f, const Axis& ax, const Axis& ay, double* lost = nullptr);

// V sampled on a grid. Cells closer to the diagonal than cap_cells·h carry the value of V at
// distance cap_cells·h (same midpoint, same side); those cells are flagged in `capped`.
struct PotentialField {
  GridField2D V;
  std::vector<unsigned char> capped;
  double cap_distance = 0.0;
};

PotentialField make_potential(const CoulombOT& sol, const Axis& ax, const Axis& ay, double cap_cells = 2.0);
PotentialField make_potential(const std::function<double(double, double)>& V, const Axis& ax,
                              const Axis& ay);

struct EnergyRecord {
  double ke = 0.0;  // ½Σ|∇√γ|² h², forward differences with zero ghost values
  double pe = 0.0;  // ΣVγ h²
  double e = 0.0;   // √ε KE + PE/√ε
  double masked_mass = 0.0;
  nlohmann::json to_json() const;
};

double kinetic_energy(const GridField2D& g);
double kinetic_energy(const GridField1D& g);  // ½Σ|Δ√g|²/h, same convention
EnergyRecord e_eps(const GridField2D& g, const PotentialField& pot, double eps);

// Direct convolution with a small kernel whose centre is at index (kx.n/2, ky.n/2) (odd sizes).
// The result lives on the input axes padded by the kernel half-widths, so mass is preserved.
GridField2D convolve2d(const GridField2D& f, const GridField2D& kernel);

// Monotone map between two equal-mass piecewise-constant densities.
class MonotoneMap {
 public:
  MonotoneMap() = default;
  MonotoneMap(std::vector<double> xs, std::vector<double> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {}
  double operator()(double x) const;
  const std::vector<double>& knots() const { return xs_; }
  const std::vector<double>& values() const { return ys_; }

 private:
  std::vector<double> xs_, ys_;
};

struct W2Result {
  double w2sq = 0.0;
  double mass = 0.0;
  MonotoneMap S;  // F_ν^{-1} ∘ F_μ
};

// W₂² between μ and ν (equal mass to rel_tol; ν is rescaled onto μ's mass).
W2Result w2_1d(const GridField1D& mu, const GridField1D& nu, double rel_tol = 1e-8);

// Monotone (north-west corner) coupling of atoms at positions src_pos with masses src_mass onto
// the cells of dst (in increasing position). Masses must agree to rel_tol; src is rescaled.
struct CouplingEntry {
  int src;
  int dst;
  double mass;
};
std::vector<CouplingEntry> monotone_coupling(const std::vector<double>& src_pos,
                                             const std::vector<double>& src_mass,
                                             const std::vector<double>& dst_mass, double rel_tol = 1e-6);

// Discrete optimal Coulomb coupling of ρ_h with itself (quantile shift by half the mass) and its
// cost ΣV γ under pot; a lower bound for ΣVγ over plans with marginals ρ_h.
struct DiscreteOT {
  GridField2D plan;
  double cost = 0.0;
};
DiscreteOT discrete_coulomb_ot(const GridField1D& rho, const PotentialField& pot);

// Text serialisation with shortest round-trip formatting. First line: "# " + JSON header.
std::string to_csv(const GridField2D& f);
std::string to_csv(const GridField1D& f);
GridField2D field2d_from_csv(const std::string& text);
GridField1D field1d_from_csv(const std::string& text);
std::string format_double(double x);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace zpo
