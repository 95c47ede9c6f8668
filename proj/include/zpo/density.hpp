#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "zpo/numerics.hpp"

namespace zpo {

namespace detail {
struct DensityImpl;
}

// Strictly positive C¹ probability density on the line, re-centered so that its median is 0.
// Immutable; copies share the underlying model.
class Density1D {
 public:
  double pdf(double x) const;
  double dpdf(double x) const;
  double cdf(double x) const;
  // 1 - cdf, accurate in the right tail.
  double sf(double x) const;
  // Mass between 0 and x, accurate for small |x|.
  double central_mass(double x) const;
  double quantile(double t) const;
  // Point on the given side of the median whose outer tail carries `tail` and whose distance to the
  // median carries `centre` (tail + centre = 1/2); uses whichever mass is smaller for accuracy.
  double quantile_split(bool right, double tail, double centre) const;
  double median() const { return 0.0; }

  bool symmetric() const;
  std::string kind() const;
  // Points where the pdf loses smoothness (table nodes), restricted to [lo, hi].
  std::vector<double> breakpoints(double lo, double hi) const;
  // The dilated density λ ρ(λ x).
  Density1D scaled(double lambda) const;
  nlohmann::json spec() const;

  explicit Density1D(std::shared_ptr<const detail::DensityImpl> impl, double lambda = 1.0);

 private:
  std::shared_ptr<const detail::DensityImpl> impl_;
  double lambda_ = 1.0;
};

// c_p (1+x²)^(-p/2), 2 <= p <= 3.
Density1D make_power_tail(double p);

// Nodes must be strictly increasing with positive values; the table is normalized and re-centered.
// Outside the table the density continues with a C¹-matched |x|^-3 tail.
Density1D make_tabulated(std::vector<double> x, std::vector<double> pdf);
Density1D load_tabulated_csv(const std::string& path);

// {"kind":"power_tail","p":2} or {"kind":"tabulated","path":"..."}.
Density1D density_from_json(const nlohmann::json& j);

// KE(ρ) = ∫ ρ'² / (8ρ) over [lo, hi].
double kinetic_energy_1d(const Density1D& d, double lo, double hi, const QuadOptions& opt = {});

struct TailCheck {
  double x0 = 0.0;
  double x1 = 0.0;
  double min_value = 0.0;  // min of |x|³ pdf(x) over x0 <= |x| <= x1
  double at = 0.0;
};
TailCheck tail_check(const Density1D& d, double x0, double x1, int samples = 2001);

}  // namespace zpo
