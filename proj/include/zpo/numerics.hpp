#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace zpo {

using Fn1 = std::function<double(double)>;

struct QuadOptions {
  double abs_tol = 1e-13;
  double rel_tol = 1e-11;
  int max_subdivisions = 4000;
};

struct QuadResult {
  double value = 0.0;
  double error = 0.0;
  long evaluations = 0;
  bool converged = true;
};

// Globally adaptive Gauss-Kronrod (7/15) quadrature on a finite interval.
QuadResult integrate(const Fn1& f, double a, double b, const QuadOptions& opt = {});

// Integrates piecewise over sorted breakpoints (duplicates and empty pieces skipped).
QuadResult integrate_pieces(const Fn1& f, std::vector<double> breaks, const QuadOptions& opt = {});

// ∫_a^∞ f via x = a + t/(1-t).
QuadResult integrate_to_inf(const Fn1& f, double a, const QuadOptions& opt = {});
// ∫_{-∞}^b f.
QuadResult integrate_from_minus_inf(const Fn1& f, double b, const QuadOptions& opt = {});

// Neumaier compensated sum.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_sum(const std::vector<double>& v);

struct GaussRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

// Gauss-Legendre rule with n points (cached, thread-safe).
const GaussRule& gauss_legendre(int n);

// Root of f on [lo, hi] given a sign change; bisection safeguarded secant.
double find_root(const Fn1& f, double lo, double hi, double xtol = 1e-14, int max_iter = 200);

// Solves g(x) = target for increasing g with derivative dg, Newton steps kept inside a bracket.
double newton_bisect(const Fn1& g, const Fn1& dg, double target, double lo, double hi,
                     double ftol = 1e-13, int max_iter = 200);

// Golden-section minimization of a unimodal function on [lo, hi]; returns argmin.
double golden_min(const Fn1& f, double lo, double hi, double xtol = 1e-10);

}  // namespace zpo
