#include "zpo/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include <fftw3.h>

#include "zpo/error.hpp"
#include "zpo/numerics.hpp"

namespace zpo {

namespace {

constexpr double kPi = 3.14159265358979323846;

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

void mask(const GridOperator& op, std::vector<double>& x) {
  if (op.active.empty()) return;
  for (size_t k = 0; k < x.size(); ++k)
    if (!op.active[k]) x[k] = 0.0;
}

void symmetrise(const GridOperator& op, std::vector<double>& x) {
  if (!op.point_symmetric) return;
  const size_t n = x.size();
  for (size_t k = 0; k < n / 2; ++k) {
    const double m = 0.5 * (x[k] + x[n - 1 - k]);
    x[k] = x[n - 1 - k] = m;
  }
}

std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

// (kin·(−Δ) + c)⁻¹ with the half-cell Dirichlet Laplacian, diagonalised by DST-II/III (power-of-two
// friendly, unlike DST-I on n+1). Masked on both sides so it stays SPD on the active set.
class DstPreconditioner {
 public:
  explicit DstPreconditioner(const GridOperator& op) : op_(op), buf_(op.size()), lx_(op.ax.n), ly_(op.ay.n) {
    const int nx = op.ax.n, ny = op.ay.n;
    for (int k = 0; k < nx; ++k) {
      const double s = std::sin(kPi * (k + 1) / (2.0 * nx));
      lx_[k] = 4.0 * s * s / (op.ax.h * op.ax.h);
    }
    for (int k = 0; k < ny; ++k) {
      const double s = std::sin(kPi * (k + 1) / (2.0 * ny));
      ly_[k] = 4.0 * s * s / (op.ay.h * op.ay.h);
    }
    std::lock_guard<std::mutex> lk(fftw_mutex());
    fwd_ = fftw_plan_r2r_2d(nx, ny, buf_.data(), buf_.data(), FFTW_RODFT10, FFTW_RODFT10, FFTW_ESTIMATE);
    bwd_ = fftw_plan_r2r_2d(nx, ny, buf_.data(), buf_.data(), FFTW_RODFT01, FFTW_RODFT01, FFTW_ESTIMATE);
    if (!fwd_ || !bwd_) fail(ErrorCode::internal, "fftw: could not create a sine-transform plan");
  }
  ~DstPreconditioner() {
    std::lock_guard<std::mutex> lk(fftw_mutex());
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }
  DstPreconditioner(const DstPreconditioner&) = delete;
  DstPreconditioner& operator=(const DstPreconditioner&) = delete;

  void set_shift(double c) { c_ = c; }

  void apply(const std::vector<double>& r, std::vector<double>& z) {
    const int nx = op_.ax.n, ny = op_.ay.n;
    for (size_t k = 0; k < buf_.size(); ++k) buf_[k] = op_.is_active(k) ? r[k] : 0.0;
    fftw_execute(fwd_);
    const double norm = 4.0 * nx * ny;
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) buf_[size_t(i) * ny + j] /= norm * (op_.kin * (lx_[i] + ly_[j]) + c_);
    fftw_execute(bwd_);
    z.resize(buf_.size());
    for (size_t k = 0; k < buf_.size(); ++k) z[k] = op_.is_active(k) ? buf_[k] : 0.0;
  }

 private:
  const GridOperator& op_;
  std::vector<double> buf_, lx_, ly_;
  double c_ = 0.0;
  fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

struct CgOutcome {
  long iterations = 0;
  bool indefinite = false;
  bool converged = false;
};

// Solves (H − σ)y = b; y holds the initial guess.
CgOutcome pcg(const GridOperator& op, double sigma, const std::vector<double>& b, std::vector<double>& y,
              DstPreconditioner& P, double tol, int max_it) {
  CgOutcome out;
  const size_t n = b.size();
  std::vector<double> r(n), z(n), p(n), Ap(n);
  op.apply(y, Ap);
  for (size_t k = 0; k < n; ++k) r[k] = b[k] - (Ap[k] - sigma * y[k]);
  mask(op, r);
  const double bnorm = norm2(b);
  if (bnorm == 0.0) {
    std::fill(y.begin(), y.end(), 0.0);
    out.converged = true;
    return out;
  }
  P.apply(r, z);
  p = z;
  double rz = dot(r, z);
  for (int it = 0; it < max_it; ++it) {
    if (norm2(r) <= tol * bnorm) {
      out.converged = true;
      break;
    }
    op.apply(p, Ap);
    for (size_t k = 0; k < n; ++k) Ap[k] -= sigma * p[k];
    const double pAp = dot(p, Ap);
    if (!(pAp > 0.0)) {
      out.indefinite = true;
      break;
    }
    const double alpha = rz / pAp;
    for (size_t k = 0; k < n; ++k) {
      y[k] += alpha * p[k];
      r[k] -= alpha * Ap[k];
    }
    P.apply(r, z);
    const double rz_new = dot(r, z);
    if (rz_new < 0.0) {  // σ above the bottom of the spectrum
      out.indefinite = true;
      break;
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (size_t k = 0; k < n; ++k) p[k] = z[k] + beta * p[k];
    ++out.iterations;
  }
  return out;
}

GridOperator coarsen(const GridOperator& op) {
  GridOperator c;
  c.ax = {op.ax.lo, 2.0 * op.ax.h, op.ax.n / 2};
  c.ay = {op.ay.lo, 2.0 * op.ay.h, op.ay.n / 2};
  c.kin = op.kin;
  c.W.assign(c.size(), 0.0);
  if (!op.active.empty()) c.active.assign(c.size(), 0);
  const int ny = op.ay.n, cy = c.ay.n;
  for (int i = 0; i < c.ax.n; ++i)
    for (int j = 0; j < cy; ++j) {
      double s = 0.0;
      int on = 0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
          const size_t k = size_t(2 * i + a) * ny + (2 * j + b);
          s += op.W[k];
          on += op.is_active(k);
        }
      c.W[size_t(i) * cy + j] = 0.25 * s;
      if (!c.active.empty()) c.active[size_t(i) * cy + j] = on > 0;
    }
  c.point_symmetric = op.point_symmetric;
  return c;
}

// Matrix function of a symmetric 2×2 through its eigendecomposition.
Sym2 sym_fn(const Sym2& m, const std::function<double(double)>& f) {
  const Eig2 e = eig(m);
  const double c = std::cos(e.theta), s = std::sin(e.theta);
  const double fs = f(e.small), fl = f(e.large);
  // small ↔ (c, s), large ↔ (−s, c)
  return {fs * c * c + fl * s * s, (fs - fl) * c * s, fs * s * s + fl * c * c};
}

}  // namespace

void GridOperator::apply(const std::vector<double>& x, std::vector<double>& y) const {
  const int nx = ax.n, ny = ay.n;
  const double cx = kin / (ax.h * ax.h), cy = kin / (ay.h * ay.h);
  y.resize(x.size());
  for (int i = 0; i < nx; ++i) {
    const double* up = i > 0 ? &x[size_t(i - 1) * ny] : nullptr;
    const double* dn = i + 1 < nx ? &x[size_t(i + 1) * ny] : nullptr;
    const double* row = &x[size_t(i) * ny];
    double* out = &y[size_t(i) * ny];
    const double* w = &W[size_t(i) * ny];
    for (int j = 0; j < ny; ++j) {
      double lap = 2.0 * (cx + cy) * row[j];
      if (up) lap -= cx * up[j];
      if (dn) lap -= cx * dn[j];
      if (j > 0) lap -= cy * row[j - 1];
      if (j + 1 < ny) lap -= cy * row[j + 1];
      out[j] = lap + w[j] * row[j];
    }
  }
  if (!active.empty())
    for (size_t k = 0; k < y.size(); ++k)
      if (!active[k]) y[k] = 0.0;
}

double GridOperator::rayleigh(const std::vector<double>& x) const {
  std::vector<double> y;
  apply(x, y);
  return dot(x, y) / dot(x, x);
}

double GridOperator::kinetic_scale() const {
  const double Lx = ax.n * ax.h, Ly = ay.n * ay.h;
  return kin * kPi * kPi * (1.0 / (Lx * Lx) + 1.0 / (Ly * Ly));
}

void detect_point_symmetry(GridOperator& op) {
  op.point_symmetric = false;
  const double tx = 1e-12 * (std::abs(op.ax.lo) + op.ax.h), ty = 1e-12 * (std::abs(op.ay.lo) + op.ay.h);
  if (std::abs(op.ax.lo + op.ax.hi()) > tx || std::abs(op.ay.lo + op.ay.hi()) > ty) return;
  const size_t n = op.size();
  for (size_t k = 0; k < n / 2; ++k) {
    const double a = op.W[k], b = op.W[n - 1 - k];
    if (std::abs(a - b) > 1e-10 * std::max({1.0, std::abs(a), std::abs(b)})) return;
    if (op.is_active(k) != op.is_active(n - 1 - k)) return;
  }
  op.point_symmetric = true;
}

GridOperator schrodinger_operator(const GridField2D& V, double eps) {
  require(eps > 0.0, "schrodinger_operator: eps must be positive");
  GridOperator op;
  op.ax = V.ax;
  op.ay = V.ay;
  op.kin = 0.5 * std::sqrt(eps);
  op.W.resize(V.v.size());
  const double s = 1.0 / std::sqrt(eps);
  for (size_t k = 0; k < V.v.size(); ++k) op.W[k] = s * V.v[k];
  detect_point_symmetry(op);
  return op;
}

GridOperator schrodinger_operator(const PotentialField& pot, double eps) { return schrodinger_operator(pot.V, eps); }

GridOperator oscillator_operator(const Sym2& A, double eps, const Axis& ax, const Axis& ay) {
  require(eps > 0.0, "oscillator_operator: eps must be positive");
  GridOperator op;
  op.ax = ax;
  op.ay = ay;
  op.kin = eps;
  op.W.resize(op.size());
  for (int i = 0; i < ax.n; ++i)
    for (int j = 0; j < ay.n; ++j) {
      const Vec2 v = A.apply({ax.x(i), ay.x(j)});
      op.W[size_t(i) * ay.n + j] = v.x * v.x + v.y * v.y;
    }
  detect_point_symmetry(op);
  return op;
}

Eigenpair lowest_eigenpair(const GridOperator& op, std::vector<double> start, const EigenOptions& opt) {
  require(op.ax.n > 0 && op.ay.n > 0 && op.W.size() == op.size(), "lowest_eigenpair: operator is malformed");
  require(op.active.empty() || op.active.size() == op.size(), "lowest_eigenpair: mask size differs from the grid");
  const size_t n = op.size();
  Eigenpair res;
  std::vector<double>& x = res.vec;
  x = start.empty() ? std::vector<double>(n, 1.0) : std::move(start);
  require(x.size() == n, "lowest_eigenpair: start vector has the wrong size");
  symmetrise(op, x);
  mask(op, x);
  double nx = norm2(x);
  require(nx > 0.0, "lowest_eigenpair: start vector vanishes on the active set");
  for (double& v : x) v /= nx;

  const double scale = std::max(op.kinetic_scale(), 1e-300);
  std::vector<double> Hx, y(n);
  auto refresh = [&] {
    op.apply(x, Hx);
    res.value = dot(x, Hx);
    double r2 = 0.0;
    for (size_t k = 0; k < n; ++k) r2 += (Hx[k] - res.value * x[k]) * (Hx[k] - res.value * x[k]);
    res.residual = std::sqrt(r2);
  };
  refresh();
  DstPreconditioner P(op);
  double floor = 1e-3;
  for (res.outer = 0; res.outer < opt.max_outer; ++res.outer) {
    const double ref = std::max(std::abs(res.value), scale);
    if (res.residual <= opt.tol * ref) {
      res.converged = true;
      break;
    }
    const double margin = std::max(3.0 * res.residual, floor * ref);
    const double sigma = res.value - margin;
    P.set_shift(margin + std::abs(res.value));  // typical W where the mode lives
    for (size_t k = 0; k < n; ++k) y[k] = x[k] / margin;
    const double tol = std::clamp(0.1 * res.residual / ref, opt.inner_tol, 1e-4);
    const CgOutcome cg = pcg(op, sigma, x, y, P, tol, opt.max_inner);
    res.inner += cg.iterations;
    if (cg.indefinite) {
      floor *= 10.0;
      continue;
    }
    symmetrise(op, y);
    mask(op, y);
    const double ny = norm2(y);
    if (!(ny > 0.0) || !std::isfinite(ny)) fail(ErrorCode::numerical, "lowest_eigenpair: inner solve diverged");
    for (size_t k = 0; k < n; ++k) x[k] = y[k] / ny;
    refresh();
  }
  return res;
}

Eigenpair lowest_eigenpair_multilevel(const GridOperator& op, const EigenOptions& opt) {
  const bool can = op.ax.n % 2 == 0 && op.ay.n % 2 == 0 && std::min(op.ax.n, op.ay.n) / 2 >= opt.coarse_n;
  if (!can) return lowest_eigenpair(op, {}, opt);
  const GridOperator c = coarsen(op);
  EigenOptions copt = opt;
  copt.tol = std::max(opt.tol, 1e-5);
  const Eigenpair ce = lowest_eigenpair_multilevel(c, copt);
  std::vector<double> start(op.size());
  const int ny = op.ay.n, cy = c.ay.n;
  for (int i = 0; i < op.ax.n; ++i)
    for (int j = 0; j < ny; ++j) start[size_t(i) * ny + j] = ce.vec[size_t(i / 2) * cy + j / 2];
  Eigenpair e = lowest_eigenpair(op, std::move(start), opt);
  e.inner += ce.inner;
  return e;
}

nlohmann::json GroundStateResult::to_json() const {
  return {{"eigenvalue", eigenvalue},       {"predicted_limit", predicted_limit},
          {"residual", residual},           {"outer_iterations", outer},
          {"inner_iterations", inner},      {"converged", converged},
          {"cells_per_width", cells_per_width}, {"grid", {{"x", eigenfield.ax.to_json()}, {"y", eigenfield.ay.to_json()}}}};
}

GroundStateResult ground_state(const PotentialField& pot, double eps, const EigenOptions& opt) {
  const GridOperator op = schrodinger_operator(pot, eps);
  const Eigenpair e = lowest_eigenpair_multilevel(op, opt);
  if (!e.converged)
    fail(ErrorCode::numerical, "ground_state: no convergence after " + std::to_string(e.outer) +
                                   " iterations, residual " + format_double(e.residual));
  GroundStateResult g;
  g.eigenvalue = e.value;
  g.residual = e.residual;
  g.outer = e.outer;
  g.inner = e.inner;
  g.converged = e.converged;
  g.eigenfield = GridField2D(pot.V.ax, pot.V.ay);
  const double s = 1.0 / std::sqrt(g.eigenfield.cell_area());
  double total = 0.0;
  for (double v : e.vec) total += v;
  const double c = total < 0.0 ? -s : s;  // positive ground state
  for (size_t k = 0; k < e.vec.size(); ++k) g.eigenfield.v[k] = c * e.vec[k];
  g.predicted_limit = std::numeric_limits<double>::quiet_NaN();
  return g;
}

PredictedLimit predicted_limit(const CoulombOT& sol, const Axis& ax, const Axis& ay) {
  const double lo = ax.lo, hi = ax.hi(), ylo = ay.lo, yhi = ay.hi();
  auto inside = [&](double x) {
    if (std::abs(x) < 1e-12) return false;
    const double t = sol.T(x);
    return t >= ylo && t <= yhi;
  };
  auto f = [&](double x) { return 0.5 * std::sqrt(std::max(0.0, sol.q(x))); };
  const int m = 20000;
  const double dx = (hi - lo) / m;
  PredictedLimit best{std::numeric_limits<double>::infinity(), 0.0};
  int kbest = -1;
  for (int k = 0; k <= m; ++k) {
    const double x = lo + k * dx;
    if (!inside(x)) continue;
    const double v = f(x);
    if (v < best.value) {
      best = {v, x};
      kbest = k;
    }
  }
  if (kbest < 0) fail(ErrorCode::domain, "predicted_limit: the graph of T misses the box");
  const double a = lo + (kbest - 1) * dx, b = lo + (kbest + 1) * dx;
  if (kbest > 0 && kbest < m && inside(a) && inside(b)) {
    const double x = golden_min(f, a, b, 1e-12);
    if (f(x) < best.value) best = {f(x), x};
  }
  return best;
}

GroundStateResult ground_state(const CoulombOT& sol, double eps, const Axis& ax, const Axis& ay,
                               const EigenOptions& opt) {
  const PredictedLimit pl = predicted_limit(sol, ax, ay);
  const double width = std::pow(eps / sol.q(pl.x), 0.25);
  const double cells = width / std::max(ax.h, ay.h);
  if (cells < 6.0)
    fail(ErrorCode::resolution, "ground_state: oscillator width is " + format_double(cells) +
                                    " cells at the minimiser; need >= 6");
  GroundStateResult g = ground_state(make_potential(sol, ax, ay), eps, opt);
  g.predicted_limit = pl.value;
  g.cells_per_width = cells;
  return g;
}

nlohmann::json MarkovCheck::to_json() const {
  return {{"t", t}, {"mass_above", mass_above}, {"bound", bound}, {"strict_bound", strict_bound}, {"ok", ok}};
}

MarkovCheck markov_check(const GroundStateResult& g, const PotentialField& pot, double eps, double t) {
  require(t > 0.0, "markov_check: t must be positive");
  require(g.eigenfield.ax.same(pot.V.ax) && g.eigenfield.ay.same(pot.V.ay), "markov_check: grids differ");
  MarkovCheck c;
  c.t = t;
  CompensatedSum s;
  for (size_t k = 0; k < pot.V.v.size(); ++k)
    if (pot.V.v[k] > t) s.add(g.eigenfield.v[k] * g.eigenfield.v[k]);
  c.mass_above = s.value() * pot.V.cell_area();
  c.bound = std::sqrt(eps) * g.eigenvalue / t;
  c.strict_bound = eps * g.eigenvalue / t;
  c.ok = c.mass_above <= c.bound;
  return c;
}

// ---------------------------------------------------------------------------------------------
// Marginal-constrained minimisation through its dual:
//   max_{φ,ψ} Σφρ₁hx + Σψρ₂hy + m·λ_min(H − φ⊕ψ),
// whose maximiser has ground state √(γ*/m·area). Ascent by L-BFGS; the primal plan is m·u²
// rounded onto the exact marginals.

namespace {

struct DualState {
  double f = 0.0;  // −g
  std::vector<double> grad;
  std::vector<double> u;
  double lambda = 0.0;
};

void round_to_marginals(GridField2D& g, const GridField1D& r1, const GridField1D& r2) {
  const int nx = g.ax.n, ny = g.ay.n;
  const double hx = g.ax.h, hy = g.ay.h;
  auto margins = [&](std::vector<double>& mx, std::vector<double>& my) {
    mx.assign(nx, 0.0);
    my.assign(ny, 0.0);
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) {
        mx[i] += g.at(i, j) * hy;
        my[j] += g.at(i, j) * hx;
      }
  };
  std::vector<double> mx, my;
  for (int pass = 0; pass < 200; ++pass) {
    margins(mx, my);
    double err = 0.0;
    for (int i = 0; i < nx; ++i) err += std::abs(mx[i] - r1.v[i]) * hx;
    if (err <= 1e-15) break;
    for (int i = 0; i < nx; ++i) {
      const double s = mx[i] > 0.0 ? r1.v[i] / mx[i] : 0.0;
      for (int j = 0; j < ny; ++j) g.at(i, j) *= s;
    }
    margins(mx, my);
    for (int j = 0; j < ny; ++j) {
      const double s = my[j] > 0.0 ? r2.v[j] / my[j] : 0.0;
      for (int i = 0; i < nx; ++i) g.at(i, j) *= s;
    }
  }
  // exact repair: shrink rows and columns that overshoot, then add the rank-one deficit
  margins(mx, my);
  for (int i = 0; i < nx; ++i)
    if (mx[i] > r1.v[i]) {
      const double s = r1.v[i] / mx[i];
      for (int j = 0; j < ny; ++j) g.at(i, j) *= s;
    }
  margins(mx, my);
  for (int j = 0; j < ny; ++j)
    if (my[j] > r2.v[j]) {
      const double s = r2.v[j] / my[j];
      for (int i = 0; i < nx; ++i) g.at(i, j) *= s;
    }
  margins(mx, my);
  std::vector<double> e1(nx), e2(ny);
  double S = 0.0;
  for (int i = 0; i < nx; ++i) e1[i] = std::max(0.0, r1.v[i] - mx[i]);
  for (int j = 0; j < ny; ++j) {
    e2[j] = std::max(0.0, r2.v[j] - my[j]);
    S += e2[j] * hy;
  }
  if (S > 0.0)
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) g.at(i, j) += e1[i] * e2[j] / S;
}

double marginal_error(const GridField2D& g, const GridField1D& r1, const GridField1D& r2) {
  return std::max(l1_distance(g.marginal_x(), r1), l1_distance(g.marginal_y(), r2));
}

bool is_even(const GridField1D& r) {
  const int n = r.ax.n;
  if (std::abs(r.ax.lo + r.ax.hi()) > 1e-12 * (std::abs(r.ax.lo) + r.ax.h)) return false;
  for (int i = 0; i < n / 2; ++i)
    if (std::abs(r.v[i] - r.v[n - 1 - i]) > 1e-12 * std::max(std::abs(r.v[i]), 1e-300)) return false;
  return true;
}

}  // namespace

nlohmann::json ConstrainedResult::to_json() const {
  return {{"energy", energy.to_json()},
          {"dual_value", dual_value},
          {"kkt", kkt},
          {"marginal_residual", marginal_residual},
          {"pre_round_residual", pre_round_residual},
          {"mass", mass},
          {"iterations", iterations},
          {"evaluations", evaluations},
          {"converged", converged}};
}

ConstrainedResult constrained_min(const PotentialField& pot, const GridField1D& rho1, const GridField1D& rho2,
                                  double eps, const ConstrainedOptions& opt) {
  require(eps > 0.0, "constrained_min: eps must be positive");
  const Axis ax = pot.V.ax, ay = pot.V.ay;
  require(ax.n <= 64 && ay.n <= 64, "constrained_min: coarse grids only (n <= 64)");
  require(rho1.ax.same(ax) && rho2.ax.same(ay), "constrained_min: marginals must live on the potential's axes");
  const double m = rho1.mass();
  require(m > 0.0 && std::abs(rho2.mass() - m) <= 1e-8 * m, "constrained_min: marginal masses differ");
  for (double v : rho1.v) require(v >= 0.0 && std::isfinite(v), "constrained_min: rho1 must be nonnegative");
  for (double v : rho2.v) require(v >= 0.0 && std::isfinite(v), "constrained_min: rho2 must be nonnegative");

  const int nx = ax.n, ny = ay.n;
  const double hx = ax.h, hy = ay.h, area = hx * hy;
  GridOperator op = schrodinger_operator(pot, eps);
  op.active.assign(op.size(), 0);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) op.active[size_t(i) * ny + j] = rho1.v[i] > 0.0 && rho2.v[j] > 0.0;
  const std::vector<double> W0 = op.W;
  detect_point_symmetry(op);
  op.point_symmetric = op.point_symmetric && is_even(rho1) && is_even(rho2);

  std::vector<double> warm;
  long evals = 0;
  auto evaluate = [&](const std::vector<double>& z, DualState& st) {
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) op.W[size_t(i) * ny + j] = W0[size_t(i) * ny + j] - z[i] - z[nx + j];
    Eigenpair e = lowest_eigenpair(op, warm, opt.eig);
    ++evals;
    if (!e.converged) {
      // restart from scratch once before giving up
      e = lowest_eigenpair(op, {}, opt.eig);
      if (!e.converged)
        fail(ErrorCode::numerical, "constrained_min: eigen solve stalled, residual " + format_double(e.residual));
    }
    warm = e.vec;
    st.lambda = e.value;
    st.u = std::move(e.vec);
    double g = m * st.lambda;
    st.grad.assign(nx + ny, 0.0);
    for (int i = 0; i < nx; ++i) g += hx * z[i] * rho1.v[i];
    for (int j = 0; j < ny; ++j) g += hy * z[nx + j] * rho2.v[j];
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) {
        const double u2 = st.u[size_t(i) * ny + j] * st.u[size_t(i) * ny + j];
        st.grad[i] += m * u2;       // hx·marg_x
        st.grad[nx + j] += m * u2;  // hy·marg_y
      }
    for (int i = 0; i < nx; ++i) st.grad[i] -= hx * rho1.v[i];
    for (int j = 0; j < ny; ++j) st.grad[nx + j] -= hy * rho2.v[j];
    st.f = -g;
  };
  auto primal = [&](const DualState& st, ConstrainedResult& r) {
    r.plan = GridField2D(ax, ay);
    for (size_t k = 0; k < r.plan.v.size(); ++k) r.plan.v[k] = m * st.u[k] * st.u[k] / area;
    r.pre_round_residual = marginal_error(r.plan, rho1, rho2);
    round_to_marginals(r.plan, rho1, rho2);
    r.marginal_residual = marginal_error(r.plan, rho1, rho2);
    r.energy = e_eps(r.plan, pot, eps);
    r.dual_value = -st.f;
    r.kkt = (r.energy.e - r.dual_value) / std::max(std::abs(r.energy.e), 1e-300);
  };

  ConstrainedResult res;
  res.mass = m;
  const size_t dim = size_t(nx + ny);
  std::vector<double> z(dim, 0.0);
  DualState cur;
  evaluate(z, cur);
  std::vector<std::vector<double>> S, Y;
  std::vector<double> rho_hist;
  std::vector<double> d(dim), zn(dim), alpha;
  DualState next;
  for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
    double gerr = 0.0;
    for (double v : cur.grad) gerr += std::abs(v);
    if (gerr <= 1e-3 * m) {
      primal(cur, res);
      if (res.kkt <= opt.tol && res.marginal_residual <= 1e-8 * std::max(m, 1.0)) {
        res.converged = true;
        break;
      }
    }
    // two-loop recursion
    d = cur.grad;
    const size_t k = S.size();
    alpha.assign(k, 0.0);
    for (size_t t = k; t-- > 0;) {
      alpha[t] = rho_hist[t] * dot(S[t], d);
      for (size_t q = 0; q < dim; ++q) d[q] -= alpha[t] * Y[t][q];
    }
    double gamma;
    if (k > 0) {
      gamma = dot(S[k - 1], Y[k - 1]) / dot(Y[k - 1], Y[k - 1]);
    } else {
      // first step: move the potentials by about one kinetic scale
      gamma = op.kinetic_scale() / std::max(norm2(cur.grad) / std::sqrt(double(dim)) / std::max(hx, hy), 1e-300) /
              std::max(hx, hy);
    }
    for (double& v : d) v *= gamma;
    for (size_t t = 0; t < k; ++t) {
      const double b = rho_hist[t] * dot(Y[t], d);
      for (size_t q = 0; q < dim; ++q) d[q] += S[t][q] * (alpha[t] - b);
    }
    for (double& v : d) v = -v;
    double slope = dot(cur.grad, d);
    if (!(slope < 0.0)) {
      S.clear();
      Y.clear();
      rho_hist.clear();
      d = cur.grad;
      for (double& v : d) v = -v * gamma;
      slope = dot(cur.grad, d);
    }
    double step = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      for (size_t q = 0; q < dim; ++q) zn[q] = z[q] + step * d[q];
      evaluate(zn, next);
      if (next.f <= cur.f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    std::vector<double> s(dim), y(dim);
    for (size_t q = 0; q < dim; ++q) {
      s[q] = zn[q] - z[q];
      y[q] = next.grad[q] - cur.grad[q];
    }
    const double sy = dot(s, y);
    if (sy > 1e-300) {
      S.push_back(std::move(s));
      Y.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (int(S.size()) > opt.memory) {
        S.erase(S.begin());
        Y.erase(Y.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    z = zn;
    std::swap(cur, next);
  }
  if (!res.converged) {
    primal(cur, res);
    res.converged = res.kkt <= opt.tol && res.marginal_residual <= 1e-8 * std::max(m, 1.0);
  }
  res.evaluations = evals;
  res.phi.assign(z.begin(), z.begin() + nx);
  res.psi.assign(z.begin() + nx, z.end());
  if (!res.converged)
    fail(ErrorCode::numerical, "constrained_min: stalled after " + std::to_string(res.iterations) +
                                   " iterations, duality gap " + format_double(res.kkt));
  return res;
}

// ---------------------------------------------------------------------------------------------

nlohmann::json OscillatorEnergy::to_json() const {
  return {{"form", form}, {"norm", norm}, {"ratio", ratio}, {"exact", exact}, {"C", C}, {"bound", bound}};
}

OscillatorEnergy oscillator_energy(const GridField2D& psi, const Sym2& A, double eps, double r) {
  require(eps > 0.0 && r > 0.0, "oscillator_energy: eps and r must be positive");
  const Eig2 e = eig(A);
  require(e.small > 0.0, "oscillator_energy: A must be positive definite");
  const int nx = psi.ax.n, ny = psi.ay.n;
  auto P = [&](int i, int j) { return (i < 0 || j < 0 || i >= nx || j >= ny) ? 0.0 : psi.at(i, j); };
  CompensatedSum gx, gy, pot, nrm;
  for (int i = -1; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const double d = P(i + 1, j) - P(i, j);
      gx.add(d * d);
    }
  for (int i = 0; i < nx; ++i)
    for (int j = -1; j < ny; ++j) {
      const double d = P(i, j + 1) - P(i, j);
      gy.add(d * d);
    }
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const Vec2 v = A.apply({psi.ax.x(i), psi.ay.x(j)});
      const double p2 = psi.at(i, j) * psi.at(i, j);
      pot.add((v.x * v.x + v.y * v.y) * p2);
      nrm.add(p2);
    }
  const double area = psi.cell_area();
  OscillatorEnergy o;
  o.form = area * (eps * (gx.value() / (psi.ax.h * psi.ax.h) + gy.value() / (psi.ay.h * psi.ay.h)) + pot.value());
  o.norm = area * nrm.value();
  require(o.norm > 0.0, "oscillator_energy: field vanishes");
  o.ratio = o.form / o.norm;
  o.exact = A.trace() * std::sqrt(eps);
  o.C = std::sqrt(2.0) / (r * r * e.small);
  o.bound = o.exact / (1.0 + o.C * std::sqrt(eps));
  return o;
}

GridField2D gaussian_trial(const Sym2& A, double eps, const Axis& ax, const Axis& ay) {
  GridField2D g(ax, ay);
  const double s = 2.0 * std::sqrt(eps);
  for (int i = 0; i < ax.n; ++i)
    for (int j = 0; j < ay.n; ++j) g.at(i, j) = std::exp(-A.quad({ax.x(i), ay.x(j)}) / s);
  return g;
}

double delta_h(double N) {
  require(N > 0.0, "delta_h: N must be positive");
  const double eN = std::exp(-N), e2N = std::exp(-2.0 * N);
  // radial form in d = 2 with u = |z|², dz = π du, B = {u < 2N}
  const auto num = integrate([&](double u) { return u * (2.0 * std::exp(-u) - 2.0 * std::exp(-0.5 * u) * eN + e2N); },
                             0.0, 2.0 * N);
  const auto den =
      integrate([&](double u) { return std::exp(-u) - 2.0 * std::exp(-0.5 * u) * eN + e2N; }, 0.0, 2.0 * N);
  return num.value / (2.0 * den.value);
}

nlohmann::json DeltaRecord::to_json() const {
  return {{"eps", eps},         {"eta", eta},       {"N", N},          {"trace_A", trace_A},
          {"energy", energy},   {"bound", bound},   {"target", target}};
}

double delta_eta(double eps, const std::function<double(double)>& delta) {
  require(eps > 0.0, "delta_eta: eps must be positive");
  auto d = [&](double eta) { return delta ? delta(eta) : 1.0; };
  const double target = std::sqrt(eps);
  // in s = log η the left side increases on (−∞, −2]
  auto f = [&](double s) {
    const double eta = std::exp(s), dd = d(eta);
    return std::exp(0.5 * s) * dd * dd / (-2.0 * s) - target;
  };
  const double lo = -1400.0, hi = -2.0;
  if (!(f(hi) > 0.0)) fail(ErrorCode::domain, "delta_eta: eps too large for the schedule (need sqrt(eps) < e^-1/4)");
  if (!(f(lo) < 0.0)) fail(ErrorCode::domain, "delta_eta: eps below double range of the schedule");
  return std::exp(find_root(f, lo, hi, 1e-13));
}

std::vector<DeltaRecord> delta_recovery(const Sym2& hessian, const std::function<double(Vec2)>& V,
                                        const std::vector<double>& eps_list,
                                        const std::function<double(double)>& delta) {
  const Eig2 he = eig(hessian);
  require(he.small >= -1e-14, "delta_recovery: D²V(0) must be positive semidefinite");
  require(V != nullptr, "delta_recovery: potential is required");
  const Sym2 root = sym_fn(hessian, [](double l) { return std::sqrt(std::max(0.0, l)); });
  std::vector<DeltaRecord> out;
  const int nt = 64;
  for (double eps : eps_list) {
    DeltaRecord r;
    r.eps = eps;
    r.eta = delta_eta(eps, delta);
    r.N = -std::log(r.eta);
    const double se = std::sqrt(r.eta);
    const Sym2 A = root + Sym2{se, 0.0, se};
    const Sym2 Aih = sym_fn(A, [](double l) { return 1.0 / std::sqrt(l); });
    r.trace_A = A.trace();
    r.target = 0.5 * root.trace();
    r.bound = 0.5 * r.trace_A * delta_h(r.N);
    const double eN = std::exp(-r.N), R = std::sqrt(2.0 * r.N), e4 = std::pow(eps, 0.25), ie = 1.0 / std::sqrt(eps);
    // z-coordinates: x = ε^{1/4} A^{-1/2} z, f = e^{-|z|²/2} − e^{-N}; the Jacobian cancels
    auto ring = [&](double rr) {
      double pe = 0.0;
      for (int k = 0; k < nt; ++k) {
        const double th = 2.0 * kPi * k / nt;
        const Vec2 x = Aih.apply({rr * std::cos(th), rr * std::sin(th)});
        pe += V({e4 * x.x, e4 * x.y});
      }
      return pe * 2.0 * kPi / nt;
    };
    auto f = [&](double rr) { return std::exp(-0.5 * rr * rr) - eN; };
    const double ke = integrate([&](double rr) { return rr * rr * rr * std::exp(-rr * rr); }, 0.0, R).value *
                      2.0 * kPi * 0.5 * 0.5 * A.trace();
    const double pe = integrate([&](double rr) { return rr * ring(rr) * f(rr) * f(rr); }, 0.0, R).value * ie;
    const double nrm = integrate([&](double rr) { return rr * f(rr) * f(rr); }, 0.0, R).value * 2.0 * kPi;
    r.energy = (ke + pe) / nrm;
    out.push_back(r);
  }
  return out;
}

}  // namespace zpo
