#include "zpo/grid.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "zpo/error.hpp"
#include "zpo/numerics.hpp"

namespace zpo {

Axis Axis::centered(double half_width, int n) {
  require(half_width > 0.0 && n >= 2, "Axis: need a positive half-width and at least 2 cells");
  return {-half_width, 2.0 * half_width / n, n};
}

int Axis::cell(double x) const { return int(std::floor((x - lo) / h)); }

double GridField1D::mass() const { return compensated_sum(v) * ax.h; }

double GridField1D::mean() const {
  CompensatedSum s;
  for (int i = 0; i < ax.n; ++i) s.add(v[i] * ax.x(i));
  return s.value() * ax.h / mass();
}

double GridField1D::variance() const {
  const double m = mean();
  CompensatedSum s;
  for (int i = 0; i < ax.n; ++i) {
    const double d = ax.x(i) - m;
    s.add(v[i] * (d * d + ax.h * ax.h / 12.0));
  }
  return s.value() * ax.h / mass();
}

double GridField1D::max() const { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); }

GridField1D sample_density(const Density1D& d, const Axis& ax) {
  GridField1D f(ax);
  for (int i = 0; i < ax.n; ++i) {
    const double a = ax.lo + i * ax.h, b = a + ax.h;
    const double m = a >= 0.0 ? d.sf(a) - d.sf(b) : d.cdf(b) - d.cdf(a);
    f.v[i] = m / ax.h;
  }
  return f;
}

GridField1D sample_cells(const std::function<double(double)>& fn, const Axis& ax) {
  const GaussRule& g = gauss_legendre(4);
  GridField1D f(ax);
  for (int i = 0; i < ax.n; ++i) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) s += 0.5 * g.weights[k] * fn(ax.x(i) + 0.5 * ax.h * g.nodes[k]);
    f.v[i] = s;
  }
  return f;
}

double l1_distance(const GridField1D& a, const GridField1D& b) {
  require(a.ax.same(b.ax), "l1_distance: axes differ");
  CompensatedSum s;
  for (size_t i = 0; i < a.v.size(); ++i) s.add(std::abs(a.v[i] - b.v[i]));
  return s.value() * a.ax.h;
}

double GridField2D::mass() const { return compensated_sum(v) * cell_area(); }

GridField1D GridField2D::marginal_x() const {
  GridField1D m(ax);
  for (int i = 0; i < ax.n; ++i) {
    CompensatedSum s;
    for (int j = 0; j < ay.n; ++j) s.add(at(i, j));
    m.v[i] = s.value() * ay.h;
  }
  return m;
}

GridField1D GridField2D::marginal_y() const {
  GridField1D m(ay);
  std::vector<CompensatedSum> s(size_t(ay.n));
  for (int i = 0; i < ax.n; ++i)
    for (int j = 0; j < ay.n; ++j) s[j].add(at(i, j));
  for (int j = 0; j < ay.n; ++j) m.v[j] = s[j].value() * ax.h;
  return m;
}

double GridField2D::min() const { return v.empty() ? 0.0 : *std::min_element(v.begin(), v.end()); }

GridField2D::Box GridField2D::support_box(double thr) const {
  Box b{ax.n, -1, ay.n, -1};
  for (int i = 0; i < ax.n; ++i)
    for (int j = 0; j < ay.n; ++j)
      if (at(i, j) > thr) {
        b.i0 = std::min(b.i0, i);
        b.i1 = std::max(b.i1, i);
        b.j0 = std::min(b.j0, j);
        b.j1 = std::max(b.j1, j);
      }
  return b;
}

GridField2D operator+(const GridField2D& a, const GridField2D& b) {
  require(a.ax.same(b.ax) && a.ay.same(b.ay), "field sum: grids differ");
  GridField2D r = a;
  for (size_t k = 0; k < r.v.size(); ++k) r.v[k] += b.v[k];
  return r;
}

GridField2D scaled(const GridField2D& a, double s) {
  GridField2D r = a;
  for (double& x : r.v) x *= s;
  return r;
}

namespace {

int lattice_offset(const Axis& inner, const Axis& outer) {
  require(std::abs(inner.h - outer.h) <= 1e-12 * outer.h, "grid: spacings differ");
  const double o = (inner.lo - outer.lo) / outer.h;
  const int k = int(std::lround(o));
  require(std::abs(o - k) < 1e-6, "grid: axes are not on a common lattice");
  return k;
}

}  // namespace

GridField2D embed(const GridField2D& f, const Axis& ax, const Axis& ay) {
  const int oi = lattice_offset(f.ax, ax), oj = lattice_offset(f.ay, ay);
  require(oi >= 0 && oj >= 0 && oi + f.ax.n <= ax.n && oj + f.ay.n <= ay.n, "embed: target too small");
  GridField2D r(ax, ay);
  for (int i = 0; i < f.ax.n; ++i)
    for (int j = 0; j < f.ay.n; ++j) r.at(i + oi, j + oj) = f.at(i, j);
  return r;
}

GridField2D restrict_to(const GridField2D& f, const Axis& ax, const Axis& ay, double* lost) {
  const int oi = lattice_offset(ax, f.ax), oj = lattice_offset(ay, f.ay);
  GridField2D r(ax, ay);
  CompensatedSum out;
  for (int i = 0; i < f.ax.n; ++i)
    for (int j = 0; j < f.ay.n; ++j) {
      const int a = i - oi, b = j - oj;
      if (a >= 0 && a < ax.n && b >= 0 && b < ay.n)
        r.at(a, b) = f.at(i, j);
      else
        out.add(f.at(i, j));
    }
  if (lost) *lost = out.value() * f.cell_area();
  return r;
}

GridField2D block_average(const GridField2D& f, int factor) {
  require(factor >= 1 && f.ax.n % factor == 0 && f.ay.n % factor == 0,
          "block_average: sizes must be divisible by the factor");
  const Axis ax{f.ax.lo, f.ax.h * factor, f.ax.n / factor};
  const Axis ay{f.ay.lo, f.ay.h * factor, f.ay.n / factor};
  GridField2D r(ax, ay);
  const double inv = 1.0 / (double(factor) * factor);
  for (int i = 0; i < ax.n; ++i)
    for (int j = 0; j < ay.n; ++j) {
      CompensatedSum s;
      for (int p = 0; p < factor; ++p)
        for (int q = 0; q < factor; ++q) s.add(f.at(i * factor + p, j * factor + q));
      r.at(i, j) = s.value() * inv;
    }
  return r;
}

PotentialField make_potential(const CoulombOT& sol, const Axis& ax, const Axis& ay, double cap_cells) {
  require(cap_cells > 0.0, "make_potential: cap distance must be positive");
  std::vector<double> ux(size_t(ax.n)), uy(size_t(ay.n));
  for (int i = 0; i < ax.n; ++i) ux[i] = sol.u(ax.x(i));
  for (int j = 0; j < ay.n; ++j) uy[j] = ay.same(ax) ? ux[j] : sol.u(ay.x(j));
  PotentialField p;
  p.V = GridField2D(ax, ay);
  p.capped.assign(p.V.v.size(), 0);
  p.cap_distance = cap_cells * std::min(ax.h, ay.h);
  const double dc = p.cap_distance;
  for (int i = 0; i < ax.n; ++i)
    for (int j = 0; j < ay.n; ++j) {
      const double x = ax.x(i), y = ay.x(j);
      const double d = std::abs(x - y);
      if (d >= dc * (1.0 - 1e-12)) {
        p.V.at(i, j) = 1.0 / d - ux[i] - uy[j];
      } else {
        const double m = 0.5 * (x + y), side = y >= x ? 1.0 : -1.0;
        p.V.at(i, j) = 1.0 / dc - sol.u(m - 0.5 * side * dc) - sol.u(m + 0.5 * side * dc);
        p.capped[size_t(i) * ay.n + j] = 1;
      }
    }
  return p;
}

PotentialField make_potential(const std::function<double(double, double)>& V, const Axis& ax,
                              const Axis& ay) {
  PotentialField p;
  p.V = GridField2D(ax, ay);
  p.capped.assign(p.V.v.size(), 0);
  for (int i = 0; i < ax.n; ++i)
    for (int j = 0; j < ay.n; ++j) p.V.at(i, j) = V(ax.x(i), ay.x(j));
  return p;
}

nlohmann::json EnergyRecord::to_json() const {
  return {{"KE", ke}, {"PE", pe}, {"E", e}, {"masked_mass", masked_mass}};
}

double kinetic_energy(const GridField2D& g) {
  const int nx = g.ax.n, ny = g.ay.n;
  std::vector<double> s(g.v.size());
  for (size_t k = 0; k < s.size(); ++k) {
    require(g.v[k] >= 0.0 && std::isfinite(g.v[k]), "kinetic_energy: field must be finite and nonnegative");
    s[k] = std::sqrt(g.v[k]);
  }
  auto S = [&](int i, int j) { return (i < 0 || j < 0 || i >= nx || j >= ny) ? 0.0 : s[size_t(i) * ny + j]; };
  CompensatedSum kx, ky;
  for (int i = -1; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const double d = S(i + 1, j) - S(i, j);
      if (d != 0.0) kx.add(d * d);
    }
  for (int i = 0; i < nx; ++i)
    for (int j = -1; j < ny; ++j) {
      const double d = S(i, j + 1) - S(i, j);
      if (d != 0.0) ky.add(d * d);
    }
  const double area = g.cell_area();
  return 0.5 * area * (kx.value() / (g.ax.h * g.ax.h) + ky.value() / (g.ay.h * g.ay.h));
}

double kinetic_energy(const GridField1D& g) {
  CompensatedSum k;
  double prev = 0.0;
  for (int i = 0; i <= g.ax.n; ++i) {
    const double cur = i < g.ax.n ? std::sqrt(std::max(0.0, g.v[i])) : 0.0;
    const double d = cur - prev;
    if (d != 0.0) k.add(d * d);
    prev = cur;
  }
  return 0.5 * k.value() / g.ax.h;
}

EnergyRecord e_eps(const GridField2D& g, const PotentialField& pot, double eps) {
  require(eps > 0.0, "e_eps: eps must be positive");
  require(g.ax.same(pot.V.ax) && g.ay.same(pot.V.ay), "e_eps: field and potential grids differ");
  EnergyRecord r;
  r.ke = kinetic_energy(g);
  CompensatedSum pe, mm;
  for (size_t k = 0; k < g.v.size(); ++k) {
    if (g.v[k] == 0.0) continue;
    pe.add(pot.V.v[k] * g.v[k]);
    if (pot.capped[k]) mm.add(g.v[k]);
  }
  r.pe = pe.value() * g.cell_area();
  r.masked_mass = mm.value() * g.cell_area();
  r.e = std::sqrt(eps) * r.ke + r.pe / std::sqrt(eps);
  return r;
}

GridField2D convolve2d(const GridField2D& f, const GridField2D& k) {
  require(k.ax.n % 2 == 1 && k.ay.n % 2 == 1, "convolve2d: kernel sizes must be odd");
  require(std::abs(k.ax.h - f.ax.h) <= 1e-12 * f.ax.h && std::abs(k.ay.h - f.ay.h) <= 1e-12 * f.ay.h,
          "convolve2d: kernel spacing differs from the field");
  const int rx = k.ax.n / 2, ry = k.ay.n / 2;
  GridField2D out(f.ax.padded(rx, rx), f.ay.padded(ry, ry));
  const double area = k.cell_area();
  for (int i = 0; i < f.ax.n; ++i)
    for (int j = 0; j < f.ay.n; ++j) {
      const double w = f.at(i, j);
      if (w == 0.0) continue;
      for (int p = 0; p < k.ax.n; ++p) {
        double* row = &out.at(i + p, j);
        const double* kr = &k.v[size_t(p) * k.ay.n];
        for (int q = 0; q < k.ay.n; ++q) row[q] += w * kr[q] * area;
      }
    }
  return out;
}

double MonotoneMap::operator()(double x) const {
  require(!xs_.empty(), "MonotoneMap: empty map");
  if (x <= xs_.front()) return ys_.front();
  if (x >= xs_.back()) return ys_.back();
  const size_t k = size_t(std::upper_bound(xs_.begin(), xs_.end(), x) - xs_.begin());
  const double x0 = xs_[k - 1], x1 = xs_[k];
  if (x1 <= x0) return ys_[k];
  return ys_[k - 1] + (ys_[k] - ys_[k - 1]) * (x - x0) / (x1 - x0);
}

namespace {

// Piecewise-linear quantile of a cell density with cumulative masses C (size n+1).
struct Quantile {
  const GridField1D* f;
  std::vector<double> C;
  double scale;
  Quantile(const GridField1D& g, double s) : f(&g), scale(s) {
    C.assign(size_t(g.ax.n) + 1, 0.0);
    CompensatedSum acc;
    for (int i = 0; i < g.ax.n; ++i) {
      acc.add(g.v[i] * g.ax.h * s);
      C[size_t(i) + 1] = acc.value();
    }
  }
  // Cell whose mass range contains t in its interior (t strictly inside (C_i, C_{i+1})).
  int cell_at(double t) const {
    int i = int(std::upper_bound(C.begin(), C.end(), t) - C.begin()) - 1;
    return std::clamp(i, 0, f->ax.n - 1);
  }
  double eval(int i, double t) const {
    const double dens = f->v[i] * scale;
    const double e = f->ax.lo + i * f->ax.h;
    if (dens <= 0.0) return e;
    return e + (t - C[i]) / dens;
  }
};

std::vector<CouplingEntry> nw_corner(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<CouplingEntry> out;
  if (a.empty() || b.empty()) return out;
  size_t i = 0, j = 0;
  double ra = a[0], rb = b[0];
  while (true) {
    // min() leaves one of the two remainders exactly zero
    const double m = std::min(ra, rb);
    if (m > 0.0) out.push_back({int(i), int(j), m});
    ra -= m;
    rb -= m;
    if (ra <= 0.0) {
      if (++i == a.size()) break;
      ra = a[i];
    }
    if (rb <= 0.0) {
      if (++j == b.size()) break;
      rb = b[j];
    }
  }
  return out;
}

}  // namespace

W2Result w2_1d(const GridField1D& mu, const GridField1D& nu, double rel_tol) {
  const double mm = mu.mass(), mn = nu.mass();
  require(mm > 0.0 && mn > 0.0, "w2_1d: masses must be positive");
  if (std::abs(mm - mn) > rel_tol * std::max(mm, mn))
    fail(ErrorCode::invalid_argument, "w2_1d: mass mismatch " + format_double(mm) + " vs " + format_double(mn));
  const Quantile Qm(mu, 1.0), Qn(nu, mm / mn);
  std::vector<double> ts;
  ts.reserve(Qm.C.size() + Qn.C.size());
  ts.insert(ts.end(), Qm.C.begin(), Qm.C.end());
  for (double c : Qn.C) ts.push_back(std::min(c, mm));
  std::sort(ts.begin(), ts.end());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  CompensatedSum w;
  std::vector<double> xs, ys;
  for (size_t k = 0; k + 1 < ts.size(); ++k) {
    const double ta = ts[k], tb = ts[k + 1];
    if (!(tb > ta)) continue;
    const double tm = 0.5 * (ta + tb);
    const int im = Qm.cell_at(tm), in = Qn.cell_at(tm);
    const double xa = Qm.eval(im, ta), xb = Qm.eval(im, tb);
    const double ya = Qn.eval(in, ta), yb = Qn.eval(in, tb);
    const double da = xa - ya, db = xb - yb;
    w.add((tb - ta) * (da * da + da * db + db * db) / 3.0);
    xs.push_back(xa);
    ys.push_back(ya);
    xs.push_back(xb);
    ys.push_back(yb);
  }
  W2Result r;
  r.w2sq = std::max(0.0, w.value());
  r.mass = mm;
  r.S = MonotoneMap(std::move(xs), std::move(ys));
  return r;
}

std::vector<CouplingEntry> monotone_coupling(const std::vector<double>& src_pos,
                                             const std::vector<double>& src_mass,
                                             const std::vector<double>& dst_mass, double rel_tol) {
  require(src_pos.size() == src_mass.size(), "monotone_coupling: size mismatch");
  const double ms = std::accumulate(src_mass.begin(), src_mass.end(), 0.0);
  const double md = std::accumulate(dst_mass.begin(), dst_mass.end(), 0.0);
  for (double m : src_mass) require(m >= 0.0, "monotone_coupling: negative source mass");
  for (double m : dst_mass) require(m >= 0.0, "monotone_coupling: negative target mass");
  if (ms <= 0.0 || md <= 0.0) return {};
  if (std::abs(ms - md) > rel_tol * std::max(ms, md))
    fail(ErrorCode::numerical, "monotone_coupling: mass mismatch " + format_double(ms) + " vs " + format_double(md));
  std::vector<int> order(src_pos.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return src_pos[a] < src_pos[b]; });
  std::vector<double> a(order.size());
  for (size_t k = 0; k < order.size(); ++k) a[k] = src_mass[order[k]] * (md / ms);
  std::vector<CouplingEntry> e = nw_corner(a, dst_mass);
  for (auto& c : e) c.src = order[c.src];
  return e;
}

DiscreteOT discrete_coulomb_ot(const GridField1D& rho, const PotentialField& pot) {
  require(rho.ax.same(pot.V.ax) && rho.ax.same(pot.V.ay), "discrete_coulomb_ot: grid mismatch");
  const int n = rho.ax.n;
  std::vector<double> m(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) m[i] = rho.v[i] * rho.ax.h;
  const double total = std::accumulate(m.begin(), m.end(), 0.0);
  // target sequence: the cells re-ordered from quantile ½ onwards, split at that quantile
  std::vector<double> dm;
  std::vector<int> idx;
  double acc = 0.0;
  int k0 = 0;
  for (; k0 < n; ++k0) {
    if (acc + m[k0] >= 0.5 * total) break;
    acc += m[k0];
  }
  k0 = std::min(k0, n - 1);
  const double first = acc + m[k0] - 0.5 * total;
  dm.push_back(first);
  idx.push_back(k0);
  for (int k = k0 + 1; k < n; ++k) {
    dm.push_back(m[k]);
    idx.push_back(k);
  }
  for (int k = 0; k < k0; ++k) {
    dm.push_back(m[k]);
    idx.push_back(k);
  }
  dm.push_back(m[k0] - first);
  idx.push_back(k0);
  DiscreteOT r;
  r.plan = GridField2D(rho.ax, rho.ax);
  CompensatedSum c;
  const double area = r.plan.cell_area();
  for (const auto& e : nw_corner(m, dm)) {
    r.plan.at(e.src, idx[e.dst]) += e.mass / area;
    c.add(e.mass * pot.V.at(e.src, idx[e.dst]));
  }
  r.cost = c.value();
  return r;
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

namespace {

double parse_double(const char* b, const char* e) {
  double x = 0.0;
  auto res = std::from_chars(b, e, x);
  if (res.ec != std::errc())
    fail(ErrorCode::io, "csv: cannot parse number '" + std::string(b, e) + "'");
  return x;
}

Axis axis_from(const nlohmann::json& j) { return {j.at("lo").get<double>(), j.at("h").get<double>(), j.at("n").get<int>()}; }

// Last comma-separated column of each data line.
std::vector<double> read_values(std::istringstream& in, size_t expect) {
  std::vector<double> v;
  v.reserve(expect);
  std::string line;
  std::getline(in, line);  // column header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const size_t c = line.rfind(',');
    const char* b = line.data() + (c == std::string::npos ? 0 : c + 1);
    v.push_back(parse_double(b, line.data() + line.size()));
  }
  if (v.size() != expect) fail(ErrorCode::io, "csv: expected " + std::to_string(expect) + " values");
  return v;
}

nlohmann::json read_header(std::istringstream& in, const char* kind) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("# ", 0) != 0) fail(ErrorCode::io, "csv: missing header line");
  nlohmann::json h = nlohmann::json::parse(line.substr(2), nullptr, false);
  if (h.is_discarded() || h.value("kind", "") != kind) fail(ErrorCode::io, std::string("csv: not a ") + kind);
  return h;
}

}  // namespace

std::string to_csv(const GridField2D& f) {
  nlohmann::json h = {{"kind", "field2d"}, {"ax", f.ax.to_json()}, {"ay", f.ay.to_json()}};
  std::string s = "# " + h.dump() + "\nx,y,value\n";
  s.reserve(s.size() + f.v.size() * 40);
  for (int i = 0; i < f.ax.n; ++i)
    for (int j = 0; j < f.ay.n; ++j) {
      s += format_double(f.ax.x(i));
      s += ',';
      s += format_double(f.ay.x(j));
      s += ',';
      s += format_double(f.at(i, j));
      s += '\n';
    }
  return s;
}

std::string to_csv(const GridField1D& f) {
  nlohmann::json h = {{"kind", "field1d"}, {"ax", f.ax.to_json()}};
  std::string s = "# " + h.dump() + "\nx,value\n";
  for (int i = 0; i < f.ax.n; ++i) s += format_double(f.ax.x(i)) + ',' + format_double(f.v[i]) + '\n';
  return s;
}

GridField2D field2d_from_csv(const std::string& text) {
  std::istringstream in(text);
  const nlohmann::json h = read_header(in, "field2d");
  GridField2D f(axis_from(h.at("ax")), axis_from(h.at("ay")));
  f.v = read_values(in, f.v.size());
  return f;
}

GridField1D field1d_from_csv(const std::string& text) {
  std::istringstream in(text);
  const nlohmann::json h = read_header(in, "field1d");
  GridField1D f(axis_from(h.at("ax")));
  f.v = read_values(in, f.v.size());
  return f;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot open " + path + " for writing");
  out << text;
  if (!out) fail(ErrorCode::io, "write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace zpo
