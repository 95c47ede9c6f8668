#include "zpo/density.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "zpo/error.hpp"

namespace zpo {

namespace detail {

struct DensityImpl {
  virtual ~DensityImpl() = default;
  virtual double pdf(double x) const = 0;
  virtual double dpdf(double x) const = 0;
  virtual double cdf(double x) const = 0;
  virtual double sf(double x) const = 0;
  virtual double central(double x) const = 0;
  virtual bool symmetric() const = 0;
  virtual std::string kind() const = 0;
  virtual std::vector<double> breaks(double, double) const { return {}; }
  virtual nlohmann::json spec() const = 0;
};

namespace {

const double kPi = std::acos(-1.0);

class PowerTail final : public DensityImpl {
 public:
  explicit PowerTail(double p) : p_(p) {
    c_ = std::exp(std::lgamma(0.5 * p) - std::lgamma(0.5 * (p - 1.0))) / std::sqrt(kPi);
    cauchy_ = (p == 2.0);
  }
  double pdf(double x) const override { return c_ * std::pow(1.0 + x * x, -0.5 * p_); }
  double dpdf(double x) const override { return -p_ * x * pdf(x) / (1.0 + x * x); }
  double upper_pos(double x) const {  // mass of [x, ∞) for x >= 0
    if (cauchy_) return std::atan2(1.0, x) / kPi;
    return 0.5 * boost::math::ibeta(0.5 * (p_ - 1.0), 0.5, 1.0 / (1.0 + x * x));
  }
  double central(double x) const override {
    const double a = std::abs(x);
    if (cauchy_) return std::atan(a) / kPi;
    return 0.5 * boost::math::ibeta(0.5, 0.5 * (p_ - 1.0), a * a / (1.0 + a * a));
  }
  double cdf(double x) const override {
    if (x >= 0) return 0.5 + central(x);
    return upper_pos(-x);
  }
  double sf(double x) const override {
    if (x >= 0) return upper_pos(x);
    return 0.5 + central(x);
  }
  bool symmetric() const override { return true; }
  std::string kind() const override { return "power_tail"; }
  nlohmann::json spec() const override { return {{"kind", "power_tail"}, {"p", p_}}; }

 private:
  double p_, c_;
  bool cauchy_;
};

class Tabulated final : public DensityImpl {
 public:
  Tabulated(std::vector<double> x, std::vector<double> f, std::string path)
      : x_(std::move(x)), f_(std::move(f)), path_(std::move(path)) {
    const std::size_t n = x_.size();
    require(n >= 4, "tabulated density needs at least 4 nodes");
    require(f_.size() == n, "tabulated density: x and pdf sizes differ");
    for (std::size_t i = 0; i < n; ++i) {
      require(std::isfinite(x_[i]) && std::isfinite(f_[i]), "tabulated density: non-finite entry");
      require(f_[i] > 0.0, "tabulated density: pdf must be strictly positive");
      if (i) require(x_[i] > x_[i - 1], "tabulated density: x must be strictly increasing");
    }
    d_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == 0) {
        d_[i] = (f_[1] - f_[0]) / (x_[1] - x_[0]);
      } else if (i + 1 == n) {
        d_[i] = (f_[i] - f_[i - 1]) / (x_[i] - x_[i - 1]);
      } else {
        const double hl = x_[i] - x_[i - 1], hr = x_[i + 1] - x_[i];
        d_[i] = ((f_[i + 1] - f_[i]) / hr * hl + (f_[i] - f_[i - 1]) / hl * hr) / (hl + hr);
      }
    }
    require(d_.front() > 0.0 && d_.back() < 0.0,
            "tabulated density: pdf must increase at the left end and decrease at the right end");
    kl_ = d_.front() / (3.0 * f_.front());
    kr_ = -d_.back() / (3.0 * f_.back());
    // Cumulative masses with a Hermite (Euler-Maclaurin) increment; fall back to the trapezoid
    // where the resulting quadratic pdf piece would dip below zero.
    inc_.resize(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double h = x_[i + 1] - x_[i];
      double m = 0.5 * (f_[i] + f_[i + 1]) + h * (d_[i] - d_[i + 1]) / 12.0;
      if (!(m > 0.0) || min_piece(f_[i], f_[i + 1], m) <= 0.0) m = 0.5 * (f_[i] + f_[i + 1]);
      inc_[i] = m * h;
    }
    double total = f_.front() / (2.0 * kl_) + f_.back() / (2.0 * kr_);
    for (double v : inc_) total += v;
    for (auto& v : f_) v /= total;
    for (auto& v : d_) v /= total;
    for (auto& v : inc_) v /= total;
    cum_.assign(n, 0.0);
    cum_[0] = f_.front() / (2.0 * kl_);
    for (std::size_t i = 0; i + 1 < n; ++i) cum_[i + 1] = cum_[i] + inc_[i];
    rcum_.assign(n, 0.0);
    rcum_[n - 1] = f_.back() / (2.0 * kr_);
    for (std::size_t i = n - 1; i-- > 0;) rcum_[i] = rcum_[i + 1] + inc_[i];
    // Re-center on the median.
    double lo = x_.front() - 1.0, hi = x_.back() + 1.0;
    while (raw_cdf(lo) > 0.5) lo -= 2.0 * (hi - lo);
    while (raw_cdf(hi) < 0.5) hi += 2.0 * (hi - lo);
    const double med = newton_bisect([&](double t) { return raw_cdf(t); },
                                     [&](double t) { return raw_pdf(t); }, 0.5, lo, hi, 1e-15);
    for (auto& v : x_) v -= med;
  }

  double pdf(double x) const override { return raw_pdf(x); }
  double dpdf(double x) const override {
    const std::size_t n = x_.size();
    if (x < x_.front()) {
      const double s = 1.0 + kl_ * (x_.front() - x);
      return 3.0 * kl_ * f_.front() / (s * s * s * s);
    }
    if (x > x_.back()) {
      const double s = 1.0 + kr_ * (x - x_.back());
      return -3.0 * kr_ * f_.back() / (s * s * s * s);
    }
    std::size_t i = locate(x);
    if (i + 1 >= n) i = n - 2;
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double mean = inc_[i] / h;
    return (6.0 * (1.0 - 2.0 * t) * mean + f_[i] * (6.0 * t - 4.0) + f_[i + 1] * (6.0 * t - 2.0)) / h;
  }
  double cdf(double x) const override { return raw_cdf(x); }
  double sf(double x) const override {
    if (x > x_.back()) {
      const double s = 1.0 + kr_ * (x - x_.back());
      return f_.back() / (2.0 * kr_ * s * s);
    }
    if (x < x_.front()) return 1.0 - cdf(x);
    const std::size_t i = std::min(locate(x), x_.size() - 2);
    return rcum_[i + 1] + (inc_[i] - piece_mass(i, x));
  }
  double central(double x) const override { return std::abs(cdf(x) - 0.5); }
  bool symmetric() const override { return false; }
  std::string kind() const override { return "tabulated"; }
  std::vector<double> breaks(double lo, double hi) const override {
    std::vector<double> out;
    for (double v : x_)
      if (v > lo && v < hi) out.push_back(v);
    return out;
  }
  nlohmann::json spec() const override {
    nlohmann::json j = {{"kind", "tabulated"}, {"nodes", x_.size()}};
    if (!path_.empty()) j["path"] = path_;
    return j;
  }

 private:
  static double min_piece(double f0, double f1, double mean) {
    // min over t in [0,1] of 6(t-t²)mean + f0(3t²-4t+1) + f1(3t²-2t)
    const double a = -6.0 * mean + 3.0 * f0 + 3.0 * f1;
    const double b = 6.0 * mean - 4.0 * f0 - 2.0 * f1;
    double m = std::min(f0, f1);
    if (a > 0) {
      const double t = -b / (2.0 * a);
      if (t > 0 && t < 1) m = std::min(m, a * t * t + b * t + f0);
    }
    return m;
  }
  std::size_t locate(double x) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    if (it == x_.begin()) return 0;
    return static_cast<std::size_t>(it - x_.begin()) - 1;
  }
  double piece_mass(std::size_t i, double x) const {  // mass of [x_i, x]
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double mean = inc_[i] / h;
    const double t2 = t * t, t3 = t2 * t;
    return h * (mean * (3.0 * t2 - 2.0 * t3) + f_[i] * (t3 - 2.0 * t2 + t) + f_[i + 1] * (t3 - t2));
  }
  double raw_pdf(double x) const {
    const std::size_t n = x_.size();
    if (x < x_.front()) {
      const double s = 1.0 + kl_ * (x_.front() - x);
      return f_.front() / (s * s * s);
    }
    if (x > x_.back()) {
      const double s = 1.0 + kr_ * (x - x_.back());
      return f_.back() / (s * s * s);
    }
    std::size_t i = locate(x);
    if (i + 1 >= n) return f_.back();
    const double h = x_[i + 1] - x_[i];
    const double t = (x - x_[i]) / h;
    const double mean = inc_[i] / h;
    return 6.0 * (t - t * t) * mean + f_[i] * (3.0 * t * t - 4.0 * t + 1.0) +
           f_[i + 1] * (3.0 * t * t - 2.0 * t);
  }
  double raw_cdf(double x) const {
    if (x < x_.front()) {
      const double s = 1.0 + kl_ * (x_.front() - x);
      return f_.front() / (2.0 * kl_ * s * s);
    }
    if (x > x_.back()) return 1.0 - sf(x);
    const std::size_t i = std::min(locate(x), x_.size() - 2);
    return cum_[i] + piece_mass(i, x);
  }

  std::vector<double> x_, f_, d_, inc_, cum_, rcum_;
  double kl_ = 0.0, kr_ = 0.0;
  std::string path_;
};

}  // namespace
}  // namespace detail

Density1D::Density1D(std::shared_ptr<const detail::DensityImpl> impl, double lambda)
    : impl_(std::move(impl)), lambda_(lambda) {}

double Density1D::pdf(double x) const { return lambda_ * impl_->pdf(lambda_ * x); }
double Density1D::dpdf(double x) const { return lambda_ * lambda_ * impl_->dpdf(lambda_ * x); }
double Density1D::cdf(double x) const { return impl_->cdf(lambda_ * x); }
double Density1D::sf(double x) const { return impl_->sf(lambda_ * x); }
double Density1D::central_mass(double x) const { return impl_->central(lambda_ * x); }
bool Density1D::symmetric() const { return impl_->symmetric(); }
std::string Density1D::kind() const { return impl_->kind(); }

std::vector<double> Density1D::breakpoints(double lo, double hi) const {
  auto b = impl_->breaks(lambda_ * lo, lambda_ * hi);
  for (auto& v : b) v /= lambda_;
  return b;
}

Density1D Density1D::scaled(double lambda) const {
  require(lambda > 0.0 && std::isfinite(lambda), "scale factor must be positive");
  return Density1D(impl_, lambda_ * lambda);
}

nlohmann::json Density1D::spec() const {
  auto j = impl_->spec();
  if (lambda_ != 1.0) j["scale"] = lambda_;
  return j;
}

double Density1D::quantile(double t) const {
  if (!(t > 0.0 && t < 1.0)) fail(ErrorCode::domain, "quantile: t must lie in (0,1)");
  if (t == 0.5) return 0.0;
  const bool right = t > 0.5;
  return quantile_split(right, right ? 1.0 - t : t, right ? t - 0.5 : 0.5 - t);
}

double Density1D::quantile_split(bool right, double tail, double centre) const {
  if (!(tail > 0.0) || !(centre >= 0.0)) fail(ErrorCode::domain, "quantile: mass out of range");
  if (centre == 0.0) return 0.0;
  const bool use_tail = tail < centre;
  // g(s) increasing in s >= 0, where x = ±s.
  auto g = [&](double s) {
    const double x = right ? s : -s;
    if (use_tail) return -(right ? sf(x) : cdf(x));
    return central_mass(x);
  };
  auto dg = [&](double s) { return pdf(right ? s : -s); };
  const double target = use_tail ? -tail : centre;
  double hi = 1.0;
  while (g(hi) < target) {
    hi *= 2.0;
    if (hi > 1e300) fail(ErrorCode::numerical, "quantile: bracket expansion failed");
  }
  const double tol = 1e-15 * std::abs(target) + 1e-300;
  const double s = newton_bisect(g, dg, target, 0.0, hi, tol, 400);
  return right ? s : -s;
}

Density1D make_power_tail(double p) {
  if (!(p >= 2.0 && p <= 3.0))
    fail(ErrorCode::invalid_argument, "power_tail exponent p must lie in [2,3]");
  return Density1D(std::make_shared<detail::PowerTail>(p));
}

Density1D make_tabulated(std::vector<double> x, std::vector<double> pdf) {
  return Density1D(std::make_shared<detail::Tabulated>(std::move(x), std::move(pdf), ""));
}

Density1D load_tabulated_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open density table: " + path);
  std::vector<double> xs, fs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (auto& c : line)
      if (c == ',' || c == ';' || c == '\t') c = ' ';
    std::istringstream ss(line);
    double a, b;
    if (!(ss >> a >> b)) continue;  // header row
    xs.push_back(a);
    fs.push_back(b);
  }
  return Density1D(std::make_shared<detail::Tabulated>(std::move(xs), std::move(fs), path));
}

Density1D density_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("kind"), "density spec needs a \"kind\" field");
  const std::string kind = j.at("kind").get<std::string>();
  Density1D d = [&] {
    if (kind == "power_tail") return make_power_tail(j.value("p", 2.0));
    if (kind == "cauchy") return make_power_tail(2.0);
    if (kind == "tabulated") {
      require(j.contains("path"), "tabulated density needs \"path\"");
      return load_tabulated_csv(j.at("path").get<std::string>());
    }
    fail(ErrorCode::invalid_argument, "unknown density kind: " + kind);
  }();
  if (j.contains("scale")) d = d.scaled(j.at("scale").get<double>());
  return d;
}

double kinetic_energy_1d(const Density1D& d, double lo, double hi, const QuadOptions& opt) {
  require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "kinetic_energy_1d: finite window");
  auto f = [&](double x) {
    const double p = d.pdf(x);
    const double dp = d.dpdf(x);
    const double v = dp * dp / (8.0 * p);
    if (!std::isfinite(v) || !(p > 0.0)) {
      std::ostringstream ss;
      ss << "kinetic_energy_1d: non-finite integrand at x=" << x;
      fail(ErrorCode::numerical, ss.str());
    }
    return v;
  };
  std::vector<double> br = d.breakpoints(lo, hi);
  br.push_back(lo);
  br.push_back(hi);
  if (lo < 0 && hi > 0) br.push_back(0.0);
  return integrate_pieces(f, br, opt).value;
}

TailCheck tail_check(const Density1D& d, double x0, double x1, int samples) {
  require(x0 > 0 && x1 > x0 && samples >= 2, "tail_check: need 0 < x0 < x1");
  TailCheck tc{x0, x1, std::numeric_limits<double>::infinity(), x0};
  for (int i = 0; i < samples; ++i) {
    const double r = x0 * std::pow(x1 / x0, double(i) / (samples - 1));
    for (double x : {r, -r}) {
      const double v = r * r * r * d.pdf(x);
      if (v < tc.min_value) {
        tc.min_value = v;
        tc.at = x;
      }
    }
  }
  return tc;
}

}  // namespace zpo
