#pragma once

#include <cmath>

namespace zpo {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }

// Symmetric 2×2 matrix [[xx, xy], [xy, yy]].
struct Sym2 {
  double xx = 0.0;
  double xy = 0.0;
  double yy = 0.0;

  double trace() const { return xx + yy; }
  double det() const { return xx * yy - xy * xy; }
  Vec2 apply(Vec2 v) const { return {xx * v.x + xy * v.y, xy * v.x + yy * v.y}; }
  double frobenius() const { return std::sqrt(xx * xx + 2.0 * xy * xy + yy * yy); }
  double quad(Vec2 v) const { return xx * v.x * v.x + 2.0 * xy * v.x * v.y + yy * v.y * v.y; }
};

inline Sym2 operator*(double s, const Sym2& m) { return {s * m.xx, s * m.xy, s * m.yy}; }
inline Sym2 operator+(const Sym2& a, const Sym2& b) { return {a.xx + b.xx, a.xy + b.xy, a.yy + b.yy}; }
inline Sym2 operator-(const Sym2& a, const Sym2& b) { return {a.xx - b.xx, a.xy - b.xy, a.yy - b.yy}; }
inline Sym2 square(const Sym2& m) {
  return {m.xx * m.xx + m.xy * m.xy, m.xy * (m.xx + m.yy), m.yy * m.yy + m.xy * m.xy};
}

struct Eig2 {
  double large = 0.0;  // larger eigenvalue
  double small = 0.0;  // smaller eigenvalue
  double theta = 0.0;  // angle of the eigenvector of `small`, in (-π/2, π/2]
};

inline Eig2 eig(const Sym2& m) {
  const double mean = 0.5 * (m.xx + m.yy);
  const double r = std::hypot(0.5 * (m.xx - m.yy), m.xy);
  Eig2 e{mean + r, mean - r, 0.0};
  if (r > 0.0) {
    // eigenvector of the small eigenvalue: (xy, small - xx) or (small - yy, xy)
    double vx = m.xy, vy = e.small - m.xx;
    if (std::abs(vx) + std::abs(vy) < 1e-300 || std::abs(m.xx - e.small) < std::abs(m.yy - e.small)) {
      vx = e.small - m.yy;
      vy = m.xy;
    }
    double th = std::atan2(vy, vx);
    const double pi = std::acos(-1.0);
    if (th <= -0.5 * pi) th += pi;
    if (th > 0.5 * pi) th -= pi;
    e.theta = th;
  }
  return e;
}

}  // namespace zpo
