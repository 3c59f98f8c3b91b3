#include "ms/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

namespace ms::geom {

double signed_area(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += cross(poly[i], poly[(i + 1) % n]);
  return 0.5 * s;
}

double area(std::span<const Vec2> poly) { return std::abs(signed_area(poly)); }

Vec2 centroid(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  const double a = signed_area(poly);
  if (n < 3 || std::abs(a) < 1e-18) {
    Vec2 s{};
    for (const auto& p : poly) s = s + p;
    return n ? s * (1.0 / static_cast<double>(n)) : s;
  }
  double cx = 0.0;
  double cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 p = poly[i];
    const Vec2 q = poly[(i + 1) % n];
    const double c = cross(p, q);
    cx += (p.x + q.x) * c;
    cy += (p.y + q.y) * c;
  }
  return {cx / (6.0 * a), cy / (6.0 * a)};
}

bool is_convex_ccw(std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = poly[i];
    const Vec2 b = poly[(i + 1) % n];
    const Vec2 c = poly[(i + 2) % n];
    if (cross(b - a, c - b) <= 0.0) return false;
  }
  return signed_area(poly) > 0.0;
}

Polygon transform(std::span<const Vec2> local, const Pose& pose) {
  const double c = std::cos(pose.theta);
  const double s = std::sin(pose.theta);
  Polygon out;
  out.reserve(local.size());
  for (const auto& p : local) out.push_back({pose.x + c * p.x - s * p.y, pose.y + s * p.x + c * p.y});
  return out;
}

Polygon translate(std::span<const Vec2> poly, Vec2 offset) {
  Polygon out;
  out.reserve(poly.size());
  for (const auto& p : poly) out.push_back(p + offset);
  return out;
}

Interval project(std::span<const Vec2> poly, Vec2 axis) {
  Interval r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& p : poly) {
    const double d = dot(p, axis);
    r.lo = std::min(r.lo, d);
    r.hi = std::max(r.hi, d);
  }
  return r;
}

namespace {

template <typename Fn>
void for_each_axis(std::span<const Vec2> a, std::span<const Vec2> b, Fn&& fn) {
  for (auto poly : {a, b}) {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 e = poly[(i + 1) % n] - poly[i];
      const double len = norm(e);
      if (len < 1e-15) continue;
      fn(Vec2{e.y / len, -e.x / len});
    }
  }
}

}  // namespace

bool overlaps(std::span<const Vec2> a, std::span<const Vec2> b, double tol) {
  if (a.size() < 3 || b.size() < 3) return false;
  bool separated = false;
  for_each_axis(a, b, [&](Vec2 axis) {
    if (separated) return;
    const Interval ia = project(a, axis);
    const Interval ib = project(b, axis);
    if (std::min(ia.hi, ib.hi) - std::max(ia.lo, ib.lo) <= tol) separated = true;
  });
  return !separated;
}

double exit_distance(std::span<const Vec2> fixed, std::span<const Vec2> moving, Vec2 dir,
                     double tol) {
  if (!overlaps(fixed, moving, tol)) return 0.0;
  // Along each axis the set of t for which projections still overlap is an
  // interval; the moving body is clear once t exceeds the smallest upper
  // bound among axes where it travels.
  double exit = std::numeric_limits<double>::infinity();
  for_each_axis(fixed, moving, [&](Vec2 axis) {
    const double speed = dot(dir, axis);
    if (std::abs(speed) < 1e-15) return;
    const Interval f = project(fixed, axis);
    const Interval m = project(moving, axis);
    const double t = speed > 0.0 ? (f.hi - m.lo) / speed : (f.lo - m.hi) / speed;
    exit = std::min(exit, t);
  });
  return std::max(0.0, exit);
}

Polygon clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  Polygon out(subject.begin(), subject.end());
  const std::size_t m = clip.size();
  for (std::size_t i = 0; i < m && !out.empty(); ++i) {
    const Vec2 a = clip[i];
    const Vec2 b = clip[(i + 1) % m];
    const Vec2 e = b - a;
    Polygon in = std::move(out);
    out.clear();
    const std::size_t n = in.size();
    for (std::size_t j = 0; j < n; ++j) {
      const Vec2 p = in[j];
      const Vec2 q = in[(j + 1) % n];
      const double sp = cross(e, p - a);
      const double sq = cross(e, q - a);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + (q - p) * t);
      }
    }
  }
  if (out.size() < 3) out.clear();
  return out;
}

double intersection_area(std::span<const Vec2> a, std::span<const Vec2> b) {
  return area(clip_convex(a, b));
}

bool contains(std::span<const Vec2> convex_ccw, Vec2 p) {
  const std::size_t n = convex_ccw.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (cross(convex_ccw[(i + 1) % n] - convex_ccw[i], p - convex_ccw[i]) < 0.0) return false;
  }
  return true;
}

Polygon oriented_rect(Vec2 origin, Vec2 axis, double u_lo, double u_hi, double n_lo,
                      double n_hi) {
  const Vec2 n = perp(axis);
  return {origin + axis * u_lo + n * n_lo, origin + axis * u_hi + n * n_lo,
          origin + axis * u_hi + n * n_hi, origin + axis * u_lo + n * n_hi};
}

Polygon regular_polygon(Vec2 center, double circumradius, int sides) {
  Polygon out;
  out.reserve(static_cast<std::size_t>(sides));
  for (int k = 0; k < sides; ++k) {
    const double a = 2.0 * std::numbers::pi * k / sides;
    out.push_back(center + unit(a) * circumradius);
  }
  return out;
}

}  // namespace ms::geom
