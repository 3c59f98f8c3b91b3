#pragma once

#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace ms::geom {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr bool operator==(const Vec2&) const = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }
inline Vec2 unit(double angle) { return {std::cos(angle), std::sin(angle)}; }
constexpr Vec2 perp(Vec2 a) { return {-a.y, a.x}; }

struct Pose {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  constexpr bool operator==(const Pose&) const = default;
};

using Polygon = std::vector<Vec2>;

struct Interval {
  double lo;
  double hi;
};

double signed_area(std::span<const Vec2> poly);
double area(std::span<const Vec2> poly);
Vec2 centroid(std::span<const Vec2> poly);

// True if the polygon is strictly convex and counterclockwise.
bool is_convex_ccw(std::span<const Vec2> poly);

Polygon transform(std::span<const Vec2> local, const Pose& pose);
Polygon translate(std::span<const Vec2> poly, Vec2 offset);

Interval project(std::span<const Vec2> poly, Vec2 axis);

// Separating-axis overlap test for convex polygons. Polygons whose
// projections overlap by no more than `tol` on some axis count as touching,
// not overlapping.
bool overlaps(std::span<const Vec2> a, std::span<const Vec2> b, double tol = 1e-9);

// Smallest t >= 0 such that `moving` translated by t*dir no longer overlaps
// `fixed` (convex polygons, dir need not be unit). Returns 0 when they do not
// overlap already.
double exit_distance(std::span<const Vec2> fixed, std::span<const Vec2> moving, Vec2 dir,
                     double tol = 1e-9);

// Intersection of two convex polygons (Sutherland-Hodgman); empty if disjoint.
Polygon clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);
double intersection_area(std::span<const Vec2> a, std::span<const Vec2> b);

bool contains(std::span<const Vec2> convex_ccw, Vec2 p);

// Oriented rectangle spanning [u_lo, u_hi] along `axis` and [n_lo, n_hi]
// along its left normal, both measured from `origin`. Counterclockwise.
Polygon oriented_rect(Vec2 origin, Vec2 axis, double u_lo, double u_hi, double n_lo,
                      double n_hi);

Polygon regular_polygon(Vec2 center, double circumradius, int sides);

}  // namespace ms::geom
