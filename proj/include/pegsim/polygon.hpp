#pragma once

#include <Eigen/Core>
#include <vector>

namespace pegsim {

using Vec2 = Eigen::Vector2d;

// Convex polygon, vertices counter-clockwise, no repeated points.
struct ConvexPolygon {
  std::vector<Vec2> vertices;

  double area() const;
  double perimeter() const;
  bool contains(const Vec2& p, double tol = 0.0) const;

  // Signed distance to the boundary; negative inside.
  double signed_distance(const Vec2& p) const;

  // Closest point on the boundary (valid for inside and outside queries).
  Vec2 closest_boundary_point(const Vec2& p) const;

  // Max absolute extent along x and y.
  Vec2 extent() const;
};

// Regular polygon of `n` vertices inscribed in a circle of `circumradius`,
// then scaled by `aspect_ratio` along y. Vertex 0 on +x.
ConvexPolygon regular_polygon(int n, double circumradius, double aspect_ratio);

// Outward offset by `clearance` (Minkowski sum with a disc). Corner arcs are
// approximated with tangent chords so every offset boundary point lies at
// distance >= clearance from the input, with equality attained on the
// straight edge segments: the measured minimum gap equals the clearance.
ConvexPolygon offset_polygon(const ConvexPolygon& poly, double clearance, int arc_segments = 8);

// Minimum distance between the boundaries of two non-overlapping (or nested)
// convex polygons.
double polygon_boundary_distance(const ConvexPolygon& a, const ConvexPolygon& b);

}  // namespace pegsim
