#include "pegsim/polygon.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace pegsim {

namespace {

Vec2 point_segment_closest(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return a;
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return a + t * ab;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  return (p - point_segment_closest(p, a, b)).norm();
}

}  // namespace

double ConvexPolygon::area() const {
  double s = 0.0;
  const int n = static_cast<int>(vertices.size());
  for (int i = 0; i < n; ++i) {
    const Vec2& a = vertices[i];
    const Vec2& b = vertices[(i + 1) % n];
    s += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * s;
}

double ConvexPolygon::perimeter() const {
  double s = 0.0;
  const int n = static_cast<int>(vertices.size());
  for (int i = 0; i < n; ++i) s += (vertices[(i + 1) % n] - vertices[i]).norm();
  return s;
}

bool ConvexPolygon::contains(const Vec2& p, double tol) const {
  const int n = static_cast<int>(vertices.size());
  for (int i = 0; i < n; ++i) {
    const Vec2& a = vertices[i];
    const Vec2& b = vertices[(i + 1) % n];
    const Vec2 e = b - a;
    // CCW: interior is to the left of every edge. `tol` is a distance in the
    // polygon's units; positive values expand the polygon.
    const double cross = e.x() * (p.y() - a.y()) - e.y() * (p.x() - a.x());
    if (cross < -tol * e.norm()) return false;
  }
  return true;
}

double ConvexPolygon::signed_distance(const Vec2& p) const {
  const int n = static_cast<int>(vertices.size());
  double d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    d = std::min(d, point_segment_distance(p, vertices[i], vertices[(i + 1) % n]));
  }
  return contains(p) ? -d : d;
}

Vec2 ConvexPolygon::closest_boundary_point(const Vec2& p) const {
  const int n = static_cast<int>(vertices.size());
  Vec2 best = vertices[0];
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const Vec2 q = point_segment_closest(p, vertices[i], vertices[(i + 1) % n]);
    const double d2 = (p - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = q;
    }
  }
  return best;
}

Vec2 ConvexPolygon::extent() const {
  Vec2 e = Vec2::Zero();
  for (const Vec2& v : vertices) {
    e.x() = std::max(e.x(), std::abs(v.x()));
    e.y() = std::max(e.y(), std::abs(v.y()));
  }
  return e;
}

ConvexPolygon regular_polygon(int n, double circumradius, double aspect_ratio) {
  if (n < 3) throw std::invalid_argument("regular_polygon: need at least 3 vertices");
  ConvexPolygon poly;
  poly.vertices.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double t = 2.0 * M_PI * i / n;
    poly.vertices.emplace_back(circumradius * std::cos(t),
                               aspect_ratio * circumradius * std::sin(t));
  }
  return poly;
}

ConvexPolygon offset_polygon(const ConvexPolygon& poly, double clearance, int arc_segments) {
  if (clearance <= 0.0) throw std::invalid_argument("offset_polygon: clearance must be > 0");
  const int n = static_cast<int>(poly.vertices.size());
  ConvexPolygon out;
  out.vertices.reserve(n * (arc_segments + 2));
  auto outward_normal = [](const Vec2& a, const Vec2& b) {
    const Vec2 e = (b - a).normalized();
    return Vec2(e.y(), -e.x());
  };
  for (int i = 0; i < n; ++i) {
    const Vec2& prev = poly.vertices[(i + n - 1) % n];
    const Vec2& v = poly.vertices[i];
    const Vec2& next = poly.vertices[(i + 1) % n];
    const Vec2 n_in = outward_normal(prev, v);
    const Vec2 n_out = outward_normal(v, next);
    const double a0 = std::atan2(n_in.y(), n_in.x());
    double turn = std::atan2(n_out.y(), n_out.x()) - a0;
    while (turn < 0.0) turn += 2.0 * M_PI;
    // Entry tangent point of the incoming edge's offset line.
    out.vertices.emplace_back(v + clearance * n_in);
    if (turn > 1e-12) {
      // Tangent-chord arc: points pushed to R so chords touch the clearance
      // circle instead of cutting inside it.
      const double step = turn / arc_segments;
      const double radius = clearance / std::cos(0.5 * step);
      for (int j = 0; j < arc_segments; ++j) {
        const double ang = a0 + (j + 0.5) * step;
        out.vertices.emplace_back(v + radius * Vec2(std::cos(ang), std::sin(ang)));
      }
      out.vertices.emplace_back(v + clearance * n_out);
    }
  }
  return out;
}

double polygon_boundary_distance(const ConvexPolygon& a, const ConvexPolygon& b) {
  double d = std::numeric_limits<double>::infinity();
  const int na = static_cast<int>(a.vertices.size());
  const int nb = static_cast<int>(b.vertices.size());
  for (int i = 0; i < na; ++i) {
    for (int j = 0; j < nb; ++j) {
      d = std::min(d, point_segment_distance(a.vertices[i], b.vertices[j],
                                             b.vertices[(j + 1) % nb]));
      d = std::min(d, point_segment_distance(b.vertices[j], a.vertices[i],
                                             a.vertices[(i + 1) % na]));
    }
  }
  return d;
}

}  // namespace pegsim
