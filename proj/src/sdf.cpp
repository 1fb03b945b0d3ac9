#include "pegsim/sdf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pegsim {

namespace {

// Clip a convex planar polygon against the half-space normal . x <= offset.
std::vector<Vec3> clip_polygon(const std::vector<Vec3>& poly, const Vec3& normal,
                               double offset) {
  std::vector<Vec3> out;
  const int n = static_cast<int>(poly.size());
  if (n == 0) return out;
  out.reserve(n + 1);
  for (int i = 0; i < n; ++i) {
    const Vec3& a = poly[i];
    const Vec3& b = poly[(i + 1) % n];
    const double da = normal.dot(a) - offset;
    const double db = normal.dot(b) - offset;
    if (da <= 1e-12) out.push_back(a);
    if ((da < -1e-12 && db > 1e-12) || (da > 1e-12 && db < -1e-12)) {
      const double t = da / (da - db);
      out.push_back(a + t * (b - a));
    }
  }
  if (out.size() < 3) out.clear();
  return out;
}

double point_segment_distance3(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

}  // namespace

Vec3 SdfField::hole_coords(const Vec3& p) const {
  const Vec3 d = p - entrance_;
  return Vec3(d.dot(hole_rot_.col(0)), d.dot(hole_rot_.col(1)), -d.dot(hole_rot_.col(2)));
}

double SdfField::box_sdf(const Vec3& p) const {
  const Vec3 center(0.0, 0.0, -0.5 * thickness_);
  const Vec3 half(half_side_, half_side_, 0.5 * thickness_);
  const Vec3 q = (p - center).cwiseAbs() - half;
  const Vec3 outside = q.cwiseMax(0.0);
  return outside.norm() + std::min(q.maxCoeff(), 0.0);
}

double SdfField::prism_sdf(double d2, double w) const {
  const double dw = w - depth_;
  if (d2 <= 0.0 && dw <= 0.0) return std::max(d2, dw);
  return std::hypot(std::max(d2, 0.0), std::max(dw, 0.0));
}

double SdfField::cell_distance(const Vec3& p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const Cell& cell : cells_) {
    bool inside_cell = true;
    for (const Face& f : cell.faces) {
      if (f.normal.dot(p) - f.offset > 0.0) {
        inside_cell = false;
        break;
      }
    }
    if (inside_cell) return 0.0;
    for (const Face& f : cell.faces) {
      const double plane_d = f.normal.dot(p) - f.offset;
      if (std::abs(plane_d) >= best) continue;
      // Projection inside the face loop? (loop is convex and planar)
      const Vec3 proj = p - plane_d * f.normal;
      bool in_face = true;
      const int n = static_cast<int>(f.vertices.size());
      for (int i = 0; i < n && in_face; ++i) {
        const Vec3 edge = f.vertices[(i + 1) % n] - f.vertices[i];
        if (edge.cross(proj - f.vertices[i]).dot(f.normal) < -1e-12) in_face = false;
      }
      if (in_face) {
        best = std::min(best, std::abs(plane_d));
        continue;
      }
      for (int i = 0; i < n; ++i) {
        best = std::min(best,
                        point_segment_distance3(p, f.vertices[i], f.vertices[(i + 1) % n]));
      }
    }
  }
  return best;
}

double SdfField::value(const Vec3& p) const {
  const double sb = box_sdf(p);
  const Vec3 uvw = hole_coords(p);
  const double d2 = cavity_.signed_distance(Eigen::Vector2d(uvw.x(), uvw.y()));
  const double sp = prism_sdf(d2, uvw.z());

  if (sb <= 0.0 && sp >= 0.0) return std::max(sb, -sp);  // inside material

  if (sb > 0.0) {
    // Outside the box: exact unless the clamped box point falls into the open
    // cavity column (possible only above the entrance region).
    const Vec3 center(0.0, 0.0, -0.5 * thickness_);
    const Vec3 half(half_side_, half_side_, 0.5 * thickness_);
    const Vec3 q = (p - center).cwiseMax(center - half).cwiseMin(center + half);
    const Vec3 quvw = hole_coords(q);
    const double qd2 = cavity_.signed_distance(Eigen::Vector2d(quvw.x(), quvw.y()));
    if (prism_sdf(qd2, quvw.z()) >= 0.0) return sb;
    return cell_distance(p);
  }

  // Inside the cavity: nearest material point is on the prism boundary when
  // that boundary point stays inside the box.
  const double lateral = -d2;
  const double to_bottom = depth_ - uvw.z();
  if (to_bottom <= lateral) return to_bottom;
  const Eigen::Vector2d cp = cavity_.closest_boundary_point(Eigen::Vector2d(uvw.x(), uvw.y()));
  const Vec3 wall_point = entrance_ + cp.x() * hole_rot_.col(0) + cp.y() * hole_rot_.col(1) -
                          uvw.z() * hole_rot_.col(2);
  if (wall_point.z() <= 0.0) return lateral;
  return cell_distance(p);
}

double SdfField::penetration(const Vec3& p) const {
  const double sb = box_sdf(p);
  if (sb > 0.0) return sb;  // outside the plate entirely
  const Vec3 uvw = hole_coords(p);
  const double w = uvw.z();
  const double uv = std::hypot(uvw.x(), uvw.y());
  // Far from the cavity, laterally or below the bottom: the prism distance is
  // at least -sb there, so the exact value is the box term alone.
  if (uv - cavity_outer_ >= -sb || w - depth_ >= -sb) return sb;
  // Strictly inside the inscribed cylinder of the open cavity: air.
  if (uv < cavity_inner_ && w < depth_) return std::min(cavity_inner_ - uv, depth_ - w);
  const double d2 = cavity_.signed_distance(Eigen::Vector2d(uvw.x(), uvw.y()));
  const double sp = prism_sdf(d2, w);
  if (sp >= 0.0) return std::max(sb, -sp);  // in material: matches value()
  return std::min(-d2, depth_ - w);         // in the cavity: sign is all that matters
}

Vec3 SdfField::gradient(const Vec3& p) const {
  Vec3 g;
  for (int i = 0; i < 3; ++i) {
    Vec3 dp = Vec3::Zero();
    dp[i] = grad_step_;
    g[i] = (value(p + dp) - value(p - dp)) / (2.0 * grad_step_);
  }
  return g;
}

bool SdfField::inside(const Vec3& p) const {
  const Vec3 uvw = hole_coords(p);
  const double d2 = cavity_.signed_distance(Eigen::Vector2d(uvw.x(), uvw.y()));
  return box_sdf(p) <= 0.0 && prism_sdf(d2, uvw.z()) >= 0.0;
}

bool SdfField::in_cavity_column(const Vec3& p, double margin) const {
  const Vec3 uvw = hole_coords(p);
  return cavity_.contains(Eigen::Vector2d(uvw.x(), uvw.y()), margin);
}

SdfField build_sdf(const AssemblyModule& module) {
  SdfField f;
  // Recover the plate half side from the mesh extent (robust to config edits).
  double hx = 0.0;
  for (const Vec3& v : module.plate_mesh.vertices) hx = std::max(hx, std::abs(v.x()));
  f.half_side_ = hx;
  f.thickness_ = module.plate_thickness;
  f.depth_ = module.hole_depth;
  f.entrance_ = module.entrance_frame.translation;
  f.hole_rot_ = module.canonical_insert_rotation;
  f.cavity_ = module.cavity_polygon;

  // Convex cell decomposition of the solid for the rare queries where the
  // simple paths are not provably exact: one cell per cavity wall (box cut by
  // the outward wall half-space) plus one below the cavity bottom.
  struct Plane {
    Vec3 n;
    double d;
  };
  const double h = f.half_side_, T = f.thickness_;
  const std::vector<Plane> box_planes = {
      {Vec3(1, 0, 0), h},  {Vec3(-1, 0, 0), h}, {Vec3(0, 1, 0), h},
      {Vec3(0, -1, 0), h}, {Vec3(0, 0, 1), 0},  {Vec3(0, 0, -1), T}};

  std::vector<Plane> cuts;
  const int cn = static_cast<int>(f.cavity_.vertices.size());
  const Vec3 e1 = f.hole_rot_.col(0), e2 = f.hole_rot_.col(1), axis = f.hole_rot_.col(2);
  double inner = std::numeric_limits<double>::infinity();
  for (int i = 0; i < cn; ++i) {
    const Vec2 a = f.cavity_.vertices[i];
    const Vec2 b = f.cavity_.vertices[(i + 1) % cn];
    const Vec2 t = (b - a).normalized();
    const Vec2 n2(t.y(), -t.x());  // outward for a CCW loop
    const Vec3 n3 = n2.x() * e1 + n2.y() * e2;
    const Vec3 on_edge = f.entrance_ + a.x() * e1 + a.y() * e2;
    cuts.push_back({n3, n3.dot(on_edge)});
    inner = std::min(inner, n2.dot(a));
    f.cavity_outer_ = std::max(f.cavity_outer_, a.norm());
  }
  f.cavity_inner_ = std::max(0.0, inner);
  // Material below the cavity bottom: w >= depth  <=>  -axis . x >= depth - axis . E.
  cuts.push_back({-axis, f.depth_ - axis.dot(f.entrance_)});

  const double big = 2.0 * (2.0 * h + T);
  for (const Plane& cut : cuts) {
    SdfField::Cell cell;
    // The cell is the box intersected with { cut.n . x >= cut.d }.
    std::vector<Plane> halfspaces = box_planes;
    halfspaces.push_back({-cut.n, -cut.d});
    for (size_t i = 0; i < halfspaces.size(); ++i) {
      const Plane& hp = halfspaces[i];
      // Seed polygon: large square on the plane, oriented with normal hp.n.
      Vec3 u = hp.n.cross(Vec3::UnitX());
      if (u.squaredNorm() < 1e-12) u = hp.n.cross(Vec3::UnitY());
      u.normalize();
      const Vec3 v = hp.n.cross(u);
      const Vec3 origin = hp.d * hp.n;
      std::vector<Vec3> poly = {origin + big * (u + v), origin + big * (v - u),
                                origin - big * (u + v), origin + big * (u - v)};
      for (size_t jj = 0; jj < halfspaces.size() && !poly.empty(); ++jj) {
        if (jj == i) continue;
        poly = clip_polygon(poly, halfspaces[jj].n, halfspaces[jj].d);
      }
      if (!poly.empty()) cell.faces.push_back({hp.n, hp.d, std::move(poly)});
    }
    if (!cell.faces.empty()) f.cells_.push_back(std::move(cell));
  }
  return f;
}

}  // namespace pegsim
