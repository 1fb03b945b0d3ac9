#pragma once

#include <vector>

#include "pegsim/polygon.hpp"
#include "pegsim/procgen.hpp"
#include "pegsim/spatial.hpp"

namespace pegsim {

// Signed distance field of the plate-with-cavity solid, in plate coordinates.
// Negative inside material, positive outside, zero on the surface. Values are
// exact Euclidean distances everywhere (the cavity is represented analytically,
// not by mesh sampling).
class SdfField {
 public:
  double value(const Vec3& p) const;
  Vec3 gradient(const Vec3& p) const;  // central differences, step 1e-5 m
  bool inside(const Vec3& p) const;    // membership; boundary counts as inside

  // Contact query: equals value(p) whenever the result is <= 0, but may
  // return any positive number for points in air. Collision sampling only
  // acts on penetrating points, and proving "in air" is much cheaper than
  // computing the exact clearance.
  double penetration(const Vec3& p) const;

  // True if the point lies inside the (infinite) cavity column, laterally
  // expanded by `margin`: used to distinguish descending inside the hole
  // (including wall-contact penetration) from sinking beside the plate.
  bool in_cavity_column(const Vec3& p, double margin = 0.0) const;

  double half_side() const { return half_side_; }
  double thickness() const { return thickness_; }
  double hole_depth() const { return depth_; }

 private:
  friend SdfField build_sdf(const AssemblyModule& module);

  struct Face {
    Vec3 normal;                 // plane normal (unit, outward from the cell)
    double offset = 0.0;         // plane: normal . x = offset
    std::vector<Vec3> vertices;  // convex planar loop
  };
  struct Cell {
    std::vector<Face> faces;  // every face plane bounds the cell
  };

  // Hole coordinates: u, v across the cavity cross-section, w depth below the
  // entrance along the (tilted) hole axis.
  Vec3 hole_coords(const Vec3& p) const;
  double box_sdf(const Vec3& p) const;
  double prism_sdf(double d2, double w) const;
  double cell_distance(const Vec3& p) const;

  double half_side_ = 0.0;
  double thickness_ = 0.0;
  double depth_ = 0.0;
  Vec3 entrance_ = Vec3::Zero();
  Mat3 hole_rot_ = Mat3::Identity();
  ConvexPolygon cavity_;
  std::vector<Cell> cells_;
  double grad_step_ = 1e-5;
  // Radii of discs inscribed in / enclosing the cavity cross-section, both
  // centered on the hole axis; they bound the polygon distance from below.
  double cavity_inner_ = 0.0;
  double cavity_outer_ = 0.0;
};

SdfField build_sdf(const AssemblyModule& module);

}  // namespace pegsim
