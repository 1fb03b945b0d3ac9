#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "pegsim/spatial.hpp"

namespace pegsim {

// Indexed triangle mesh in meters. Faces are wound counter-clockwise when
// viewed from outside the solid.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  Vec3 face_normal(int f) const;
  double face_area(int f) const;
  double surface_area() const;
};

struct MassProperties {
  double volume = 0.0;
  Vec3 centroid = Vec3::Zero();   // center of mass at uniform density
  Mat3 inertia = Mat3::Zero();    // about the origin, unit density
};

// Divergence-theorem integrals over the surface; requires a watertight,
// consistently wound mesh.
MassProperties compute_mass_properties(const TriMesh& mesh);

// Every edge shared by exactly two faces with opposite orientation, no
// degenerate faces, positive enclosed volume.
bool is_watertight(const TriMesh& mesh, std::string* why = nullptr);

// Certifies convexity: all vertices lie on or behind every face's supporting
// plane (within tol). Equivalent to hull equality for a watertight mesh.
bool is_convex(const TriMesh& mesh, double tol = 1e-9);

// ASCII OBJ with full double precision; round-trips vertex data bit-exactly.
void write_obj(const TriMesh& mesh, const std::filesystem::path& path);
TriMesh read_obj(const std::filesystem::path& path);

}  // namespace pegsim
