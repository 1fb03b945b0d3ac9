#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "pegsim/mesh.hpp"
#include "pegsim/polygon.hpp"
#include "pegsim/rng.hpp"
#include "pegsim/spatial.hpp"

namespace pegsim {

// Ranges for procedural module generation. Defaults follow the reference
// parameter table; distances in meters, angles in radians unless noted.
struct GenConfig {
  double round_vertex_probability = 0.25;  // pegs with `round_vertex_count` vertices
  int vertex_min = 3;
  int vertex_max = 8;
  int round_vertex_count = 32;
  double circumradius_min = 0.010, circumradius_max = 0.030;
  double aspect_ratio_min = 0.25, aspect_ratio_max = 1.0;
  double peg_height_min = 0.025, peg_height_max = 0.150;
  double tapering_min = 0.0, tapering_max = 0.25;
  double hole_depth_fraction_min = 0.40, hole_depth_fraction_max = 0.80;
  double hole_tilt_max = 15.0 * M_PI / 180.0;  // per tilt axis, symmetric
  double clearance = 0.001;
  double plate_side = 0.15;
  double plate_extra_thickness = 0.010;  // material behind the cavity bottom
  double edge_margin = 0.010;            // min gap between cavity footprint and plate edge
  int arc_segments = 8;

  void validate() const;  // throws std::invalid_argument on bad ranges
};

struct ModuleParams {
  uint64_t seed = 0;
  int vertex_count = 4;
  double circumradius = 0.02;
  double aspect_ratio = 1.0;
  double peg_height = 0.1;
  double tapering = 0.0;
  double hole_depth_fraction = 0.5;
  Eigen::Vector2d hole_tilt = Eigen::Vector2d::Zero();      // radians, about plate x and y
  Eigen::Vector2d hole_position = Eigen::Vector2d::Zero();  // entrance center on the plate
  double clearance = 0.001;
};

// A realized peg + plate pair. The plate lives in its own frame: x/y in the
// mounting plane, z up, top surface at z = 0, plate centered on the origin.
// The peg mesh lives in the peg body frame: origin at the bottom-face center,
// extrusion axis +z.
struct AssemblyModule {
  ModuleParams params;
  TriMesh peg_mesh;
  TriMesh plate_mesh;
  Pose entrance_frame;             // origin at hole entrance center, z = mounting normal
  Pose bottom_frame;               // origin at hole bottom center, z = hole axis
  Mat3 canonical_insert_rotation;  // peg body orientation when seated
  double hole_depth = 0.0;

  // Derived geometry shared with the SDF builder and the environment.
  ConvexPolygon peg_top_polygon;  // untapered cross-section, peg/hole local xy
  ConvexPolygon cavity_polygon;   // peg_top_polygon offset outward by clearance
  double plate_thickness = 0.0;
};

ModuleParams sample_module_params(const GenConfig& config, uint64_t seed);

// Extruded convex prism: top cross-section at z = peg_height, bottom scaled
// by (1 - tapering) at z = 0. Throws on degenerate cross-sections.
TriMesh build_peg(const ModuleParams& params);

AssemblyModule build_module(const ModuleParams& params, const GenConfig& config = {});

// Convenience: sample + build.
AssemblyModule generate_module(const GenConfig& config, uint64_t seed);

// The module.json payload: parameters, frames and derived scalars.
std::string module_metadata(const AssemblyModule& module);

// Writes peg.obj, plate.obj and module.json into `dir` (created if missing).
void export_meshes(const AssemblyModule& module, const std::filesystem::path& dir);

// Reads module.json and rebuilds the module from its recorded parameters.
AssemblyModule import_module(const std::filesystem::path& dir, const GenConfig& config = {});

}  // namespace pegsim
