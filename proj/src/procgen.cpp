#include "pegsim/procgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace pegsim {

namespace {

constexpr int kModuleFormatVersion = 1;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

Mat3 hole_rotation(const Eigen::Vector2d& tilt) {
  // Tilt about the plate x axis first, then the (rotated) y axis.
  return (Eigen::AngleAxisd(tilt.x(), Vec3::UnitX()) *
          Eigen::AngleAxisd(tilt.y(), Vec3::UnitY()))
      .toRotationMatrix();
}

// Triangulates the plate top (the square annulus around the convex entrance
// ring, z = 0) together with the four plate sides and the underside. The
// plate vertex pool must already hold the top corners at 0..3 (CCW from
// above, starting at (-h,-h)), the bottom corners at 4..7, and the entrance
// ring at ent0..ent0+cn-1 (CCW from above, strictly inside the square).
//
// The annulus is split into one cell per ring edge, bounded by the edge, the
// square rim, and the rays cast from the ring centroid through the two edge
// endpoints. Each cell is convex (a wedge about the centroid cut by the edge
// line and the rim), the cells tile the annulus, and every cell is emitted as
// a triangle fan. The ray exits become rim vertices shared with the side
// walls, so no T-junctions appear anywhere on the rim.
void build_plate_shell(TriMesh& plate, double h, int ent0, int cn) {
  auto xy = [&](int idx) {
    return Eigen::Vector2d(plate.vertices[idx].x(), plate.vertices[idx].y());
  };
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  for (int i = 0; i < cn; ++i) center += xy(ent0 + i);
  center /= static_cast<double>(cn);

  // Rim positions use the CCW arclength s in [0, 8h), side k covering
  // [2hk, 2h(k+1)] between top corners k and k+1.
  auto rim_s = [&](const Eigen::Vector2d& p) {
    if (std::abs(p.y() + h) <= 1e-9) return 0.0 * h + (p.x() + h);
    if (std::abs(p.x() - h) <= 1e-9) return 2.0 * h + (p.y() + h);
    if (std::abs(p.y() - h) <= 1e-9) return 4.0 * h + (h - p.x());
    return 6.0 * h + (h - p.y());
  };

  struct Exit {
    int index;
    double s;
  };
  std::vector<Exit> exits(cn);
  std::vector<std::vector<std::pair<double, int>>> on_side(4);
  for (int i = 0; i < cn; ++i) {
    const Eigen::Vector2d v = xy(ent0 + i);
    const Eigen::Vector2d d = v - center;
    double t_best = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 2; ++a) {
      if (d[a] == 0.0) continue;
      const double t = ((d[a] > 0.0 ? h : -h) - v[a]) / d[a];
      if (t > 0.0 && t < t_best && std::abs(v[1 - a] + t * d[1 - a]) <= h + 1e-9) t_best = t;
    }
    Eigen::Vector2d p = v + t_best * d;
    p.x() = std::clamp(p.x(), -h, h);
    p.y() = std::clamp(p.y(), -h, h);
    const bool at_x = std::abs(std::abs(p.x()) - h) <= 1e-9;
    const bool at_y = std::abs(std::abs(p.y()) - h) <= 1e-9;
    if (at_x && at_y) {  // exit through a corner: reuse the corner vertex
      const int k = p.x() < 0.0 ? (p.y() < 0.0 ? 0 : 3) : (p.y() < 0.0 ? 1 : 2);
      exits[i] = {k, 2.0 * h * k};
    } else {
      const int idx = static_cast<int>(plate.vertices.size());
      plate.vertices.push_back(Vec3(p.x(), p.y(), 0.0));
      const double s = rim_s(p);
      exits[i] = {idx, s};
      const int side = static_cast<int>(s / (2.0 * h));
      on_side[side].push_back({s - 2.0 * h * side, idx});
    }
  }

  // Annulus cells, one fan per ring edge anchored at the edge's far vertex.
  for (int i = 0; i < cn; ++i) {
    const int j = (i + 1) % cn;
    const double sa = exits[i].s;
    double sb = exits[j].s;
    if (sb <= sa + 1e-10) sb += 8.0 * h;
    std::vector<std::pair<double, int>> chain;
    for (int k = 0; k < 4; ++k) {
      for (double base : {0.0, 8.0 * h}) {
        const double sc = 2.0 * h * k + base;
        if (sc > sa + 1e-10 && sc < sb - 1e-10) chain.push_back({sc, k});
      }
    }
    std::sort(chain.begin(), chain.end());
    const int anchor = ent0 + j;
    int prev = exits[i].index;
    plate.faces.push_back({anchor, ent0 + i, prev});
    for (const auto& [sc, k] : chain) {
      plate.faces.push_back({anchor, prev, k});
      prev = k;
    }
    plate.faces.push_back({anchor, prev, exits[j].index});
  }

  // Sides: fans over the rim chain of each side, anchored at a bottom corner.
  for (int k = 0; k < 4; ++k) {
    const int kn = (k + 1) % 4;
    std::sort(on_side[k].begin(), on_side[k].end());
    std::vector<int> top = {k};
    for (const auto& [par, idx] : on_side[k]) top.push_back(idx);
    top.push_back(kn);
    const int anchor = 4 + kn;
    for (size_t t = 0; t + 1 < top.size(); ++t)
      plate.faces.push_back({anchor, top[t + 1], top[t]});
    plate.faces.push_back({anchor, top.front(), 4 + k});
  }

  plate.faces.push_back({4, 6, 5});
  plate.faces.push_back({4, 7, 6});
}

nlohmann::json pose_to_json(const Pose& pose) {
  const Vec6 r = rot6d_encode(pose.rotation).values;
  return {{"translation", {pose.translation.x(), pose.translation.y(), pose.translation.z()}},
          {"rotation6d", {r[0], r[1], r[2], r[3], r[4], r[5]}}};
}

}  // namespace

void GenConfig::validate() const {
  require(round_vertex_probability >= 0.0 && round_vertex_probability <= 1.0,
          "round_vertex_probability outside [0,1]");
  require(vertex_min >= 3 && vertex_max >= vertex_min, "bad vertex count range");
  require(round_vertex_count >= 3, "round_vertex_count < 3");
  require(circumradius_min > 0.0 && circumradius_max >= circumradius_min,
          "bad circumradius range");
  require(aspect_ratio_min > 0.0 && aspect_ratio_max >= aspect_ratio_min &&
              aspect_ratio_max <= 1.0,
          "bad aspect ratio range");
  require(peg_height_min > 0.0 && peg_height_max >= peg_height_min, "bad peg height range");
  require(tapering_min >= 0.0 && tapering_max >= tapering_min && tapering_max < 1.0,
          "bad tapering range");
  require(hole_depth_fraction_min > 0.0 && hole_depth_fraction_max >= hole_depth_fraction_min &&
              hole_depth_fraction_max <= 1.0,
          "bad hole depth fraction range");
  require(hole_tilt_max >= 0.0 && hole_tilt_max < M_PI / 4.0, "bad hole tilt range");
  require(clearance > 0.0, "clearance must be positive");
  require(plate_side > 0.0 && edge_margin >= 0.0 && plate_extra_thickness > 0.0,
          "bad plate dimensions");
  require(arc_segments >= 1, "arc_segments < 1");
}

ModuleParams sample_module_params(const GenConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(Rng::derive(seed, 0));
  ModuleParams p;
  p.seed = seed;
  p.clearance = config.clearance;
  // Draw order is frozen: vertex count, circumradius, aspect ratio, height,
  // tapering, depth fraction, tilt x, tilt y, hole position x, hole position y.
  p.vertex_count = rng.uniform() < config.round_vertex_probability
                       ? config.round_vertex_count
                       : rng.uniform_int(config.vertex_min, config.vertex_max);
  p.circumradius = rng.uniform(config.circumradius_min, config.circumradius_max);
  p.aspect_ratio = rng.uniform(config.aspect_ratio_min, config.aspect_ratio_max);
  p.peg_height = rng.uniform(config.peg_height_min, config.peg_height_max);
  p.tapering = rng.uniform(config.tapering_min, config.tapering_max);
  p.hole_depth_fraction =
      rng.uniform(config.hole_depth_fraction_min, config.hole_depth_fraction_max);
  p.hole_tilt.x() = rng.uniform(-config.hole_tilt_max, config.hole_tilt_max);
  p.hole_tilt.y() = rng.uniform(-config.hole_tilt_max, config.hole_tilt_max);

  // Hole position: keep the cavity footprint (entrance and bottom rings,
  // projected to the plate plane) at least edge_margin away from the rim.
  const ConvexPolygon top = regular_polygon(p.vertex_count, p.circumradius, p.aspect_ratio);
  const ConvexPolygon cavity = offset_polygon(top, p.clearance, config.arc_segments);
  const Mat3 rot = hole_rotation(p.hole_tilt);
  const Vec3 e1 = rot.col(0), e2 = rot.col(1), axis = rot.col(2);
  const double depth = p.hole_depth_fraction * p.peg_height;
  double ext_x = 0.0, ext_y = 0.0;
  for (const Eigen::Vector2d& v : cavity.vertices) {
    const Vec3 offset = v.x() * e1 + v.y() * e2;
    // Entrance ring: intersection of the cavity edge line with z = 0.
    const Vec3 entrance = offset - (offset.z() / axis.z()) * axis;
    const Vec3 bottom = offset - depth * axis;
    ext_x = std::max({ext_x, std::abs(entrance.x()), std::abs(bottom.x())});
    ext_y = std::max({ext_y, std::abs(entrance.y()), std::abs(bottom.y())});
  }
  const double half = 0.5 * config.plate_side - config.edge_margin;
  const double allow_x = half - ext_x;
  const double allow_y = half - ext_y;
  if (allow_x < 0.0 || allow_y < 0.0)
    throw std::invalid_argument("cavity footprint does not fit the plate");
  p.hole_position.x() = rng.uniform(-allow_x, allow_x);
  p.hole_position.y() = rng.uniform(-allow_y, allow_y);
  return p;
}

TriMesh build_peg(const ModuleParams& params) {
  const ConvexPolygon top =
      regular_polygon(params.vertex_count, params.circumradius, params.aspect_ratio);
  const double bottom_scale = 1.0 - params.tapering;
  ConvexPolygon bottom = top;
  for (Eigen::Vector2d& v : bottom.vertices) v *= bottom_scale;
  if (bottom.area() < 1e-8) throw std::invalid_argument("degenerate peg cross-section");
  if (params.peg_height <= 0.0) throw std::invalid_argument("peg height must be positive");

  const int n = params.vertex_count;
  TriMesh mesh;
  mesh.vertices.reserve(2 * n);
  for (const Eigen::Vector2d& v : bottom.vertices) mesh.vertices.emplace_back(v.x(), v.y(), 0.0);
  for (const Eigen::Vector2d& v : top.vertices)
    mesh.vertices.emplace_back(v.x(), v.y(), params.peg_height);

  auto b = [&](int i) { return i % n; };
  auto t = [&](int i) { return n + i % n; };
  for (int i = 1; i + 1 < n; ++i) {
    mesh.faces.push_back({b(0), b(i + 1), b(i)});  // bottom cap, normal -z
    mesh.faces.push_back({t(0), t(i), t(i + 1)});  // top cap, normal +z
  }
  for (int i = 0; i < n; ++i) {
    mesh.faces.push_back({b(i), b(i + 1), t(i + 1)});
    mesh.faces.push_back({b(i), t(i + 1), t(i)});
  }
  return mesh;
}

AssemblyModule build_module(const ModuleParams& params, const GenConfig& config) {
  config.validate();
  AssemblyModule m;
  m.params = params;
  m.peg_mesh = build_peg(params);
  m.peg_top_polygon =
      regular_polygon(params.vertex_count, params.circumradius, params.aspect_ratio);
  m.cavity_polygon = offset_polygon(m.peg_top_polygon, params.clearance, config.arc_segments);
  m.hole_depth = params.hole_depth_fraction * params.peg_height;

  const Mat3 rot = hole_rotation(params.hole_tilt);
  const Vec3 e1 = rot.col(0), e2 = rot.col(1), axis = rot.col(2);
  const Vec3 entrance(params.hole_position.x(), params.hole_position.y(), 0.0);
  const Vec3 bottom_center = entrance - m.hole_depth * axis;
  m.entrance_frame = Pose{entrance, Mat3::Identity()};
  m.bottom_frame = Pose{bottom_center, rot};
  m.canonical_insert_rotation = rot;

  // Cavity rings in plate coordinates.
  const int cn = static_cast<int>(m.cavity_polygon.vertices.size());
  std::vector<Vec3> ring_entrance(cn), ring_bottom(cn);
  double lowest = 0.0;
  for (int i = 0; i < cn; ++i) {
    const Eigen::Vector2d& v = m.cavity_polygon.vertices[i];
    const Vec3 offset = v.x() * e1 + v.y() * e2;
    ring_entrance[i] = entrance + offset - (offset.z() / axis.z()) * axis;
    ring_entrance[i].z() = 0.0;  // exactly on the plate top by construction
    ring_bottom[i] = bottom_center + offset;
    lowest = std::min(lowest, ring_bottom[i].z());
  }
  m.plate_thickness = std::max(m.hole_depth, -lowest) + config.plate_extra_thickness;

  const double h = 0.5 * config.plate_side;
  for (const Vec3& v : ring_entrance) {
    if (std::abs(v.x()) > h - config.edge_margin + 1e-9 ||
        std::abs(v.y()) > h - config.edge_margin + 1e-9)
      throw std::invalid_argument("cavity footprint violates the plate edge margin");
  }

  TriMesh& plate = m.plate_mesh;
  const double zb = -m.plate_thickness;
  // 0..3 top corners (CCW from above), 4..7 bottom corners.
  plate.vertices = {{-h, -h, 0.0}, {h, -h, 0.0},  {h, h, 0.0},  {-h, h, 0.0},
                    {-h, -h, zb},  {h, -h, zb},   {h, h, zb},   {-h, h, zb}};
  int ent0 = static_cast<int>(plate.vertices.size());
  for (const Vec3& v : ring_entrance) plate.vertices.push_back(v);
  int bot0 = static_cast<int>(plate.vertices.size());
  for (const Vec3& v : ring_bottom) plate.vertices.push_back(v);

  // Plate top (with the entrance hole), sides, and underside.
  build_plate_shell(plate, h, ent0, cn);
  // Cavity walls: normals point into the cavity.
  for (int i = 0; i < cn; ++i) {
    const int j = (i + 1) % cn;
    plate.faces.push_back({ent0 + i, ent0 + j, bot0 + j});
    plate.faces.push_back({ent0 + i, bot0 + j, bot0 + i});
  }
  // Cavity bottom, normal +axis (up into the cavity).
  for (int i = 1; i + 1 < cn; ++i) plate.faces.push_back({bot0, bot0 + i, bot0 + i + 1});

  std::string why;
  if (!is_watertight(plate, &why))
    throw std::runtime_error("plate mesh is not watertight: " + why);
  return m;
}

AssemblyModule generate_module(const GenConfig& config, uint64_t seed) {
  return build_module(sample_module_params(config, seed), config);
}

std::string module_metadata(const AssemblyModule& module) {
  const ModuleParams& p = module.params;
  nlohmann::json j;
  j["format_version"] = kModuleFormatVersion;
  j["seed"] = p.seed;
  j["params"] = {{"vertex_count", p.vertex_count},
                 {"circumradius", p.circumradius},
                 {"aspect_ratio", p.aspect_ratio},
                 {"peg_height", p.peg_height},
                 {"tapering", p.tapering},
                 {"hole_depth_fraction", p.hole_depth_fraction},
                 {"hole_tilt", {p.hole_tilt.x(), p.hole_tilt.y()}},
                 {"hole_position", {p.hole_position.x(), p.hole_position.y()}},
                 {"clearance", p.clearance}};
  j["frames"] = {{"entrance", pose_to_json(module.entrance_frame)},
                 {"bottom", pose_to_json(module.bottom_frame)}};
  j["hole_depth"] = module.hole_depth;
  j["plate_thickness"] = module.plate_thickness;
  return j.dump(2) + "\n";
}

void export_meshes(const AssemblyModule& module, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_obj(module.peg_mesh, dir / "peg.obj");
  write_obj(module.plate_mesh, dir / "plate.obj");
  std::ofstream out(dir / "module.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "module.json").string());
  out << module_metadata(module);
}

AssemblyModule import_module(const std::filesystem::path& dir, const GenConfig& config) {
  std::ifstream in(dir / "module.json");
  if (!in) throw std::runtime_error("cannot read " + (dir / "module.json").string());
  nlohmann::json j;
  in >> j;
  if (j.at("format_version").get<int>() != kModuleFormatVersion)
    throw std::runtime_error("unsupported module format version");
  const nlohmann::json& q = j.at("params");
  ModuleParams p;
  p.seed = j.at("seed").get<uint64_t>();
  p.vertex_count = q.at("vertex_count").get<int>();
  p.circumradius = q.at("circumradius").get<double>();
  p.aspect_ratio = q.at("aspect_ratio").get<double>();
  p.peg_height = q.at("peg_height").get<double>();
  p.tapering = q.at("tapering").get<double>();
  p.hole_depth_fraction = q.at("hole_depth_fraction").get<double>();
  p.hole_tilt.x() = q.at("hole_tilt").at(0).get<double>();
  p.hole_tilt.y() = q.at("hole_tilt").at(1).get<double>();
  p.hole_position.x() = q.at("hole_position").at(0).get<double>();
  p.hole_position.y() = q.at("hole_position").at(1).get<double>();
  p.clearance = q.at("clearance").get<double>();
  return build_module(p, config);
}

}  // namespace pegsim
