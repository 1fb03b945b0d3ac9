#include "pegsim/mesh.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace pegsim {

namespace {

double signed_volume(const TriMesh& mesh) {
  double vol = 0.0;
  for (const auto& [a, b, c] : mesh.faces)
    vol += mesh.vertices[a].dot(mesh.vertices[b].cross(mesh.vertices[c])) / 6.0;
  return vol;
}

}  // namespace

Vec3 TriMesh::face_normal(int f) const {
  const auto& [a, b, c] = faces[f];
  return (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]).normalized();
}

double TriMesh::face_area(int f) const {
  const auto& [a, b, c] = faces[f];
  return 0.5 * (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]).norm();
}

double TriMesh::surface_area() const {
  double s = 0.0;
  for (int f = 0; f < static_cast<int>(faces.size()); ++f) s += face_area(f);
  return s;
}

MassProperties compute_mass_properties(const TriMesh& mesh) {
  std::string why;
  if (!is_watertight(mesh, &why))
    throw std::invalid_argument("compute_mass_properties: " + why);
  // Signed tetrahedron decomposition against the origin.
  double vol = 0.0;
  Vec3 c = Vec3::Zero();
  double ixx = 0, iyy = 0, izz = 0, ixy = 0, ixz = 0, iyz = 0;
  for (const auto& [ia, ib, ic] : mesh.faces) {
    const Vec3& a = mesh.vertices[ia];
    const Vec3& b = mesh.vertices[ib];
    const Vec3& d = mesh.vertices[ic];
    const double v = a.dot(b.cross(d)) / 6.0;
    vol += v;
    c += v * (a + b + d) / 4.0;
    // Second moments of the tetrahedron (origin, a, b, d), scaled by 6V.
    auto sq = [&](int i) {
      return a[i] * a[i] + b[i] * b[i] + d[i] * d[i] + a[i] * b[i] + a[i] * d[i] + b[i] * d[i];
    };
    auto mixed = [&](int i, int j) {
      return 2 * a[i] * a[j] + 2 * b[i] * b[j] + 2 * d[i] * d[j] + a[i] * b[j] + b[i] * a[j] +
             a[i] * d[j] + d[i] * a[j] + b[i] * d[j] + d[i] * b[j];
    };
    const double k = 6.0 * v / 60.0;
    ixx += k * (sq(1) + sq(2));
    iyy += k * (sq(0) + sq(2));
    izz += k * (sq(0) + sq(1));
    ixy += k * mixed(0, 1) / 2.0;
    ixz += k * mixed(0, 2) / 2.0;
    iyz += k * mixed(1, 2) / 2.0;
  }
  MassProperties out;
  out.volume = vol;
  out.centroid = (vol != 0.0) ? Vec3(c / vol) : Vec3::Zero();
  out.inertia << ixx, -ixy, -ixz, -ixy, iyy, -iyz, -ixz, -iyz, izz;
  return out;
}

bool is_watertight(const TriMesh& mesh, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (mesh.faces.empty()) return fail("no faces");
  std::map<std::pair<int, int>, int> edge_count;
  for (const auto& [a, b, c] : mesh.faces) {
    if (a == b || b == c || a == c) return fail("degenerate face");
    const int idx[3] = {a, b, c};
    for (int k = 0; k < 3; ++k) {
      const int u = idx[k], v = idx[(k + 1) % 3];
      if (u < 0 || v < 0 || u >= static_cast<int>(mesh.vertices.size()) ||
          v >= static_cast<int>(mesh.vertices.size())) {
        return fail("face references missing vertex");
      }
      edge_count[{u, v}]++;
    }
  }
  for (const auto& [edge, count] : edge_count) {
    auto rev = edge_count.find({edge.second, edge.first});
    if (count != 1 || rev == edge_count.end() || rev->second != 1) {
      return fail("edge not shared by exactly two opposite-wound faces");
    }
  }
  if (signed_volume(mesh) <= 0.0) return fail("non-positive volume");
  return true;
}

bool is_convex(const TriMesh& mesh, double tol) {
  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
    const Vec3 n = mesh.face_normal(f);
    const double d = n.dot(mesh.vertices[mesh.faces[f][0]]);
    for (const Vec3& v : mesh.vertices) {
      if (n.dot(v) - d > tol) return false;
    }
  }
  return true;
}

void write_obj(const TriMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_obj: cannot open " + path.string());
  out << "# pegsim mesh, units meters\n";
  char buf[128];
  for (const Vec3& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  for (const auto& [a, b, c] : mesh.faces) {
    out << "f " << a + 1 << ' ' << b + 1 << ' ' << c + 1 << '\n';
  }
  if (!out.good()) throw std::runtime_error("write_obj: write failed for " + path.string());
}

TriMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_obj: cannot open " + path.string());
  TriMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    if (tag == "v") {
      Vec3 v;
      ss >> v.x() >> v.y() >> v.z();
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::array<int, 3> f{};
      ss >> f[0] >> f[1] >> f[2];
      for (int& i : f) --i;
      mesh.faces.push_back(f);
    }
  }
  return mesh;
}

}  // namespace pegsim
