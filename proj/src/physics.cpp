#include "pegsim/physics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace pegsim {

namespace {

double halton(int index, int base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= base;
    r += f * (index % base);
    index /= base;
  }
  return r;
}

struct ContactWork {
  Vec3 r;       // world lever arm from the reference point
  Vec3 normal;  // world
  double depth = 0.0;
  double jn = 0.0;  // accumulated normal impulse
  Vec3 jt = Vec3::Zero();
};

double effective_mass(const RigidBody& body, const Mat3& inertia_inv_w, const Vec3& r,
                      const Vec3& dir) {
  const Vec3 rxd = r.cross(dir);
  return 1.0 / (1.0 / body.mass + rxd.dot(inertia_inv_w * rxd));
}

}  // namespace

RigidBody make_body(const TriMesh& mesh, double mass) {
  std::string why;
  if (!is_watertight(mesh, &why))
    throw std::invalid_argument("make_body: mesh not watertight: " + why);
  const MassProperties mp = compute_mass_properties(mesh);
  if (mp.volume <= 0.0) throw std::invalid_argument("make_body: non-positive volume");
  if (mass <= 0.0) throw std::invalid_argument("make_body: non-positive mass");
  RigidBody body;
  body.mass = mass;
  const double density = mass / mp.volume;
  body.inertia = density * mp.inertia;  // about the mesh origin (reference point)
  body.inertia_inv = body.inertia.inverse();
  return body;
}

std::vector<Vec3> sample_contact_points(const TriMesh& mesh, int count) {
  std::vector<Vec3> points = mesh.vertices;

  // Unique undirected edges, ordered by (min,max) vertex index.
  std::map<std::pair<int, int>, bool> edges;
  for (const auto& face : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      int a = face[k], b = face[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      edges[{a, b}] = true;
    }
  }
  const int nv = static_cast<int>(mesh.vertices.size());
  const int ne = static_cast<int>(edges.size());
  const int budget = std::max(0, count - nv);
  // Half of the spare budget to edges, at least one point per edge.
  const int edge_points = std::max(ne, std::min(budget, (budget + 1) / 2));
  int base = edge_points / ne, extra = edge_points % ne;
  int ei = 0;
  for (const auto& [e, _] : edges) {
    const int k = base + (ei++ < extra ? 1 : 0);
    const Vec3& a = mesh.vertices[e.first];
    const Vec3& b = mesh.vertices[e.second];
    for (int j = 0; j < k; ++j) {
      const double t = (j + 1.0) / (k + 1.0);
      points.push_back(a + t * (b - a));
    }
  }

  int remaining = count - static_cast<int>(points.size());
  if (remaining > 0) {
    const int nf = static_cast<int>(mesh.faces.size());
    std::vector<double> area(nf);
    double total = 0.0;
    for (int i = 0; i < nf; ++i) total += area[i] = mesh.face_area(i);
    // Largest-remainder apportionment of the leftover points by face area.
    std::vector<int> alloc(nf, 0);
    std::vector<std::pair<double, int>> frac(nf);
    int assigned = 0;
    for (int i = 0; i < nf; ++i) {
      const double share = remaining * area[i] / total;
      alloc[i] = static_cast<int>(share);
      assigned += alloc[i];
      frac[i] = {share - alloc[i], i};
    }
    std::sort(frac.rbegin(), frac.rend());
    for (int k = 0; k < remaining - assigned; ++k) alloc[frac[k].second] += 1;
    for (int i = 0; i < nf; ++i) {
      const Vec3& a = mesh.vertices[mesh.faces[i][0]];
      const Vec3& b = mesh.vertices[mesh.faces[i][1]];
      const Vec3& c = mesh.vertices[mesh.faces[i][2]];
      for (int j = 0; j < alloc[i]; ++j) {
        double u = halton(j + 1, 2), v = halton(j + 1, 3);
        if (u + v > 1.0) {
          u = 1.0 - u;
          v = 1.0 - v;
        }
        points.push_back(a + u * (b - a) + v * (c - a));
      }
    }
  }
  return points;
}

Wrench resolve_contacts(const PegState& state, const SdfField& field, const Pose& module_pose,
                        std::span<const Vec3> samples, const MaterialProps& material,
                        const PhysicsConfig& config, std::vector<Contact>* contacts) {
  const Pose plate_from_world = module_pose.inverse();
  Wrench w;
  if (contacts) contacts->clear();
  for (const Vec3& s : samples) {
    const Vec3 x = state.pose.apply(s);
    const Vec3 local = plate_from_world.apply(x);
    const double phi = field.penetration(local);
    if (phi >= 0.0) continue;
    const Vec3 n = (module_pose.rotation * field.gradient(local)).normalized();
    const double depth = -phi;
    const Vec3 r = x - state.pose.translation;
    const Vec3 v_pt = state.linear_velocity + state.angular_velocity.cross(r);
    const double vn = n.dot(v_pt);
    const double fn =
        std::max(0.0, config.contact_stiffness * depth - config.contact_damping * vn);
    const Vec3 vt = v_pt - vn * n;
    const Vec3 ft =
        -material.friction * fn * vt / std::max(vt.norm(), config.friction_regularization);
    const Vec3 f = fn * n + ft;
    w.force += f;
    w.torque += r.cross(f);
    if (contacts) contacts->push_back({x, n, depth});
  }
  return w;
}

StepDiagnostics step_physics(PegState& state, const Vec6& target_velocity,
                             const SdfField& field, const Pose& module_pose,
                             const RigidBody& body, std::span<const Vec3> samples,
                             const MaterialProps& material, const PhysicsConfig& config,
                             int substeps) {
  const Pose plate_from_world = module_pose.inverse();
  const double dt = config.substep_dt;
  const double kv = config.velocity_gain;
  const Vec3 v_target = target_velocity.head<3>();
  const Vec3 w_target = target_velocity.tail<3>();
  // Effective damping absorbs restitution: bouncier materials dissipate less.
  const double c_eff = config.contact_damping * (1.0 - material.restitution);
  const double beta = config.contact_stiffness * dt + c_eff;

  double bound_radius = 0.0;
  for (const Vec3& s : samples) bound_radius = std::max(bound_radius, s.norm());

  StepDiagnostics diag;
  for (int step = 0; step < substeps; ++step) {
    const PegState last = state;
    Vec3 v = state.linear_velocity + dt * kv * (v_target - state.linear_velocity);
    Vec3 w = state.angular_velocity + dt * kv * (w_target - state.angular_velocity);

    // Narrow phase only when the bounding sphere can touch material.
    std::vector<ContactWork> contacts;
    const double center_phi = field.value(plate_from_world.apply(state.pose.translation));
    if (center_phi <= bound_radius + config.broadphase_margin) {
      for (const Vec3& s : samples) {
        const Vec3 x = state.pose.apply(s);
        const Vec3 local = plate_from_world.apply(x);
        const double phi = field.penetration(local);
        if (phi >= 0.0) continue;
        ContactWork c;
        c.r = x - state.pose.translation;
        c.normal = (module_pose.rotation * field.gradient(local)).normalized();
        c.depth = -phi;
        contacts.push_back(c);
        diag.max_penetration = std::max(diag.max_penetration, c.depth);
      }
    }
    diag.contact_count = static_cast<int>(contacts.size());
    if (diag.max_penetration > config.divergence_penetration)
      throw SimulationDiverged("contact penetration exceeds tunnelling threshold", last);

    if (!contacts.empty()) {
      const Mat3 inertia_inv_w =
          state.pose.rotation * body.inertia_inv * state.pose.rotation.transpose();
      for (int it = 0; it < config.solver_iterations; ++it) {
        for (ContactWork& c : contacts) {
          // Implicit spring-damper along the normal, solved for this contact
          // with the others frozen: impulse J satisfies
          //   J = dt * (k*depth - beta/dt * v_n(J))   with v_n linear in J.
          const double m_n = effective_mass(body, inertia_inv_w, c.r, c.normal);
          const double vn = c.normal.dot(v + w.cross(c.r));
          double jn_new = (dt * config.contact_stiffness * c.depth +
                           dt * beta * (c.jn / m_n - vn)) /
                          (1.0 + dt * beta / m_n);
          jn_new = std::max(0.0, jn_new);
          const double djn = jn_new - c.jn;
          c.jn = jn_new;
          v += (djn / body.mass) * c.normal;
          w += inertia_inv_w * c.r.cross(djn * c.normal);

          // Regularized Coulomb friction, capped so it cannot reverse slip.
          const Vec3 v_pt = v + w.cross(c.r);
          const Vec3 vt = v_pt - c.normal.dot(v_pt) * c.normal;
          const double speed = vt.norm();
          Vec3 jt_new = Vec3::Zero();
          if (speed > 1e-12) {
            const Vec3 dir = vt / speed;
            const double m_t = effective_mass(body, inertia_inv_w, c.r, dir);
            const double cap = material.friction * c.jn *
                               std::min(1.0, speed / config.friction_regularization);
            jt_new = -std::min(cap, m_t * speed) * dir;
          }
          const Vec3 djt = jt_new - c.jt;
          c.jt = jt_new;
          v += djt / body.mass;
          w += inertia_inv_w * c.r.cross(djt);
        }
      }
    }

    if (v.norm() > config.max_linear_speed) {
      v *= config.max_linear_speed / v.norm();
      diag.velocity_clamped = true;
    }
    if (w.norm() > config.max_angular_speed) {
      w *= config.max_angular_speed / w.norm();
      diag.velocity_clamped = true;
    }
    if (!v.allFinite() || !w.allFinite())
      throw SimulationDiverged("non-finite velocity", last);

    state.linear_velocity = v;
    state.angular_velocity = w;
    state.pose.translation += dt * v;
    const double wn = w.norm();
    if (wn > 1e-12) {
      state.pose.rotation =
          Eigen::AngleAxisd(wn * dt, w / wn).toRotationMatrix() * state.pose.rotation;
    }
    state.pose.rotation = orthonormalized(state.pose.rotation);
    if (!state.pose.translation.allFinite())
      throw SimulationDiverged("non-finite position", last);
  }
  return diag;
}

}  // namespace pegsim
