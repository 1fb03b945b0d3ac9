#include <doctest.h>

#include <cmath>
#include <set>

#include "pegsim/physics.hpp"
#include "pegsim/procgen.hpp"
#include "pegsim/rng.hpp"
#include "pegsim/sdf.hpp"

using namespace pegsim;

namespace {

ModuleParams square_params() {
  ModuleParams p;
  p.vertex_count = 4;
  p.circumradius = 0.02;
  p.aspect_ratio = 1.0;
  p.peg_height = 0.1;
  p.tapering = 0.0;
  p.hole_depth_fraction = 0.6;
  p.hole_tilt = Eigen::Vector2d(0.0, 0.0);
  p.hole_position = Eigen::Vector2d(0.0, 0.0);
  p.clearance = 0.001;
  return p;
}

Mat3 random_rotation(Rng& rng) {
  const Vec3 axis = random_unit_vector(rng);
  return axis_angle(axis, rng.uniform(-M_PI, M_PI));
}

}  // namespace

TEST_CASE("make_body: square prism inertia in closed form") {
  ModuleParams p = square_params();
  const TriMesh peg = build_peg(p);
  const RigidBody body = make_body(peg, 0.5);
  CHECK(body.mass == doctest::Approx(0.5));
  // Square cross-section of side s = r*sqrt(2), height h, about the
  // bottom-face center: Ixx = Iyy = m[(s^2 + h^2)/12 + h^2/4], Izz = m s^2/6.
  const double s2 = 2.0 * 0.02 * 0.02;
  const double h = 0.1;
  const double ixx = 0.5 * ((s2 + h * h) / 12.0 + h * h / 4.0);
  const double izz = 0.5 * s2 / 6.0;
  CHECK(body.inertia(0, 0) == doctest::Approx(ixx).epsilon(1e-12));
  CHECK(body.inertia(1, 1) == doctest::Approx(ixx).epsilon(1e-12));
  CHECK(body.inertia(2, 2) == doctest::Approx(izz).epsilon(1e-12));
  CHECK(std::abs(body.inertia(0, 1)) < 1e-15);
  CHECK(std::abs(body.inertia(0, 2)) < 1e-15);
  CHECK((body.inertia * body.inertia_inv - Mat3::Identity()).norm() < 1e-10);
}

TEST_CASE("make_body rejects open meshes and bad masses") {
  const TriMesh peg = build_peg(square_params());
  TriMesh open = peg;
  open.faces.pop_back();
  CHECK_THROWS(make_body(open, 0.5));
  CHECK_THROWS(make_body(peg, 0.0));
}

TEST_CASE("contact samples are deterministic, on-surface and complete") {
  const TriMesh peg = build_peg(square_params());
  const auto pts = sample_contact_points(peg, 256);
  CHECK(pts.size() == 256);
  const auto pts2 = sample_contact_points(peg, 256);
  REQUIRE(pts2.size() == pts.size());
  for (size_t i = 0; i < pts.size(); ++i) CHECK((pts[i] - pts2[i]).norm() == 0.0);

  // All mesh vertices included, in order.
  for (size_t i = 0; i < peg.vertices.size(); ++i)
    CHECK((pts[i] - peg.vertices[i]).norm() == 0.0);

  // Every point lies on the peg surface: for the axis-aligned prism that
  // means on a cap plane or on a side plane.
  int on_caps = 0, on_sides = 0;
  const ConvexPolygon cross = regular_polygon(4, 0.02, 1.0);
  for (const Vec3& q : pts) {
    const bool cap = std::abs(q.z()) < 1e-12 || std::abs(q.z() - 0.1) < 1e-12;
    const bool side = std::abs(cross.signed_distance(Vec2(q.x(), q.y()))) < 1e-12;
    CHECK((cap || side));
    on_caps += cap;
    on_sides += side;
  }
  CHECK(on_caps > 32);   // caps carry vertices, edge and face points
  CHECK(on_sides > 32);

  // At least one interior point per mesh edge.
  std::set<std::pair<int, int>> edges;
  for (const auto& f : peg.faces) {
    for (int k = 0; k < 3; ++k) {
      int a = f[k], b = f[(k + 1) % 3];
      if (a > b) std::swap(a, b);
      edges.insert({a, b});
    }
  }
  for (const auto& [a, b] : edges) {
    bool found = false;
    for (const Vec3& q : pts) {
      const Vec3 va = peg.vertices[a], vb = peg.vertices[b];
      const Vec3 d = vb - va;
      const double t = (q - va).dot(d) / d.squaredNorm();
      if (t > 0.01 && t < 0.99 && (q - (va + t * d)).norm() < 1e-12) {
        found = true;
        break;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("explicit contact force: spring, damper, friction cone") {
  const AssemblyModule m = build_module(square_params());
  const SdfField field = build_sdf(m);
  PhysicsConfig cfg;
  MaterialProps mat{0.6, 0.0};

  // One probe point at the body origin; peg floats away from the hole and
  // penetrates the flat plate top by 0.1 mm.
  const std::vector<Vec3> probe = {Vec3::Zero()};
  PegState st;
  st.pose.translation = Vec3(0.05, 0.0, -1e-4);

  SUBCASE("static normal force k*d") {
    std::vector<Contact> contacts;
    const Wrench w = resolve_contacts(st, field, Pose::identity(), probe, mat, cfg, &contacts);
    REQUIRE(contacts.size() == 1);
    CHECK(contacts[0].depth == doctest::Approx(1e-4).epsilon(1e-9));
    CHECK((contacts[0].normal - Vec3(0, 0, 1)).norm() < 1e-6);
    CHECK(w.force.z() == doctest::Approx(1e5 * 1e-4).epsilon(1e-6));
    CHECK(w.force.head<2>().norm() < 1e-9);
  }

  SUBCASE("approaching contact adds damping") {
    st.linear_velocity = Vec3(0, 0, -0.2);
    const Wrench w = resolve_contacts(st, field, Pose::identity(), probe, mat, cfg);
    CHECK(w.force.z() == doctest::Approx(10.0 + 50.0 * 0.2).epsilon(1e-6));
  }

  SUBCASE("separating fast: force clamps to zero") {
    st.linear_velocity = Vec3(0, 0, 0.5);
    const Wrench w = resolve_contacts(st, field, Pose::identity(), probe, mat, cfg);
    CHECK(w.force.norm() == 0.0);
  }

  SUBCASE("sliding friction obeys the cone") {
    st.linear_velocity = Vec3(0.05, 0, 0);
    const Wrench w = resolve_contacts(st, field, Pose::identity(), probe, mat, cfg);
    CHECK(w.force.z() == doctest::Approx(10.0).epsilon(1e-6));
    CHECK(w.force.x() == doctest::Approx(-0.6 * 10.0).epsilon(1e-4));
    CHECK(std::abs(w.force.y()) < 1e-9);
  }

  SUBCASE("slow slip is regularized") {
    st.linear_velocity = Vec3(5e-4, 0, 0);
    const Wrench w = resolve_contacts(st, field, Pose::identity(), probe, mat, cfg);
    CHECK(w.force.x() == doctest::Approx(-0.6 * 10.0 * 0.5).epsilon(1e-3));
  }

  SUBCASE("torque is r x f") {
    st.linear_velocity = Vec3::Zero();
    const std::vector<Vec3> off = {Vec3(0.01, 0.0, 0.0)};
    const Wrench w = resolve_contacts(st, field, Pose::identity(), off, mat, cfg);
    // Force +z at lever arm (0.01, 0, 1e-4... approx): torque about y = -0.01*fz.
    CHECK(w.torque.y() == doctest::Approx(-0.01 * w.force.z()).epsilon(1e-4));
  }
}

TEST_CASE("velocity tracking matches the discrete closed form") {
  const AssemblyModule m = build_module(square_params());
  const SdfField field = build_sdf(m);
  const RigidBody body = make_body(m.peg_mesh, 0.5);
  const auto samples = sample_contact_points(m.peg_mesh, 64);
  PhysicsConfig cfg;
  MaterialProps mat;

  PegState st;
  st.pose.translation = Vec3(0, 0, 0.2);  // free flight
  Vec6 target;
  target << 0.1, 0, 0, 0, 0, 0.5;
  step_physics(st, target, field, Pose::identity(), body, samples, mat, cfg, 4);

  // v_{k+1} = v_k + dt*kv*(vt - v_k), 4 steps from zero.
  const double a = cfg.substep_dt * cfg.velocity_gain;  // 0.3
  double v = 0.0, x = 0.0, wz = 0.0, ang = 0.0;
  for (int k = 0; k < 4; ++k) {
    v += a * (0.1 - v);
    x += cfg.substep_dt * v;
    wz += a * (0.5 - wz);
    ang += cfg.substep_dt * wz;
  }
  CHECK(st.linear_velocity.x() == doctest::Approx(v).epsilon(1e-12));
  CHECK(st.pose.translation.x() == doctest::Approx(x).epsilon(1e-12));
  CHECK(st.angular_velocity.z() == doctest::Approx(wz).epsilon(1e-12));
  CHECK(rotation_angle_between(Mat3::Identity(), st.pose.rotation) ==
        doctest::Approx(ang).epsilon(1e-9));
  CHECK(st.pose.rotation.col(2).isApprox(Vec3::UnitZ(), 1e-12));
}

TEST_CASE("zero target velocity decays free motion monotonically") {
  const AssemblyModule m = build_module(square_params());
  const SdfField field = build_sdf(m);
  const RigidBody body = make_body(m.peg_mesh, 0.5);
  const auto samples = sample_contact_points(m.peg_mesh, 64);
  PhysicsConfig cfg;
  MaterialProps mat;

  PegState st;
  st.pose.translation = Vec3(0, 0, 0.25);
  st.linear_velocity = Vec3(0.2, -0.1, 0.05);
  st.angular_velocity = Vec3(0.3, 0.2, -0.4);
  double prev_v = st.linear_velocity.norm(), prev_w = st.angular_velocity.norm();
  for (int i = 0; i < 20; ++i) {
    step_physics(st, Vec6::Zero(), field, Pose::identity(), body, samples, mat, cfg, 4);
    CHECK(st.linear_velocity.norm() < prev_v);
    CHECK(st.angular_velocity.norm() < prev_w);
    prev_v = st.linear_velocity.norm();
    prev_w = st.angular_velocity.norm();
  }
  CHECK(prev_v < 1e-5);
}

TEST_CASE("pressing onto the plate settles without instability") {
  const AssemblyModule m = build_module(square_params());
  const SdfField field = build_sdf(m);
  const RigidBody body = make_body(m.peg_mesh, 0.5);
  const auto samples = sample_contact_points(m.peg_mesh, 256);
  PhysicsConfig cfg;
  MaterialProps mat{0.5, 0.0};

  PegState st;
  st.pose.translation = Vec3(0.045, 0.0, 0.002);  // just above the plate, beside the hole
  Vec6 push;
  push << 0, 0, -0.1, 0, 0, 0;  // press down at 10 cm/s
  double max_pen = 0.0;
  for (int i = 0; i < 100; ++i) {
    const StepDiagnostics d =
        step_physics(st, push, field, Pose::identity(), body, samples, mat, cfg, 4);
    max_pen = std::max(max_pen, d.max_penetration);
  }
  // The peg should rest on the surface: tiny penetration, tiny velocity.
  CHECK(max_pen < 1e-3);
  CHECK(std::abs(st.pose.translation.z()) < 1e-3);
  CHECK(st.linear_velocity.norm() < 0.02);
  CHECK(st.pose.rotation.isApprox(Mat3::Identity(), 1e-3));
}

TEST_CASE("step_physics is deterministic") {
  const AssemblyModule m = build_module(square_params());
  const SdfField field = build_sdf(m);
  const RigidBody body = make_body(m.peg_mesh, 0.5);
  const auto samples = sample_contact_points(m.peg_mesh, 256);
  PhysicsConfig cfg;
  MaterialProps mat{0.7, 0.1};

  auto run = [&]() {
    PegState st;
    st.pose.translation = Vec3(0.01, -0.01, 0.08);
    st.pose.rotation = axis_angle(Vec3(1, 1, 0).normalized(), 0.2);
    Vec6 tgt;
    tgt << 0.02, 0.01, -0.15, 0.1, -0.05, 0.2;
    for (int i = 0; i < 60; ++i)
      step_physics(st, tgt, field, Pose::identity(), body, samples, mat, cfg, 4);
    return st;
  };
  const PegState a = run(), b = run();
  CHECK((a.pose.translation - b.pose.translation).norm() == 0.0);
  CHECK((a.pose.rotation - b.pose.rotation).norm() == 0.0);
  CHECK((a.linear_velocity - b.linear_velocity).norm() == 0.0);
}

TEST_CASE("dynamics are equivariant under a rigid module transform") {
  const AssemblyModule m = generate_module(GenConfig{}, 321);
  const SdfField field = build_sdf(m);
  const RigidBody body = make_body(m.peg_mesh, 0.5);
  const auto samples = sample_contact_points(m.peg_mesh, 256);
  PhysicsConfig cfg;
  MaterialProps mat{0.4, 0.0};
  Rng rng(31);
  const Pose g{Vec3(0.3, -0.2, 0.5), random_rotation(rng)};

  PegState st;
  st.pose.translation = m.entrance_frame.translation + Vec3(0.002, -0.001, 0.03);
  st.pose.rotation = m.canonical_insert_rotation * axis_angle(Vec3::UnitX(), 0.1);
  Vec6 tgt;
  tgt << 0.01, 0.005, -0.12, 0.05, 0.0, 0.1;

  PegState st_g;
  st_g.pose = g * st.pose;
  st_g.linear_velocity = g.rotation * st.linear_velocity;
  st_g.angular_velocity = g.rotation * st.angular_velocity;
  Vec6 tgt_g;
  tgt_g.head<3>() = g.rotation * tgt.head<3>();
  tgt_g.tail<3>() = g.rotation * tgt.tail<3>();

  for (int i = 0; i < 50; ++i) {
    step_physics(st, tgt, field, Pose::identity(), body, samples, mat, cfg, 4);
    step_physics(st_g, tgt_g, field, g, body, samples, mat, cfg, 4);
  }
  const Pose mapped = g * st.pose;
  CHECK((mapped.translation - st_g.pose.translation).norm() < 1e-6);
  CHECK((mapped.rotation - st_g.pose.rotation).norm() < 1e-6);
  CHECK((g.rotation * st.linear_velocity - st_g.linear_velocity).norm() < 1e-6);
}

TEST_CASE("hard speed clamps bound the state") {
  const AssemblyModule m = build_module(square_params());
  const SdfField field = build_sdf(m);
  const RigidBody body = make_body(m.peg_mesh, 0.5);
  const auto samples = sample_contact_points(m.peg_mesh, 64);
  PhysicsConfig cfg;
  MaterialProps mat;

  PegState st;
  st.pose.translation = Vec3(0, 0, 0.2);
  st.linear_velocity = Vec3(5.0, 0, 0);  // beyond the clamp
  const StepDiagnostics d =
      step_physics(st, Vec6::Zero(), field, Pose::identity(), body, samples, mat, cfg, 1);
  CHECK(d.velocity_clamped);
  CHECK(st.linear_velocity.norm() <= cfg.max_linear_speed + 1e-12);
}

TEST_CASE("divergence raises with the last valid state attached") {
  const AssemblyModule m = build_module(square_params());
  const SdfField field = build_sdf(m);
  const RigidBody body = make_body(m.peg_mesh, 0.5);
  const auto samples = sample_contact_points(m.peg_mesh, 64);
  PhysicsConfig cfg;
  MaterialProps mat;

  // Deep inside the material: beyond the tunnelling threshold.
  PegState st;
  st.pose.translation = Vec3(0.05, 0.0, -0.03);
  try {
    step_physics(st, Vec6::Zero(), field, Pose::identity(), body, samples, mat, cfg, 4);
    FAIL("expected SimulationDiverged");
  } catch (const SimulationDiverged& e) {
    CHECK((e.last_state.pose.translation - Vec3(0.05, 0.0, -0.03)).norm() == 0.0);
  }

  // Non-finite input velocity.
  PegState bad;
  bad.pose.translation = Vec3(0, 0, 0.2);
  Vec6 nan_target = Vec6::Constant(std::nan(""));
  CHECK_THROWS_AS(
      step_physics(bad, nan_target, field, Pose::identity(), body, samples, mat, cfg, 1),
      SimulationDiverged);
}
