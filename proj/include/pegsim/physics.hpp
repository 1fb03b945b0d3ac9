#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "pegsim/mesh.hpp"
#include "pegsim/sdf.hpp"
#include "pegsim/spatial.hpp"

namespace pegsim {

struct PhysicsConfig {
  double substep_dt = 1.0 / 200.0;
  double peg_mass = 0.5;                  // kg
  double velocity_gain = 60.0;            // 1/s, velocity tracking bandwidth
  double contact_stiffness = 1e5;         // N/m
  double contact_damping = 50.0;          // N s/m
  double friction_regularization = 1e-3;  // m/s, below this friction is viscous
  int contact_samples = 256;
  int solver_iterations = 10;
  // Hard safety clamps, 4x the commanded-velocity limits.
  double max_linear_speed = 1.0;        // m/s
  double max_angular_speed = 2 * M_PI;  // rad/s
  double broadphase_margin = 0.005;     // m
  double divergence_penetration = 0.02;  // m, deeper than this means tunnelling
};

struct MaterialProps {
  double friction = 0.6;
  double restitution = 0.0;
};

// Peg state. The reference point is the bottom-face center (the peg mesh
// origin); linear and angular dynamics are decoupled about it.
struct PegState {
  Pose pose;  // body -> world
  Vec3 linear_velocity = Vec3::Zero();
  Vec3 angular_velocity = Vec3::Zero();
};

struct RigidBody {
  double mass = 0.0;
  Mat3 inertia = Mat3::Identity();      // body frame, about the reference point
  Mat3 inertia_inv = Mat3::Identity();
};

struct Contact {
  Vec3 point;   // world
  Vec3 normal;  // world, out of the plate material
  double depth = 0.0;
};

struct Wrench {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();  // about the peg reference point
};

struct StepDiagnostics {
  int contact_count = 0;       // contacts in the last substep
  double max_penetration = 0.0;
  bool velocity_clamped = false;
};

class SimulationDiverged : public std::runtime_error {
 public:
  SimulationDiverged(const std::string& what, PegState last)
      : std::runtime_error(what), last_state(std::move(last)) {}
  PegState last_state;
};

// Uniform-density rigid body of the given total mass; throws if the mesh is
// not watertight or has non-positive volume.
RigidBody make_body(const TriMesh& mesh, double mass);

// Deterministic surface sample set in body coordinates: all vertices, at
// least one interior point per mesh edge, remaining budget spread over faces
// proportionally to area. Returns at least vertices+edges points even if
// `count` is smaller.
std::vector<Vec3> sample_contact_points(const TriMesh& mesh, int count);

// Explicit penalty contact model: for each penetrating sample point applies
// f_n = max(0, k_n * depth - c_n * v_n) along the SDF normal plus regularized
// Coulomb friction. `module_pose` maps plate coordinates into the world.
Wrench resolve_contacts(const PegState& state, const SdfField& field, const Pose& module_pose,
                        std::span<const Vec3> samples, const MaterialProps& material,
                        const PhysicsConfig& config, std::vector<Contact>* contacts = nullptr);

// Advances the state by `substeps` semi-implicit Euler substeps driven by a
// velocity-tracking controller toward `target_velocity` ([linear; angular]).
// Contacts use the same spring-damper law as resolve_contacts but solved
// implicitly per contact (Gauss-Seidel over accumulated impulses) so the
// stiff penalty stays stable at the nominal timestep. Throws
// SimulationDiverged (carrying the last valid state) on non-finite state or
// tunnelling-deep penetration.
StepDiagnostics step_physics(PegState& state, const Vec6& target_velocity,
                             const SdfField& field, const Pose& module_pose,
                             const RigidBody& body, std::span<const Vec3> samples,
                             const MaterialProps& material, const PhysicsConfig& config,
                             int substeps);

}  // namespace pegsim
