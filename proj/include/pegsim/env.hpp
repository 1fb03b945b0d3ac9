#pragma once

#include <cstdint>
#include <optional>

#include "pegsim/physics.hpp"
#include "pegsim/procgen.hpp"
#include "pegsim/rng.hpp"
#include "pegsim/sdf.hpp"
#include "pegsim/spatial.hpp"

namespace pegsim {

inline constexpr int kObservationDim = 18;
inline constexpr int kActionDim = 6;

using ObsVec = Eigen::Matrix<double, kObservationDim, 1>;
using ActionVec = Vec6;  // [linear x,y,z, angular x,y,z] in [-1, 1]

enum class EpisodeStatus { running, success, below_surface, timeout };

const char* to_string(EpisodeStatus status);

struct EnvConfig {
  int max_steps = 500;
  double control_hz = 50.0;

  // Spawn distribution; side and tilt widen linearly with curriculum progress.
  double spawn_side_min = 0.05, spawn_side_max = 0.50;    // square side, m
  double spawn_height_min = 0.10, spawn_height_max = 0.30;  // above the plate, m
  double spawn_tilt_min = 5.0 * M_PI / 180.0;
  double spawn_tilt_max = 45.0 * M_PI / 180.0;
  int spawn_attempts = 100;
  double spawn_clearance = 0.002;  // required SDF margin at spawn, m

  // Per-episode material ranges.
  double friction_min = 0.2, friction_max = 1.0;
  double restitution_min = 0.0, restitution_max = 0.3;

  // Sensor / actuation noise. Command noise uses the same sigmas scaled by
  // control_hz (a position-level error applied over one control period).
  NoiseSpec observation_noise{};
  NoiseSpec command_noise{};

  double max_linear_velocity = 0.25;         // m/s at |action| = 1
  double max_angular_velocity = M_PI / 2.0;  // rad/s at |action| = 1

  double reward_pos_weight = 0.8;
  double reward_rot_weight = 0.2;

  double success_pos_tol = 0.0025;                 // m
  double success_axis_tol = 5.0 * M_PI / 180.0;    // rad
  double below_surface_depth = 0.001;              // m below the plate top
};

struct StepResult {
  ObsVec observation = ObsVec::Zero();
  double reward = 0.0;
  EpisodeStatus status = EpisodeStatus::running;
  bool diverged = false;
  StepDiagnostics physics;
};

// Single peg-in-hole episode environment. The module plate is fixed at the
// world origin; the agent commands peg velocities and sees only noisy peg
// poses relative to the hole entrance and hole bottom frames.
class Env {
 public:
  Env(AssemblyModule module, EnvConfig config = {}, PhysicsConfig physics = {},
      uint64_t seed = 0);

  // Starts a new episode. `curriculum` in [0,1] scales the spawn spread.
  ObsVec reset(double curriculum = 1.0);
  StepResult step(const ActionVec& action);

  // Noisy observation of the current state (consumes randomness).
  ObsVec observe();
  // Noise-free observation (tests, diagnostics).
  ObsVec observe_clean() const;

  // Commanded world velocities for an action, before command noise.
  Vec6 scale_action(const ActionVec& action) const;

  // Potential in [-inf, 1]: 1 at the seated goal pose.
  double potential() const;

  bool success_reached() const;
  bool below_surface() const;

  const AssemblyModule& module() const { return module_; }
  const SdfField& sdf() const { return sdf_; }
  const EnvConfig& config() const { return config_; }
  const PhysicsConfig& physics_config() const { return physics_; }
  const MaterialProps& material() const { return material_; }
  const PegState& state() const { return state_; }
  EpisodeStatus status() const { return status_; }
  int steps() const { return steps_; }
  int substeps_per_action() const { return substeps_; }

  // Test/controller hook: place the peg manually (does not reset counters).
  void set_state(const PegState& state);

 private:
  ObsVec observation_of(const Pose& peg_pose, const NoiseSpec& noise, Rng* rng) const;

  AssemblyModule module_;
  SdfField sdf_;
  EnvConfig config_;
  PhysicsConfig physics_;
  RigidBody body_;
  std::vector<Vec3> samples_;
  Rng rng_;
  int substeps_ = 4;

  PegState state_;
  MaterialProps material_;
  EpisodeStatus status_ = EpisodeStatus::timeout;  // invalid until reset()
  int steps_ = 0;
  double p0_ = 1.0, r0_ = 1.0;  // initial distances, reward normalizers
  double prev_potential_ = 0.0;
};

}  // namespace pegsim
