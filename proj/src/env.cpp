#include "pegsim/env.hpp"

#include <cmath>
#include <stdexcept>

namespace pegsim {

namespace {

double lerp(double a, double b, double t) { return a + (b - a) * t; }

}  // namespace

const char* to_string(EpisodeStatus status) {
  switch (status) {
    case EpisodeStatus::running: return "running";
    case EpisodeStatus::success: return "success";
    case EpisodeStatus::below_surface: return "below_surface";
    case EpisodeStatus::timeout: return "timeout";
  }
  return "unknown";
}

Env::Env(AssemblyModule module, EnvConfig config, PhysicsConfig physics, uint64_t seed)
    : module_(std::move(module)),
      sdf_(build_sdf(module_)),
      config_(config),
      physics_(physics),
      body_(make_body(module_.peg_mesh, physics.peg_mass)),
      samples_(sample_contact_points(module_.peg_mesh, physics.contact_samples)),
      rng_(seed) {
  const double ratio = 1.0 / (config_.control_hz * physics_.substep_dt);
  substeps_ = static_cast<int>(std::lround(ratio));
  if (substeps_ < 1 || std::abs(ratio - substeps_) > 1e-9)
    throw std::invalid_argument("control period must be an integer number of physics substeps");
}

ObsVec Env::reset(double curriculum) {
  const double c = std::clamp(curriculum, 0.0, 1.0);
  material_.friction = rng_.uniform(config_.friction_min, config_.friction_max);
  material_.restitution = rng_.uniform(config_.restitution_min, config_.restitution_max);

  const double side = lerp(config_.spawn_side_min, config_.spawn_side_max, c);
  const double tilt_limit = lerp(config_.spawn_tilt_min, config_.spawn_tilt_max, c);
  const Vec3 entrance = module_.entrance_frame.translation;
  const Mat3& canonical = module_.canonical_insert_rotation;

  bool placed = false;
  for (int attempt = 0; attempt < config_.spawn_attempts && !placed; ++attempt) {
    const double dx = rng_.uniform(-0.5 * side, 0.5 * side);
    const double dy = rng_.uniform(-0.5 * side, 0.5 * side);
    const double h = rng_.uniform(config_.spawn_height_min, config_.spawn_height_max);
    const double tilt = rng_.uniform(0.0, tilt_limit);
    const double azimuth = rng_.uniform(0.0, 2.0 * M_PI);
    const double yaw = rng_.uniform(0.0, 2.0 * M_PI);

    PegState candidate;
    candidate.pose.translation = Vec3(entrance.x() + dx, entrance.y() + dy, h);
    const Vec3 tilt_axis =
        canonical * Vec3(std::cos(azimuth), std::sin(azimuth), 0.0);
    candidate.pose.rotation =
        axis_angle(tilt_axis, tilt) * canonical * axis_angle(Vec3::UnitZ(), yaw);

    bool clear = true;
    for (const Vec3& s : samples_) {
      if (sdf_.value(candidate.pose.apply(s)) < config_.spawn_clearance) {
        clear = false;
        break;
      }
    }
    if (clear) {
      state_ = candidate;
      placed = true;
    }
  }
  if (!placed) throw std::runtime_error("reset: no collision-free spawn pose found");

  steps_ = 0;
  status_ = EpisodeStatus::running;
  const Pose in_bottom = relative_pose(module_.bottom_frame, state_.pose);
  p0_ = std::max(in_bottom.translation.norm(), 1e-6);
  r0_ = std::max(orientation_distance(state_.pose.rotation, canonical), 1e-6);
  prev_potential_ = potential();
  return observe();
}

double Env::potential() const {
  const Pose in_bottom = relative_pose(module_.bottom_frame, state_.pose);
  const double p = in_bottom.translation.norm();
  const double r = orientation_distance(state_.pose.rotation, module_.canonical_insert_rotation);
  return 1.0 - (config_.reward_pos_weight * p / p0_ + config_.reward_rot_weight * r / r0_);
}

bool Env::success_reached() const {
  const Pose in_bottom = relative_pose(module_.bottom_frame, state_.pose);
  if (in_bottom.translation.norm() > config_.success_pos_tol) return false;
  const Vec3 peg_axis = state_.pose.rotation.col(2);
  const Vec3 hole_axis = module_.canonical_insert_rotation.col(2);
  const double angle = std::acos(std::clamp(peg_axis.dot(hole_axis), -1.0, 1.0));
  return angle <= config_.success_axis_tol;
}

bool Env::below_surface() const {
  for (const Vec3& s : samples_) {
    const Vec3 x = state_.pose.apply(s);
    if (x.z() > -config_.below_surface_depth) continue;
    // Lateral slack of one clearance around the cavity column, so wall-contact
    // penetration while descending in the hole is not mistaken for an escape
    // under the plate.
    if (!sdf_.in_cavity_column(x, module_.params.clearance)) return true;
  }
  return false;
}

Vec6 Env::scale_action(const ActionVec& action) const {
  const ActionVec a = action.cwiseMax(-1.0).cwiseMin(1.0);
  Vec6 target;
  target.head<3>() = a.head<3>() * config_.max_linear_velocity;
  target.tail<3>() = a.tail<3>() * config_.max_angular_velocity;
  return target;
}

ObsVec Env::observation_of(const Pose& peg_pose, const NoiseSpec& noise, Rng* rng) const {
  Pose in_entrance = relative_pose(module_.entrance_frame, peg_pose);
  Pose in_bottom = relative_pose(module_.bottom_frame, peg_pose);
  if (rng) {
    in_entrance = perturb_pose(in_entrance, noise, *rng);
    in_bottom = perturb_pose(in_bottom, noise, *rng);
  }
  ObsVec obs;
  obs.segment<3>(0) = in_entrance.translation;
  obs.segment<6>(3) = rot6d_encode(in_entrance.rotation).values;
  obs.segment<3>(9) = in_bottom.translation;
  obs.segment<6>(12) = rot6d_encode(in_bottom.rotation).values;
  return obs;
}

ObsVec Env::observe() { return observation_of(state_.pose, config_.observation_noise, &rng_); }

ObsVec Env::observe_clean() const {
  return observation_of(state_.pose, NoiseSpec::none(), nullptr);
}

StepResult Env::step(const ActionVec& action) {
  if (status_ != EpisodeStatus::running)
    throw std::logic_error("step() called on a finished episode");

  Vec6 target = scale_action(action);
  // Command noise: a pose-level error applied over one control period.
  const double sv = config_.command_noise.sigma_pos * config_.control_hz;
  const double sw = config_.command_noise.sigma_rot * config_.control_hz;
  for (int i = 0; i < 3; ++i) {
    target[i] += rng_.normal(0.0, sv);
    target[3 + i] += rng_.normal(0.0, sw);
  }

  StepResult result;
  try {
    result.physics = step_physics(state_, target, sdf_, Pose::identity(), body_, samples_,
                                  material_, physics_, substeps_);
  } catch (const SimulationDiverged& e) {
    state_ = e.last_state;
    result.diverged = true;
  }
  ++steps_;

  const double pot = potential();
  result.reward = pot - prev_potential_;
  prev_potential_ = pot;

  if (success_reached()) {
    status_ = EpisodeStatus::success;
  } else if (result.diverged || below_surface()) {
    status_ = EpisodeStatus::below_surface;
    result.reward = -1.0;
  } else if (steps_ >= config_.max_steps) {
    status_ = EpisodeStatus::timeout;
  }
  result.status = status_;
  result.observation = observe();
  return result;
}

void Env::set_state(const PegState& state) { state_ = state; }

}  // namespace pegsim
