#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "pegsim/rng.hpp"

namespace pegsim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

// Rigid transform. `rotation` maps local coordinates to parent coordinates
// (column-vector convention, row-major storage when serialized).
struct Pose {
  Vec3 translation = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();

  static Pose identity() { return {}; }

  // Composition: this ∘ other (apply `other` in this pose's local frame).
  Pose operator*(const Pose& other) const {
    return {translation + rotation * other.translation, rotation * other.rotation};
  }

  Vec3 apply(const Vec3& p) const { return translation + rotation * p; }

  Pose inverse() const {
    Mat3 rt = rotation.transpose();
    return {-(rt * translation), rt};
  }

  bool valid(double tol = 1e-9) const;
};

// Continuous 6-value rotation encoding: the first two columns of the rotation
// matrix, stacked column-major as [c1x, c1y, c1z, c2x, c2y, c2z].
struct Rotation6D {
  Vec6 values = (Vec6() << 1, 0, 0, 0, 1, 0).finished();
};

// Gaussian pose noise: per-axis translation sigma in meters plus axis-angle
// rotation noise (uniform random axis, normally distributed angle).
struct NoiseSpec {
  double sigma_pos = 0.0005;                  // meters
  double sigma_rot = 1.0 * M_PI / 180.0;      // radians

  static NoiseSpec none() { return {0.0, 0.0}; }
};

// Residual of R^T R = I; zero for an exactly orthonormal matrix.
double orthonormality_residual(const Mat3& r);

Rotation6D rot6d_encode(const Mat3& r);

// Gram-Schmidt decode. Throws std::invalid_argument on degenerate input
// (near-zero or parallel embedded vectors).
Mat3 rot6d_decode(const Rotation6D& v);

// a^-1 ∘ b: pose of frame_b expressed in frame_a.
Pose relative_pose(const Pose& frame_a, const Pose& frame_b);

// Frobenius norm of Ra - Rb; range [0, 2*sqrt(2)].
double orientation_distance(const Mat3& ra, const Mat3& rb);

Pose perturb_pose(const Pose& p, const NoiseSpec& noise, Rng& rng);

// Rotation about a unit axis by angle (Rodrigues).
Mat3 axis_angle(const Vec3& axis, double angle);

// Unit vector drawn uniformly from the sphere.
Vec3 random_unit_vector(Rng& rng);

// Rotation angle (radians) of the relative rotation ra^T rb.
double rotation_angle_between(const Mat3& ra, const Mat3& rb);

// Nearest orthonormal matrix (used to scrub integration drift).
Mat3 orthonormalized(const Mat3& r);

}  // namespace pegsim
