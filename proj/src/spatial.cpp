#include "pegsim/spatial.hpp"

#include <cmath>
#include <stdexcept>

namespace pegsim {

double orthonormality_residual(const Mat3& r) {
  return (r.transpose() * r - Mat3::Identity()).norm();
}

bool Pose::valid(double tol) const {
  if (!translation.allFinite() || !rotation.allFinite()) return false;
  if (orthonormality_residual(rotation) > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

Rotation6D rot6d_encode(const Mat3& r) {
  if (orthonormality_residual(r) > 1e-6) {
    throw std::invalid_argument("rot6d_encode: matrix is not orthonormal");
  }
  Rotation6D out;
  out.values << r(0, 0), r(1, 0), r(2, 0), r(0, 1), r(1, 1), r(2, 1);
  return out;
}

Mat3 rot6d_decode(const Rotation6D& v) {
  Vec3 c1 = v.values.head<3>();
  Vec3 c2 = v.values.tail<3>();
  const double n1 = c1.norm();
  if (n1 < 1e-9) {
    throw std::invalid_argument("rot6d_decode: degenerate encoding (first vector near zero)");
  }
  c1 /= n1;
  c2 -= c1.dot(c2) * c1;
  const double n2 = c2.norm();
  if (n2 < 1e-9) {
    throw std::invalid_argument("rot6d_decode: degenerate encoding (vectors near parallel)");
  }
  c2 /= n2;
  Mat3 r;
  r.col(0) = c1;
  r.col(1) = c2;
  r.col(2) = c1.cross(c2);
  return r;
}

Pose relative_pose(const Pose& frame_a, const Pose& frame_b) {
  return frame_a.inverse() * frame_b;
}

double orientation_distance(const Mat3& ra, const Mat3& rb) {
  return (ra - rb).norm();
}

Mat3 axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

Vec3 random_unit_vector(Rng& rng) {
  // Rejection sampling from the unit ball, then normalize.
  while (true) {
    Vec3 v(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    const double n2 = v.squaredNorm();
    if (n2 > 1e-12 && n2 <= 1.0) return v / std::sqrt(n2);
  }
}

Pose perturb_pose(const Pose& p, const NoiseSpec& noise, Rng& rng) {
  Pose out = p;
  if (noise.sigma_pos > 0.0) {
    out.translation.x() += rng.normal(0.0, noise.sigma_pos);
    out.translation.y() += rng.normal(0.0, noise.sigma_pos);
    out.translation.z() += rng.normal(0.0, noise.sigma_pos);
  }
  if (noise.sigma_rot > 0.0) {
    const Vec3 axis = random_unit_vector(rng);
    const double angle = rng.normal(0.0, noise.sigma_rot);
    out.rotation = axis_angle(axis, angle) * out.rotation;
  }
  return out;
}

double rotation_angle_between(const Mat3& ra, const Mat3& rb) {
  const double c = ((ra.transpose() * rb).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

Mat3 orthonormalized(const Mat3& r) {
  Vec3 c1 = r.col(0).normalized();
  Vec3 c2 = (r.col(1) - c1.dot(r.col(1)) * c1).normalized();
  Mat3 out;
  out.col(0) = c1;
  out.col(1) = c2;
  out.col(2) = c1.cross(c2);
  return out;
}

}  // namespace pegsim
