#pragma once

// Rigid-body primitives shared by the whole testbed.
//
// Vectors are Eigen types. Quaternions use Eigen's storage, which is scalar-last
// (x, y, z, w); every Pose canonicalizes its rotation to unit norm and w >= 0.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace isru {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

/// Unit norm, non-negative scalar part.
inline Quat canonical(Quat q) {
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q;
}

inline Quat quat_from_rpy(double roll, double pitch, double yaw) {
  return canonical(Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
                        Eigen::AngleAxisd(pitch, Vec3::UnitY()) *
                        Eigen::AngleAxisd(roll, Vec3::UnitX())));
}

inline Quat quat_from_axis_angle(const Vec3& axis, double angle) {
  return canonical(Quat(Eigen::AngleAxisd(angle, axis.normalized())));
}

/// Rotation vector (axis * angle, angle in [0, pi]) of a unit quaternion.
inline Vec3 rotation_log(const Quat& q_in) {
  const Quat q = canonical(q_in);
  const Vec3 v = q.vec();
  const double s = v.norm();
  if (s < 1e-12) return 2.0 * v;  // first-order, exact to rounding near identity
  const double angle = 2.0 * std::atan2(s, q.w());
  return v * (angle / s);
}

inline Quat rotation_exp(const Vec3& w) {
  const double angle = w.norm();
  if (angle < 1e-12) return canonical(Quat(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z()));
  return canonical(Quat(Eigen::AngleAxisd(angle, w / angle)));
}

/// Geodesic angle between two rotations, in [0, pi]; q and -q are the same rotation.
inline double orientation_error(const Quat& a, const Quat& b) {
  const double d = std::abs(a.normalized().dot(b.normalized()));
  return 2.0 * std::acos(std::min(1.0, d));
}

/// Rigid transform: position (m) plus unit-quaternion orientation.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  Pose() = default;
  Pose(const Vec3& p, const Quat& q) : position(p), orientation(canonical(q)) {}
  explicit Pose(const Vec3& p) : position(p) {}

  static Pose identity() { return {}; }
  static Pose from_translation(double x, double y, double z) { return Pose(Vec3(x, y, z)); }
  static Pose from_rotation(const Quat& q) { return Pose(Vec3::Zero(), q); }
  static Pose from_xyz_rpy(const Vec3& xyz, const Vec3& rpy) {
    return Pose(xyz, quat_from_rpy(rpy.x(), rpy.y(), rpy.z()));
  }

  Mat3 rotation() const { return orientation.toRotationMatrix(); }

  /// Maps a point expressed in this frame into the parent frame.
  Vec3 apply(const Vec3& p) const { return position + orientation * p; }

  Eigen::Isometry3d isometry() const {
    Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
    t.linear() = rotation();
    t.translation() = position;
    return t;
  }
};

/// a * b: b expressed in a's frame, result in a's parent frame.
inline Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.position + a.orientation * b.position, a.orientation * b.orientation);
}

inline Pose inverse(const Pose& p) {
  const Quat qi = p.orientation.conjugate();
  return Pose(-(qi * p.position), qi);
}

inline Pose operator*(const Pose& a, const Pose& b) { return compose(a, b); }

/// Exact (bitwise-value) equality; use distance() for tolerances.
inline bool operator==(const Pose& a, const Pose& b) {
  return a.position == b.position && a.orientation.coeffs() == b.orientation.coeffs();
}

/// Straight-line position distance plus geodesic angle; handy in tests and tolerances.
struct PoseDistance {
  double position = 0.0;
  double angle = 0.0;
};

inline PoseDistance distance(const Pose& a, const Pose& b) {
  return {(a.position - b.position).norm(), orientation_error(a.orientation, b.orientation)};
}

/// 6-vector error [dp; dtheta] taking `from` onto `to`, both in the parent frame.
inline Vec6 pose_error(const Pose& to, const Pose& from) {
  Vec6 e;
  e.head<3>() = to.position - from.position;
  e.tail<3>() = rotation_log(to.orientation * from.orientation.conjugate());
  return e;
}

/// Force (N) and torque (N m), both in the world frame.
struct Wrench {
  Vec3 force = Vec3::Zero();
  Vec3 torque = Vec3::Zero();

  Wrench operator+(const Wrench& o) const { return {force + o.force, torque + o.torque}; }
  Wrench& operator+=(const Wrench& o) {
    force += o.force;
    torque += o.torque;
    return *this;
  }
};

constexpr double kGravity = 9.81;

}  // namespace isru
