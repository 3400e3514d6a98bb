#pragma once

// Serial-arm kinematics: forward kinematics, geometric Jacobian, damped
// least-squares IK and the arm-vs-world collision query.
//
// Link indexing: link 0 is the fixed base; link i (1..dof) is the frame after
// joint i has rotated. forward_kinematics returns the grasp frame, which is
// link dof composed with ee_offset.

#include "isru/collision.hpp"
#include "isru/errors.hpp"
#include "isru/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace isru {

using JointConfig = Eigen::VectorXd;
using Jacobian = Eigen::Matrix<double, 6, Eigen::Dynamic>;

struct JointSpec {
  std::string name;
  Pose origin;                   // fixed transform from the previous link frame
  Vec3 axis = Vec3::UnitZ();     // rotation axis in the joint frame (unit)
  double lower = 0.0;            // rad
  double upper = 0.0;            // rad
};

struct ArmModel {
  std::string name;
  int format_version = 1;
  Pose base;                    // base (link 0) in the world frame
  std::vector<JointSpec> joints;
  Pose ee_offset;               // last link -> grasp frame
  std::vector<CollisionPrimitive> bodies;        // attachment = link index
  std::vector<std::pair<int, int>> ignore_pairs;  // extra self-collision exemptions
  JointConfig home;

  std::size_t dof() const { return joints.size(); }

  JointConfig lower_limits() const {
    JointConfig l(dof());
    for (std::size_t i = 0; i < dof(); ++i) l[i] = joints[i].lower;
    return l;
  }
  JointConfig upper_limits() const {
    JointConfig u(dof());
    for (std::size_t i = 0; i < dof(); ++i) u[i] = joints[i].upper;
    return u;
  }

  bool within_limits(const JointConfig& q, double tol = 0.0) const {
    if (static_cast<std::size_t>(q.size()) != dof()) return false;
    for (std::size_t i = 0; i < dof(); ++i)
      if (q[i] < joints[i].lower - tol || q[i] > joints[i].upper + tol) return false;
    return true;
  }

  JointConfig clamp(JointConfig q) const {
    for (std::size_t i = 0; i < dof(); ++i) q[i] = std::clamp(q[i], joints[i].lower, joints[i].upper);
    return q;
  }

  /// Self-collision pairs are skipped for adjacent links and listed exemptions.
  bool self_pair_ignored(int link_a, int link_b) const {
    if (std::abs(link_a - link_b) <= 1) return true;
    for (const auto& [a, b] : ignore_pairs)
      if ((a == link_a && b == link_b) || (a == link_b && b == link_a)) return true;
    return false;
  }

  void validate() const {
    if (dof() < 6) throw BadConfig("arm: dof must be >= 6");
    for (const auto& j : joints) {
      if (!(j.lower < j.upper)) throw BadConfig("arm: joint '" + j.name + "' needs lower < upper");
      if (std::abs(j.axis.norm() - 1.0) > 1e-9) throw BadConfig("arm: joint '" + j.name + "' axis must be unit");
    }
    for (const auto& b : bodies) {
      if (b.attachment < 0 || b.attachment > static_cast<int>(dof()))
        throw BadConfig("arm: body '" + b.name + "' references a missing link");
      isru::validate(b.shape);
    }
    if (static_cast<std::size_t>(home.size()) != dof()) throw BadConfig("arm: home has wrong length");
    if (!within_limits(home)) throw BadConfig("arm: home outside joint limits");
  }
};

inline void check_dimension(const ArmModel& arm, const JointConfig& q) {
  if (static_cast<std::size_t>(q.size()) != arm.dof())
    throw DimensionMismatch("joint config has " + std::to_string(q.size()) + " entries, arm has " +
                            std::to_string(arm.dof()) + " joints");
}

/// World poses of links 0..dof.
inline std::vector<Pose> link_poses(const ArmModel& arm, const JointConfig& q) {
  check_dimension(arm, q);
  std::vector<Pose> out;
  out.reserve(arm.dof() + 1);
  out.push_back(arm.base);
  for (std::size_t i = 0; i < arm.dof(); ++i) {
    const auto& j = arm.joints[i];
    const Pose joint_frame = compose(out.back(), j.origin);
    out.push_back(compose(joint_frame, Pose::from_rotation(quat_from_axis_angle(j.axis, q[i]))));
  }
  return out;
}

inline Pose forward_kinematics(const ArmModel& arm, const JointConfig& q) {
  return compose(link_poses(arm, q).back(), arm.ee_offset);
}

/// Geometric Jacobian at the grasp frame, rows [linear; angular], world frame.
inline Jacobian jacobian(const ArmModel& arm, const JointConfig& q) {
  check_dimension(arm, q);
  const auto links = link_poses(arm, q);
  const Vec3 p_ee = compose(links.back(), arm.ee_offset).position;
  Jacobian J(6, arm.dof());
  for (std::size_t i = 0; i < arm.dof(); ++i) {
    const Pose joint_frame = compose(links[i], arm.joints[i].origin);
    const Vec3 z = joint_frame.orientation * arm.joints[i].axis;
    J.block<3, 1>(0, i) = z.cross(p_ee - joint_frame.position);
    J.block<3, 1>(3, i) = z;
  }
  return J;
}

struct IkOptions {
  double damping = 1e-3;          // lambda in (J J^T + lambda^2 I)
  int max_iterations = 200;
  double position_tolerance = 1e-6;   // m, the contract
  double orientation_tolerance = 1e-4;  // rad, the contract
  double max_step = 0.2;          // rad per iteration, per joint
};

struct IkResult {
  JointConfig q;
  int iterations = 0;
};

/// Damped least-squares IK with joint-limit clamping.
/// Throws NoConvergence when the budget is exhausted, JointLimitViolation if the
/// converged solution cannot be brought inside the limits.
inline IkResult solve_ik_detailed(const ArmModel& arm, const Pose& target, const JointConfig& seed,
                                  const IkOptions& opt = {}) {
  check_dimension(arm, seed);
  // Iterate to well inside the contract so callers can rely on it after rounding.
  const double pos_goal = opt.position_tolerance * 0.01;
  const double rot_goal = opt.orientation_tolerance * 0.01;
  JointConfig q = arm.clamp(seed);
  const double lambda2 = opt.damping * opt.damping;
  for (int it = 0; it <= opt.max_iterations; ++it) {
    const Vec6 e = pose_error(target, forward_kinematics(arm, q));
    if (e.head<3>().norm() <= pos_goal && e.tail<3>().norm() <= rot_goal) {
      if (!arm.within_limits(q)) throw JointLimitViolation("ik: solution outside joint limits");
      return {q, it};
    }
    if (it == opt.max_iterations) break;
    Jacobian J = jacobian(arm, q);
    Eigen::VectorXd dq;
    // Joints pinned at a limit and pushed outward drop out so the rest take up the error.
    for (std::size_t pass = 0; pass <= arm.dof(); ++pass) {
      const Eigen::Matrix<double, 6, 6> A = J * J.transpose() + lambda2 * Eigen::Matrix<double, 6, 6>::Identity();
      dq = J.transpose() * A.ldlt().solve(e);
      bool locked = false;
      for (std::size_t j = 0; j < arm.dof(); ++j) {
        const auto c = static_cast<Eigen::Index>(j);
        const bool at_lower = q[c] <= arm.joints[j].lower && dq[c] < 0.0;
        const bool at_upper = q[c] >= arm.joints[j].upper && dq[c] > 0.0;
        if ((at_lower || at_upper) && !J.col(c).isZero()) {
          J.col(c).setZero();
          locked = true;
        }
      }
      if (!locked) break;
    }
    const double biggest = dq.cwiseAbs().maxCoeff();
    if (biggest > opt.max_step) dq *= opt.max_step / biggest;
    q = arm.clamp(q + dq);
  }
  throw NoConvergence("ik: no convergence after " + std::to_string(opt.max_iterations) + " iterations");
}

inline JointConfig solve_ik(const ArmModel& arm, const Pose& target, const JointConfig& seed,
                            const IkOptions& opt = {}) {
  return solve_ik_detailed(arm, target, seed, opt).q;
}

/// A few damped least-squares iterations from `seed`, without convergence
/// guarantees. Used to follow a slowly moving pose (telemetry joint readout).
inline JointConfig track_ik(const ArmModel& arm, const Pose& target, const JointConfig& seed, int iterations = 4,
                            double damping = 1e-2) {
  check_dimension(arm, seed);
  JointConfig q = arm.clamp(seed);
  const double lambda2 = damping * damping;
  for (int it = 0; it < iterations; ++it) {
    const Vec6 e = pose_error(target, forward_kinematics(arm, q));
    if (e.head<3>().norm() < 1e-9 && e.tail<3>().norm() < 1e-9) break;
    const Jacobian J = jacobian(arm, q);
    const Eigen::Matrix<double, 6, 6> A = J * J.transpose() + lambda2 * Eigen::Matrix<double, 6, 6>::Identity();
    Eigen::VectorXd dq = J.transpose() * A.ldlt().solve(e);
    const double biggest = dq.cwiseAbs().maxCoeff();
    if (biggest > 0.2) dq *= 0.2 / biggest;
    q = arm.clamp(q + dq);
  }
  return q;
}

// ---------------------------------------------------------------------------
// Collision

/// One side of a colliding pair: an arm body or a world body, by index.
struct BodyRef {
  bool world = false;
  std::size_t index = 0;
  bool operator==(const BodyRef&) const = default;
};

struct BodyPair {
  BodyRef a, b;
  double distance = 0.0;
  bool operator==(const BodyPair& o) const { return a == o.a && b == o.b; }
};

struct CollisionReport {
  bool colliding = false;
  std::vector<BodyPair> pairs;     // offending pairs, deterministic order
  double min_distance = std::numeric_limits<double>::infinity();  // over all checked pairs
};

/// Arm bodies placed in the world for configuration q.
inline std::vector<Pose> body_poses(const ArmModel& arm, const std::vector<Pose>& links) {
  std::vector<Pose> out;
  out.reserve(arm.bodies.size());
  for (const auto& b : arm.bodies) out.push_back(compose(links[static_cast<std::size_t>(b.attachment)], b.local_pose));
  return out;
}

struct CollisionQueryOptions {
  double margin = 0.0;       // pairs closer than this count as colliding
  bool want_pairs = true;    // false: stop at the first hit
  bool exact_min_distance = false;  // true: evaluate every pair, no AABB culling
};

/// Arm vs. world and arm vs. arm (non-adjacent links) at configuration q.
///
/// Pairs whose bounding boxes are farther apart than the margin are culled, so
/// min_distance is exact only for pairs that were evaluated unless
/// exact_min_distance is set.
inline CollisionReport check_collision(const ArmModel& arm, const JointConfig& q,
                                       const std::vector<CollisionPrimitive>& world,
                                       const CollisionQueryOptions& opt = {}) {
  const auto links = link_poses(arm, q);
  const auto poses = body_poses(arm, links);
  std::vector<Aabb> arm_boxes;
  arm_boxes.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) arm_boxes.push_back(bounding_box(arm.bodies[i].shape, poses[i]));
  std::vector<Aabb> world_boxes;
  world_boxes.reserve(world.size());
  for (const auto& w : world) world_boxes.push_back(bounding_box(w.shape, w.local_pose));

  CollisionReport report;
  auto consider = [&](BodyRef a, BodyRef b, const Shape& sa, const Pose& pa, const Shape& sb,
                      const Pose& pb, const Aabb& ba, const Aabb& bb) {
    if (!opt.exact_min_distance && !ba.overlaps(bb, opt.margin)) return false;
    const double d = primitive_distance(sa, pa, sb, pb);
    report.min_distance = std::min(report.min_distance, d);
    if (d <= opt.margin) {
      report.colliding = true;
      if (opt.want_pairs) report.pairs.push_back({a, b, d});
      return !opt.want_pairs;
    }
    return false;
  };

  for (std::size_t i = 0; i < arm.bodies.size(); ++i) {
    for (std::size_t j = 0; j < world.size(); ++j) {
      if (consider({false, i}, {true, j}, arm.bodies[i].shape, poses[i], world[j].shape, world[j].local_pose,
                   arm_boxes[i], world_boxes[j]))
        return report;
    }
  }
  for (std::size_t i = 0; i < arm.bodies.size(); ++i) {
    for (std::size_t j = i + 1; j < arm.bodies.size(); ++j) {
      if (arm.self_pair_ignored(arm.bodies[i].attachment, arm.bodies[j].attachment)) continue;
      if (consider({false, i}, {false, j}, arm.bodies[i].shape, poses[i], arm.bodies[j].shape, poses[j],
                   arm_boxes[i], arm_boxes[j]))
        return report;
    }
  }
  return report;
}

inline bool in_collision(const ArmModel& arm, const JointConfig& q, const std::vector<CollisionPrimitive>& world,
                         double margin = 0.0) {
  return check_collision(arm, q, world, {margin, false, false}).colliding;
}

}  // namespace isru
