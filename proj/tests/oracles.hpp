#pragma once

// Reference implementations used only by the tests. They share no code with
// the library beyond the model structs: forward kinematics is a plain product
// of homogeneous transforms, and distances come from closed-form point
// queries minimised by golden-section search along segments.

#include "isru/kinematics.hpp"
#include "isru/rvp/trajectory.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace oracle {

using Eigen::Isometry3d;
using Eigen::Vector3d;

inline Isometry3d iso(const isru::Pose& p) {
  Isometry3d t = Isometry3d::Identity();
  t.linear() = p.orientation.normalized().toRotationMatrix();
  t.translation() = p.position;
  return t;
}

/// World transforms of links 0..dof.
inline std::vector<Isometry3d> link_frames(const isru::ArmModel& arm, const Eigen::VectorXd& q) {
  std::vector<Isometry3d> out{iso(arm.base)};
  for (std::size_t i = 0; i < arm.dof(); ++i) {
    Isometry3d rot = Isometry3d::Identity();
    rot.linear() = Eigen::AngleAxisd(q[static_cast<Eigen::Index>(i)], arm.joints[i].axis).toRotationMatrix();
    out.push_back(out.back() * iso(arm.joints[i].origin) * rot);
  }
  return out;
}

inline Isometry3d grasp_frame(const isru::ArmModel& arm, const Eigen::VectorXd& q) {
  return link_frames(arm, q).back() * iso(arm.ee_offset);
}

/// A primitive placed in the world: a point, segment or box swept by a radius.
struct Placed {
  enum Kind { Point, Segment, Box } kind = Point;
  Vector3d a = Vector3d::Zero(), b = Vector3d::Zero();  // segment ends (a for points)
  Isometry3d box = Isometry3d::Identity();
  Vector3d half = Vector3d::Zero();
  double radius = 0.0;
  Vector3d centre = Vector3d::Zero();
  double bound = 0.0;  // bounding-sphere radius about centre
};

inline Placed place(const isru::Shape& s, const Isometry3d& t) {
  Placed p;
  if (const auto* sp = std::get_if<isru::Sphere>(&s)) {
    p.kind = Placed::Point;
    p.a = p.b = t.translation();
    p.radius = sp->radius;
  } else if (const auto* c = std::get_if<isru::Capsule>(&s)) {
    p.kind = Placed::Segment;
    const Vector3d axis = t.linear().col(2);
    p.a = t.translation() - c->half_length * axis;
    p.b = t.translation() + c->half_length * axis;
    p.radius = c->radius;
  } else {
    p.kind = Placed::Box;
    p.box = t;
    p.half = std::get<isru::Box>(s).half_extents;
  }
  p.centre = p.kind == Placed::Box ? Vector3d(t.translation()) : Vector3d(0.5 * (p.a + p.b));
  p.bound = p.radius + (p.kind == Placed::Box ? p.half.norm() : 0.5 * (p.b - p.a).norm());
  return p;
}

inline double point_to_segment(const Vector3d& x, const Vector3d& a, const Vector3d& b) {
  const Vector3d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((x - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - x).norm();
}

inline double point_to_box(const Vector3d& x, const Isometry3d& box, const Vector3d& half) {
  const Vector3d local = box.inverse() * x;
  const Vector3d outside = (local.cwiseAbs() - half).cwiseMax(0.0);
  return outside.norm();
}

/// Minimum of a convex function on [0, 1].
template <class F>
double golden_min(F f, int iterations = 80) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.0, hi = 1.0;
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  for (int i = 0; i < iterations; ++i) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = f(x2);
    }
  }
  return std::min({f1, f2, f(0.0), f(1.0)});
}

/// Core-to-core distance minus both radii. At least one side must not be a box.
inline double distance(const Placed& p, const Placed& q) {
  if (p.kind == Placed::Box && q.kind == Placed::Box) throw std::logic_error("oracle: box-box not supported");
  if (p.kind == Placed::Box) return distance(q, p);
  auto to_q = [&](const Vector3d& x) {
    switch (q.kind) {
      case Placed::Point: return (x - q.a).norm();
      case Placed::Segment: return point_to_segment(x, q.a, q.b);
      case Placed::Box: return point_to_box(x, q.box, q.half);
    }
    return 0.0;
  };
  double core;
  if (p.kind == Placed::Point) core = to_q(p.a);
  else core = golden_min([&](double s) { return to_q(p.a + s * (p.b - p.a)); });
  return core - p.radius - q.radius;
}

/// True when some arm body touches an obstacle or a non-exempt arm body at q.
inline bool in_collision(const isru::ArmModel& arm, const Eigen::VectorXd& q,
                         const std::vector<isru::CollisionPrimitive>& world) {
  const auto links = link_frames(arm, q);
  std::vector<Placed> bodies;
  for (const auto& b : arm.bodies)
    bodies.push_back(place(b.shape, links[static_cast<std::size_t>(b.attachment)] * iso(b.local_pose)));
  std::vector<Placed> obstacles;
  for (const auto& o : world) obstacles.push_back(place(o.shape, iso(o.local_pose)));
  auto near = [](const Placed& a, const Placed& b) { return (a.centre - b.centre).norm() <= a.bound + b.bound; };
  for (const auto& b : bodies)
    for (const auto& o : obstacles)
      if (near(b, o) && distance(b, o) <= 0.0) return true;
  for (std::size_t i = 0; i < bodies.size(); ++i)
    for (std::size_t j = i + 1; j < bodies.size(); ++j) {
      if (arm.self_pair_ignored(arm.bodies[i].attachment, arm.bodies[j].attachment)) continue;
      if (near(bodies[i], bodies[j]) && distance(bodies[i], bodies[j]) <= 0.0) return true;
    }
  return false;
}

/// Samples every waypoint segment at most `step` rad apart (L-inf).
inline bool trajectory_collides(const isru::Trajectory& t, const isru::ArmModel& arm,
                                const std::vector<isru::CollisionPrimitive>& world, double step) {
  if (t.waypoints.empty()) return false;
  if (oracle::in_collision(arm, t.waypoints.front().q, world)) return true;
  for (std::size_t k = 0; k + 1 < t.waypoints.size(); ++k) {
    const auto& a = t.waypoints[k].q;
    const auto& b = t.waypoints[k + 1].q;
    const int n = std::max(1, static_cast<int>(std::ceil((b - a).cwiseAbs().maxCoeff() / step)));
    for (int i = 1; i <= n; ++i)
      if (oracle::in_collision(arm, a + (static_cast<double>(i) / n) * (b - a), world)) return true;
  }
  return false;
}

/// Amplitude of the `hz` component of a uniformly sampled signal (least squares on sin and cos).
inline double tone_amplitude(const std::vector<double>& x, double dt, double hz) {
  double ss = 0, sc = 0, cc = 0, xs = 0, xc = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double w = 2.0 * M_PI * hz * static_cast<double>(k) * dt;
    const double s = std::sin(w), c = std::cos(w);
    ss += s * s;
    sc += s * c;
    cc += c * c;
    xs += x[k] * s;
    xc += x[k] * c;
  }
  const double det = ss * cc - sc * sc;
  const double A = (xs * cc - xc * sc) / det;
  const double B = (xc * ss - xs * sc) / det;
  return std::hypot(A, B);
}

}  // namespace oracle
