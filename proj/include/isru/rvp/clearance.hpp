#pragma once

// Pairwise clearance between the arm and the world (and the arm and itself),
// with configuration-independent bounds on how far any body point can move
// for a joint increment. Used by the validator to certify the gaps between
// playback samples.

#include "isru/kinematics.hpp"
#include "isru/rvp/world.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace isru {

class ClearanceModel {
 public:
  struct Pair {
    BodyRef a, b;  // a is always an arm body
  };

  ClearanceModel(const ArmModel& arm, const WorldModel& world) : arm_(&arm), world_(&world) {
    const std::size_t nb = arm.bodies.size();
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t j = 0; j < world.size(); ++j) pairs_.push_back({{false, i}, {true, j}});
    for (std::size_t i = 0; i < nb; ++i)
      for (std::size_t j = i + 1; j < nb; ++j)
        if (!arm.self_pair_ignored(arm.bodies[i].attachment, arm.bodies[j].attachment)) pairs_.push_back({{false, i}, {false, j}});

    // reach_[b][j]: bound on the distance from joint j's origin to any point of body b.
    reach_.assign(nb, std::vector<double>(arm.dof(), 0.0));
    for (std::size_t b = 0; b < nb; ++b) {
      const int link = arm.bodies[b].attachment;
      const double extent = arm.bodies[b].local_pose.position.norm() + shape_extent(arm.bodies[b].shape);
      for (int j = 0; j < link; ++j) {
        double r = extent;
        for (int k = j + 1; k < link; ++k) r += arm.joints[static_cast<std::size_t>(k)].origin.position.norm();
        reach_[b][static_cast<std::size_t>(j)] = r;
      }
    }
  }

  const std::vector<Pair>& pairs() const { return pairs_; }
  const ArmModel& arm() const { return *arm_; }
  const WorldModel& world() const { return *world_; }

  std::string pair_name(std::size_t p) const {
    const auto& pr = pairs_[p];
    return arm_->bodies[pr.a.index].name + "|" +
           (pr.b.world ? world_->obstacles()[pr.b.index].name : arm_->bodies[pr.b.index].name);
  }

  /// Largest displacement of any point of the pair relative to each other for
  /// a straight joint-space move dq.
  double motion_bound(std::size_t p, const JointConfig& dq) const {
    const auto& pr = pairs_[p];
    double m = body_bound(pr.a.index, dq);
    if (!pr.b.world) m += body_bound(pr.b.index, dq);
    return m;
  }

  double max_motion_bound(const JointConfig& dq) const {
    double m = 0.0;
    for (std::size_t b = 0; b < arm_->bodies.size(); ++b) m = std::max(m, body_bound(b, dq));
    return 2.0 * m;
  }

  struct Evaluation {
    std::vector<double> lower;  // per pair, a lower bound on the distance (exact when evaluated)
    double min_distance = std::numeric_limits<double>::infinity();  // exact
    std::size_t min_pair = 0;
  };

  /// Lower bounds for every pair. Pairs whose bounding-box gap is below
  /// `exact_below` are evaluated exactly, and enough others to make the
  /// minimum exact.
  Evaluation evaluate(const JointConfig& q, double exact_below) const {
    const auto poses = placed(q);
    Evaluation ev;
    ev.lower.resize(pairs_.size());
    std::vector<std::size_t> order(pairs_.size());
    for (std::size_t p = 0; p < pairs_.size(); ++p) ev.lower[p] = gap(poses, p);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return ev.lower[x] != ev.lower[y] ? ev.lower[x] < ev.lower[y] : x < y;
    });
    for (std::size_t p : order) {
      if (ev.lower[p] >= ev.min_distance && ev.lower[p] > exact_below) break;
      const double d = exact(poses, p);
      ev.lower[p] = d;
      if (d < ev.min_distance) {
        ev.min_distance = d;
        ev.min_pair = p;
      }
    }
    return ev;
  }

  double pair_distance(const JointConfig& q, std::size_t p) const { return exact(placed(q), p); }

 private:
  struct Placed {
    std::vector<Pose> poses;
    std::vector<Aabb> boxes;
  };

  static double shape_extent(const Shape& s) {
    return std::visit(
        [](const auto& v) -> double {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Sphere>) return v.radius;
          else if constexpr (std::is_same_v<T, Capsule>) return v.radius + v.half_length;
          else return v.half_extents.norm();
        },
        s);
  }

  double body_bound(std::size_t b, const JointConfig& dq) const {
    double m = 0.0;
    for (std::size_t j = 0; j < reach_[b].size(); ++j) m += std::abs(dq[static_cast<Eigen::Index>(j)]) * reach_[b][j];
    return m;
  }

  Placed placed(const JointConfig& q) const {
    Placed pl;
    pl.poses = body_poses(*arm_, link_poses(*arm_, q));
    for (std::size_t i = 0; i < pl.poses.size(); ++i) pl.boxes.push_back(bounding_box(arm_->bodies[i].shape, pl.poses[i]));
    return pl;
  }

  const Shape& shape_of(const BodyRef& r) const {
    return r.world ? world_->obstacles()[r.index].shape : arm_->bodies[r.index].shape;
  }
  const Pose& pose_of(const Placed& pl, const BodyRef& r) const {
    return r.world ? world_->obstacles()[r.index].local_pose : pl.poses[r.index];
  }
  Aabb box_of(const Placed& pl, const BodyRef& r) const {
    return r.world ? bounding_box(world_->obstacles()[r.index].shape, world_->obstacles()[r.index].local_pose)
                   : pl.boxes[r.index];
  }

  double gap(const Placed& pl, std::size_t p) const {
    const Aabb a = box_of(pl, pairs_[p].a), b = box_of(pl, pairs_[p].b);
    const Vec3 sep = (b.lo - a.hi).cwiseMax(a.lo - b.hi).cwiseMax(0.0);
    return sep.norm();
  }

  double exact(const Placed& pl, std::size_t p) const {
    const auto& pr = pairs_[p];
    return primitive_distance(shape_of(pr.a), pose_of(pl, pr.a), shape_of(pr.b), pose_of(pl, pr.b));
  }

  const ArmModel* arm_;
  const WorldModel* world_;
  std::vector<Pair> pairs_;
  std::vector<std::vector<double>> reach_;
};

}  // namespace isru
