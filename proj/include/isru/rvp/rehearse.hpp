#pragma once

// Kinematic playback of a trajectory against a world model.
//
// Samples are taken at most `fine_step` rad apart (L-inf). Between two samples
// a pair is certified when d_a + d_b exceeds the pair's motion bound for the
// increment; otherwise the interval is bisected down to `min_step`, and a pair
// that still cannot be certified is reported as a violation. A trajectory is
// therefore never declared collision-free when some intermediate configuration
// touches an obstacle.

#include "isru/rvp/clearance.hpp"
#include "isru/rvp/trajectory.hpp"
#include "isru/rvp/world.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace isru {

struct Violation {
  double time = 0.0;   // s
  std::string pair;    // "arm_body|other_body"
  double distance = 0.0;  // m at the reported configuration (> 0 when only certification failed)
};

struct LimitViolation {
  double time = 0.0;
  std::size_t joint = 0;
  double value = 0.0;
};

struct RehearsalReport {
  bool collision_free = true;
  std::optional<Violation> first_violation;
  double min_clearance = std::numeric_limits<double>::infinity();  // m, over all samples
  std::vector<LimitViolation> limit_violations;
  std::size_t samples = 0;
  bool world_hash_matches = true;

  bool passed() const { return collision_free && limit_violations.empty(); }
};

struct RehearseOptions {
  double fine_step = 0.005;  // rad
  double min_step = 1e-5;    // rad, bisection floor
};

namespace detail {

// Certifies pair p on the straight move qa -> qb, bisecting when needed.
// Returns the time of the first uncertified point, if any.
inline std::optional<std::pair<double, double>> certify_pair(const ClearanceModel& cm, std::size_t p,
                                                             const JointConfig& qa, double ta, double da,
                                                             const JointConfig& qb, double tb, double db,
                                                             double min_step) {
  const JointConfig dq = qb - qa;
  if (da + db > cm.motion_bound(p, dq)) return std::nullopt;
  if (dq.cwiseAbs().maxCoeff() <= min_step) return std::make_pair(0.5 * (ta + tb), std::min(da, db));
  const JointConfig qm = 0.5 * (qa + qb);
  const double tm = 0.5 * (ta + tb);
  const double dm = cm.pair_distance(qm, p);
  if (dm <= 0.0) return std::make_pair(tm, dm);
  if (auto v = certify_pair(cm, p, qa, ta, da, qm, tm, dm, min_step)) return v;
  return certify_pair(cm, p, qm, tm, dm, qb, tb, db, min_step);
}

}  // namespace detail

inline RehearsalReport rehearse(const Trajectory& traj, const ArmModel& arm, const WorldModel& world,
                                const RehearseOptions& opt = {}) {
  RehearsalReport rep;
  if (traj.waypoints.empty()) return rep;
  rep.world_hash_matches = traj.world_hash == world.hash();
  for (const auto& w : traj.waypoints) {
    check_dimension(arm, w.q);
    for (std::size_t j = 0; j < arm.dof(); ++j) {
      const double v = w.q[static_cast<Eigen::Index>(j)];
      if (v < arm.joints[j].lower - 1e-12 || v > arm.joints[j].upper + 1e-12) rep.limit_violations.push_back({w.time, j, v});
    }
  }

  const ClearanceModel cm(arm, world);
  auto violate = [&](double t, std::size_t pair, double d) {
    rep.collision_free = false;
    if (!rep.first_violation) rep.first_violation = Violation{t, cm.pair_name(pair), d};
  };

  JointConfig q_prev = traj.waypoints.front().q;
  double t_prev = traj.waypoints.front().time;
  auto ev_prev = cm.evaluate(q_prev, 0.0);
  ++rep.samples;
  rep.min_clearance = ev_prev.min_distance;
  if (ev_prev.min_distance <= 0.0) violate(t_prev, ev_prev.min_pair, ev_prev.min_distance);

  for (std::size_t k = 0; k + 1 < traj.waypoints.size(); ++k) {
    const auto& a = traj.waypoints[k];
    const auto& b = traj.waypoints[k + 1];
    const double span = (b.q - a.q).cwiseAbs().maxCoeff();
    const int n = std::max(1, static_cast<int>(std::ceil(span / opt.fine_step - 1e-12)));
    for (int i = 1; i <= n; ++i) {
      const double s = static_cast<double>(i) / n;
      const JointConfig q = i == n ? b.q : JointConfig(a.q + s * (b.q - a.q));
      const double t = a.time + s * (b.time - a.time);
      const auto ev = cm.evaluate(q, cm.max_motion_bound(q - q_prev));
      ++rep.samples;
      rep.min_clearance = std::min(rep.min_clearance, ev.min_distance);
      if (ev.min_distance <= 0.0) violate(t, ev.min_pair, ev.min_distance);
      if (rep.collision_free) {
        for (std::size_t p = 0; p < cm.pairs().size(); ++p) {
          const double da = ev_prev.lower[p], db = ev.lower[p];
          if (da <= 0.0 || db <= 0.0) continue;  // already reported at the sample
          if (auto v = detail::certify_pair(cm, p, q_prev, t_prev, da, q, t, db, opt.min_step)) {
            violate(v->first, p, v->second);
            break;
          }
        }
      }
      q_prev = q;
      t_prev = t;
      ev_prev = ev;
    }
  }
  return rep;
}

}  // namespace isru
