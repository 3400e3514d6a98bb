#pragma once

// Point-to-point planning in joint space: IK goal sampling from several seeds,
// bidirectional RRT (connect variant), shortcut smoothing and a rest-to-rest
// trapezoidal time law per segment. Every returned trajectory has passed
// rehearse() against the planning world.

#include "isru/errors.hpp"
#include "isru/kinematics.hpp"
#include "isru/rng.hpp"
#include "isru/rvp/rehearse.hpp"
#include "isru/rvp/trajectory.hpp"
#include "isru/rvp/world.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace isru {

struct PlannerOptions {
  std::uint64_t trajectory_id = 1;
  std::uint64_t seed = 0;
  int max_samples = 10000;        // tree-growth budget per attempt
  int attempts = 3;               // full restarts when validation fails
  double coarse_step = 0.02;      // rad, edge checking resolution (L-inf)
  double clearance_margin = 0.005;  // m, padding used while planning
  double extend_step = 0.25;      // rad, RRT step (L-inf)
  int ik_seeds = 16;
  int shortcut_iterations = 150;
  double max_velocity = 0.5;      // rad/s
  double max_acceleration = 1.0;  // rad/s^2
  double densify_step = 0.02;     // rad, waypoint spacing bound (L-inf)
};

namespace detail {

class EdgeChecker {
 public:
  EdgeChecker(const ArmModel& arm, const WorldModel& world, double margin, double step)
      : arm_(arm), world_(world), margin_(margin), step_(step) {}

  bool free(const JointConfig& q) const {
    ++checks_;
    return !in_collision(arm_, q, world_.obstacles(), margin_);
  }

  /// Straight segment a -> b checked at coarse resolution (endpoints excluded for a).
  bool edge_free(const JointConfig& a, const JointConfig& b) const {
    const double span = (b - a).cwiseAbs().maxCoeff();
    const int n = std::max(1, static_cast<int>(std::ceil(span / step_)));
    for (int i = 1; i <= n; ++i)
      if (!free(a + (static_cast<double>(i) / n) * (b - a))) return false;
    return true;
  }

  double margin() const { return margin_; }
  std::size_t checks() const { return checks_; }

 private:
  const ArmModel& arm_;
  const WorldModel& world_;
  double margin_;
  double step_;
  mutable std::size_t checks_ = 0;
};

struct Tree {
  std::vector<JointConfig> nodes;
  std::vector<int> parent;

  int add(const JointConfig& q, int p) {
    nodes.push_back(q);
    parent.push_back(p);
    return static_cast<int>(nodes.size()) - 1;
  }

  int nearest(const JointConfig& q) const {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double d = (nodes[i] - q).squaredNorm();
      if (d < bd) {
        bd = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  std::vector<JointConfig> path_to_root(int i) const {
    std::vector<JointConfig> out;
    for (; i >= 0; i = parent[static_cast<std::size_t>(i)]) out.push_back(nodes[static_cast<std::size_t>(i)]);
    return out;
  }
};

enum class Grow { Trapped, Advanced, Reached };

inline JointConfig steer(const JointConfig& from, const JointConfig& to, double step) {
  const double d = (to - from).cwiseAbs().maxCoeff();
  if (d <= step) return to;
  return from + (step / d) * (to - from);
}

inline Grow extend(Tree& t, const JointConfig& q, const EdgeChecker& ec, double step, int& added) {
  const int n = t.nearest(q);
  const JointConfig qn = steer(t.nodes[static_cast<std::size_t>(n)], q, step);
  if (!ec.edge_free(t.nodes[static_cast<std::size_t>(n)], qn)) return Grow::Trapped;
  added = t.add(qn, n);
  return qn == q ? Grow::Reached : Grow::Advanced;
}

inline Grow connect(Tree& t, const JointConfig& q, const EdgeChecker& ec, double step, int& added) {
  Grow g;
  do {
    g = extend(t, q, ec, step, added);
  } while (g == Grow::Advanced);
  return g;
}

inline std::vector<JointConfig> shortcut(std::vector<JointConfig> path, const EdgeChecker& ec, Rng& rng, int iterations) {
  for (int it = 0; it < iterations && path.size() > 2; ++it) {
    const auto n = static_cast<std::int64_t>(path.size());
    std::int64_t i = rng.uniform_int(0, n - 3);
    std::int64_t j = rng.uniform_int(i + 2, n - 1);
    if (ec.edge_free(path[static_cast<std::size_t>(i)], path[static_cast<std::size_t>(j)]))
      path.erase(path.begin() + i + 1, path.begin() + j);
  }
  // Final greedy pass from the start.
  std::vector<JointConfig> out{path.front()};
  std::size_t i = 0;
  while (i + 1 < path.size()) {
    std::size_t j = path.size() - 1;
    while (j > i + 1 && !ec.edge_free(path[i], path[j])) --j;
    out.push_back(path[j]);
    i = j;
  }
  return out;
}

/// Rest-to-rest trapezoid over distance L: time at which distance s is reached.
struct Trapezoid {
  double L, v, a;
  double ta, tc, T;

  Trapezoid(double length, double vmax, double amax) : L(length), v(vmax), a(amax) {
    if (L * a < v * v) {  // triangular profile
      v = std::sqrt(L * a);
      ta = v / a;
      tc = 0.0;
    } else {
      ta = v / a;
      tc = (L - v * ta) / v;
    }
    T = 2.0 * ta + tc;
  }

  double time_at(double s) const {
    const double sa = 0.5 * a * ta * ta;
    if (s <= sa) return std::sqrt(2.0 * s / a);
    if (s <= L - sa) return ta + (s - sa) / v;
    const double rem = std::max(0.0, L - s);
    return T - std::sqrt(2.0 * rem / a);
  }
};

}  // namespace detail

/// Times a polyline path with a rest-to-rest trapezoid per segment and
/// densifies it to the given spacing.
inline std::vector<Waypoint> time_parameterize(const std::vector<JointConfig>& path, double vmax, double amax,
                                               double spacing) {
  std::vector<Waypoint> out;
  out.push_back({0.0, path.front()});
  double t0 = 0.0;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const JointConfig d = path[k + 1] - path[k];
    const double L = d.cwiseAbs().maxCoeff();
    if (L <= 0.0) continue;
    const detail::Trapezoid tr(L, vmax, amax);
    const int n = std::max(1, static_cast<int>(std::ceil(L / spacing - 1e-12)));
    for (int i = 1; i <= n; ++i) {
      const double s = L * i / n;
      out.push_back({t0 + tr.time_at(s), i == n ? path[k + 1] : JointConfig(path[k] + (s / L) * d)});
    }
    t0 += tr.T;
  }
  return out;
}

/// Collision-free IK solutions for the goal, from the start, home and random seeds.
inline std::vector<JointConfig> goal_configurations(const ArmModel& arm, const WorldModel& world, const JointConfig& q_start,
                                                    const Pose& goal, double margin, int seeds, Rng& rng,
                                                    bool* any_ik = nullptr) {
  std::vector<JointConfig> out;
  const JointConfig lo = arm.lower_limits(), hi = arm.upper_limits();
  bool solved = false;
  for (int s = 0; s < seeds + 2; ++s) {
    JointConfig seed;
    if (s == 0) seed = q_start;
    else if (s == 1) seed = arm.home;
    else {
      seed = JointConfig(arm.dof());
      for (std::size_t j = 0; j < arm.dof(); ++j) seed[j] = rng.uniform(lo[j], hi[j]);
    }
    try {
      const JointConfig q = solve_ik(arm, goal, seed);
      solved = true;
      if (in_collision(arm, q, world.obstacles(), margin)) continue;
      bool dup = false;
      for (const auto& o : out) dup = dup || (o - q).cwiseAbs().maxCoeff() < 1e-3;
      if (!dup) out.push_back(q);
    } catch (const NoConvergence&) {
    } catch (const JointLimitViolation&) {
    }
  }
  if (any_ik) *any_ik = solved;
  std::sort(out.begin(), out.end(), [&](const JointConfig& a, const JointConfig& b) {
    return (a - q_start).cwiseAbs().maxCoeff() < (b - q_start).cwiseAbs().maxCoeff();
  });
  return out;
}

/// Plans from q_start to some configuration whose grasp frame is at `goal`.
inline Trajectory plan_p2p(const ArmModel& arm, const WorldModel& world, const JointConfig& q_start, const Pose& goal,
                           const PlannerOptions& opt = {}) {
  check_dimension(arm, q_start);
  const ClearanceModel cm(arm, world);
  const double start_clear = cm.evaluate(q_start, 0.0).min_distance;
  if (start_clear <= 0.0) throw StartInCollision("plan: start configuration in collision");
  // A start close to an obstacle (e.g. right after a grasp) gets a smaller pad.
  const double margin = std::min(opt.clearance_margin, 0.5 * start_clear);
  const detail::EdgeChecker ec(arm, world, margin, opt.coarse_step);

  Rng rng(mix_seed(opt.seed, opt.trajectory_id));
  bool any_ik = false;
  const auto goals = goal_configurations(arm, world, q_start, goal, margin, opt.ik_seeds, rng, &any_ik);
  if (goals.empty())
    throw GoalUnreachable(any_ik ? "plan: every IK solution for the goal is in collision"
                                 : "plan: IK failed from every seed");

  auto finish = [&](std::vector<JointConfig> path) -> std::optional<Trajectory> {
    path = detail::shortcut(std::move(path), ec, rng, opt.shortcut_iterations);
    Trajectory t;
    t.id = opt.trajectory_id;
    t.planner = "birrt-connect";
    t.world_hash = world.hash();
    t.waypoints = time_parameterize(path, opt.max_velocity, opt.max_acceleration, opt.densify_step);
    if (!rehearse(t, arm, world).passed()) return std::nullopt;
    return t;
  };

  for (int attempt = 0; attempt < opt.attempts; ++attempt) {
    // Straight line first.
    for (const auto& g : goals)
      if (ec.edge_free(q_start, g))
        if (auto t = finish({q_start, g})) return *t;

    detail::Tree ta, tb;
    ta.add(q_start, -1);
    for (const auto& g : goals) tb.add(g, -1);
    detail::Tree* a = &ta;
    detail::Tree* b = &tb;
    const JointConfig lo = arm.lower_limits(), hi = arm.upper_limits();
    for (int s = 0; s < opt.max_samples; ++s) {
      JointConfig q(arm.dof());
      for (std::size_t j = 0; j < arm.dof(); ++j) q[j] = rng.uniform(lo[j], hi[j]);
      int na = -1;
      if (detail::extend(*a, q, ec, opt.extend_step, na) != detail::Grow::Trapped) {
        int nb = -1;
        if (detail::connect(*b, a->nodes[static_cast<std::size_t>(na)], ec, opt.extend_step, nb) == detail::Grow::Reached) {
          auto pa = a->path_to_root(na);
          auto pb = b->path_to_root(nb);
          std::reverse(pa.begin(), pa.end());
          pa.insert(pa.end(), pb.begin() + 1, pb.end());
          if (a != &ta) std::reverse(pa.begin(), pa.end());
          if (auto t = finish(std::move(pa))) return *t;
          break;  // validation failed: restart with fresh trees
        }
      }
      std::swap(a, b);
    }
  }
  throw NoPathFound("plan: no collision-free path within the sample budget");
}

}  // namespace isru
