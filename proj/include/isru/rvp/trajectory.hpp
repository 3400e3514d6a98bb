#pragma once

// Time-stamped joint-space trajectories and their text file format.

#include "isru/config.hpp"
#include "isru/errors.hpp"
#include "isru/kinematics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace isru {

struct Waypoint {
  double time = 0.0;  // s from trajectory start
  JointConfig q;
};

struct Trajectory {
  std::uint64_t id = 0;
  std::vector<Waypoint> waypoints;
  std::string planner;
  std::uint64_t world_hash = 0;

  bool empty() const { return waypoints.empty(); }
  double duration() const { return waypoints.empty() ? 0.0 : waypoints.back().time; }
  const JointConfig& start() const { return waypoints.front().q; }
  const JointConfig& goal() const { return waypoints.back().q; }

  /// Linear interpolation in joint space; clamps outside [0, duration].
  JointConfig sample(double t) const {
    if (waypoints.empty()) throw DimensionMismatch("trajectory: no waypoints");
    if (t <= waypoints.front().time) return waypoints.front().q;
    if (t >= waypoints.back().time) return waypoints.back().q;
    std::size_t lo = 0, hi = waypoints.size() - 1;
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      (waypoints[mid].time <= t ? lo : hi) = mid;
    }
    const double s = (t - waypoints[lo].time) / (waypoints[hi].time - waypoints[lo].time);
    return waypoints[lo].q + s * (waypoints[hi].q - waypoints[lo].q);
  }

  bool operator==(const Trajectory& o) const {
    if (id != o.id || planner != o.planner || world_hash != o.world_hash || waypoints.size() != o.waypoints.size())
      return false;
    for (std::size_t i = 0; i < waypoints.size(); ++i)
      if (waypoints[i].time != o.waypoints[i].time || waypoints[i].q != o.waypoints[i].q) return false;
    return true;
  }
};

/// Checks the structural invariants; `max_step` is the densification bound (rad, L-inf).
inline void validate_trajectory(const Trajectory& t, const ArmModel& arm, double max_step) {
  if (t.waypoints.empty()) throw BadConfig("trajectory: no waypoints");
  if (t.waypoints.front().time != 0.0) throw BadConfig("trajectory: must start at t = 0");
  for (std::size_t i = 0; i < t.waypoints.size(); ++i) {
    const auto& w = t.waypoints[i];
    check_dimension(arm, w.q);
    if (!arm.within_limits(w.q, 1e-12)) throw JointLimitViolation("trajectory: waypoint " + std::to_string(i) + " outside limits");
    if (i == 0) continue;
    if (!(w.time > t.waypoints[i - 1].time)) throw BadConfig("trajectory: times must increase strictly");
    if ((w.q - t.waypoints[i - 1].q).cwiseAbs().maxCoeff() > max_step + 1e-12)
      throw BadConfig("trajectory: waypoint spacing exceeds densification bound");
  }
}

namespace config {

/// Trajectory file: {format_version, kind, id, planner, world_hash (hex string),
/// units, waypoints: [[t_s, q1_rad, ..., qn_rad], ...]}. Doubles are written
/// with round-trip precision.
inline Json trajectory_to_json(const Trajectory& t) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(t.world_hash));
  Json rows = Json::array();
  for (const auto& w : t.waypoints) {
    Json row = Json::array({w.time});
    for (Eigen::Index i = 0; i < w.q.size(); ++i) row.push_back(w.q[i]);
    rows.push_back(std::move(row));
  }
  return {{"format_version", kFormatVersion}, {"kind", "trajectory"}, {"id", t.id},
          {"planner", t.planner},            {"world_hash", hash},    {"units", {{"time", "s"}, {"joints", "rad"}}},
          {"waypoints", std::move(rows)}};
}

inline Trajectory parse_trajectory(const Json& j) {
  const Node root(j);
  check_version(root, "trajectory");
  Trajectory t;
  t.id = root["id"].unsigned_integer();
  t.planner = root.has("planner") ? root["planner"].string() : "";
  if (root.has("world_hash")) {
    const std::string h = root["world_hash"].string();
    try {
      std::size_t used = 0;
      t.world_hash = std::stoull(h, &used, 16);
      if (used != h.size()) throw std::invalid_argument(h);
    } catch (const std::exception&) {
      root["world_hash"].fail("expected a hex string");
    }
  }
  const Node rows = root["waypoints"];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = rows[i].vector();
    if (v.size() < 2) rows[i].fail("expected [t, q...]");
    t.waypoints.push_back({v[0], v.tail(v.size() - 1)});
  }
  return t;
}

inline void save_trajectory(const Trajectory& t, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError(path.string() + ": cannot write");
  out << trajectory_to_json(t).dump(1) << '\n';
  if (!out) throw IoError(path.string() + ": write failed");
}

inline Trajectory load_trajectory(const std::filesystem::path& path) { return parse_trajectory(load_json_file(path)); }

}  // namespace config

}  // namespace isru
