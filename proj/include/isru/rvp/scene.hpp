#pragma once

// Scene description for viewers: arm links, obstacles, mission phase and the
// planned path. A pure projection of the robot state.

#include "isru/config.hpp"
#include "isru/impedance.hpp"
#include "isru/kinematics.hpp"
#include "isru/rvp/phase.hpp"
#include "isru/rvp/trajectory.hpp"
#include "isru/rvp/world.hpp"

#include <cstdint>
#include <vector>

namespace isru {

struct SceneSnapshot {
  double time = 0.0;
  std::vector<Pose> link_poses;  // base plus one per joint
  Pose ee_pose;
  Pose reference;
  Pose sample_pose;
  Gripper gripper = Gripper::Open;
  bool safety_tripped = false;
  MissionPhase phase = MissionPhase::PreCollection;
  std::vector<CollisionPrimitive> obstacles;
  std::vector<Vec3> planned_path;  // grasp-frame positions along the current plan

  bool operator==(const SceneSnapshot&) const = default;
};

inline SceneSnapshot snapshot_scene(const SimState& sim, const ArmModel& arm, const WorldModel& world,
                                    const JointConfig& q, MissionPhase phase, const Trajectory* plan = nullptr) {
  SceneSnapshot s;
  s.time = sim.clock;
  s.link_poses = link_poses(arm, q);
  s.ee_pose = sim.ee_pose;
  s.reference = sim.last_reference;
  s.sample_pose = sim.sample_pose;
  s.gripper = sim.gripper;
  s.safety_tripped = sim.safety_tripped;
  s.phase = phase;
  s.obstacles = world.obstacles();
  if (plan)
    for (const auto& w : plan->waypoints) s.planned_path.push_back(forward_kinematics(arm, w.q).position);
  return s;
}

namespace config {

inline Json scene_to_json(const SceneSnapshot& s) {
  Json j;
  j["time_s"] = s.time;
  j["phase"] = std::string(to_string(s.phase));
  j["gripper"] = to_string(s.gripper);
  j["safety_tripped"] = s.safety_tripped;
  j["ee_pose"] = pose_to_json_exact(s.ee_pose);
  j["reference"] = pose_to_json_exact(s.reference);
  j["sample_pose"] = pose_to_json_exact(s.sample_pose);
  Json links = Json::array();
  for (const auto& p : s.link_poses) links.push_back(pose_to_json_exact(p));
  j["link_poses"] = std::move(links);
  Json obs = Json::array();
  for (const auto& o : s.obstacles) obs.push_back(primitive_to_json(o));
  j["obstacles"] = std::move(obs);
  Json path = Json::array();
  for (const auto& p : s.planned_path) path.push_back({p.x(), p.y(), p.z()});
  j["planned_path"] = std::move(path);
  return j;
}

inline SceneSnapshot parse_scene(const Json& j) {
  const Node root(j);
  SceneSnapshot s;
  s.time = root["time_s"].number();
  const auto phase = phase_from_string(root["phase"].string());
  if (!phase) root["phase"].fail("unknown phase");
  s.phase = *phase;
  const std::string g = root["gripper"].string();
  if (g == "open") s.gripper = Gripper::Open;
  else if (g == "closing") s.gripper = Gripper::Closing;
  else if (g == "holding") s.gripper = Gripper::Holding;
  else root["gripper"].fail("unknown gripper state");
  s.safety_tripped = root["safety_tripped"].boolean();
  s.ee_pose = parse_pose(root["ee_pose"]);
  s.reference = parse_pose(root["reference"]);
  s.sample_pose = parse_pose(root["sample_pose"]);
  for (std::size_t i = 0; i < root["link_poses"].size(); ++i) s.link_poses.push_back(parse_pose(root["link_poses"][i]));
  for (std::size_t i = 0; i < root["obstacles"].size(); ++i)
    s.obstacles.push_back(parse_primitive(root["obstacles"][i], kWorldAttachment));
  for (std::size_t i = 0; i < root["planned_path"].size(); ++i) s.planned_path.push_back(root["planned_path"][i].vec3());
  return s;
}

/// FNV-1a over the canonical JSON text.
inline std::uint64_t scene_hash(const SceneSnapshot& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : scene_to_json(s).dump()) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace config

}  // namespace isru
