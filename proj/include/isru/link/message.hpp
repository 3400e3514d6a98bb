#pragma once

// Messages exchanged between the control station and the robot.

#include "isru/geometry.hpp"
#include "isru/impedance.hpp"
#include "isru/kinematics.hpp"
#include "isru/rvp/phase.hpp"
#include "isru/rvp/trajectory.hpp"

#include <cstdint>
#include <variant>

namespace isru::link {

/// Station -> robot: new impedance setpoint (world frame).
struct PoseRef {
  Pose pose;
  bool operator==(const PoseRef&) const = default;
};

enum class GripperAction : std::uint8_t { Open = 0, Close = 1 };

struct GripperCmd {
  GripperAction action = GripperAction::Open;
  bool operator==(const GripperCmd&) const = default;
};

struct TrajectoryUplink {
  Trajectory trajectory;
  bool operator==(const TrajectoryUplink&) const = default;
};

enum class ExecStatus : std::uint8_t { Accepted = 0, Completed = 1, Aborted = 2, Rejected = 3 };

inline const char* to_string(ExecStatus s) {
  switch (s) {
    case ExecStatus::Accepted: return "accepted";
    case ExecStatus::Completed: return "completed";
    case ExecStatus::Aborted: return "aborted";
    case ExecStatus::Rejected: return "rejected";
  }
  return "?";
}

struct ExecAck {
  std::uint64_t trajectory_id = 0;
  ExecStatus status = ExecStatus::Accepted;
  bool operator==(const ExecAck&) const = default;
};

/// Execution progress carried in every telemetry frame, so a lost ExecAck is
/// recovered from the state stream.
enum class ExecState : std::uint8_t { Idle = 0, Running = 1, Completed = 2, Aborted = 3 };

/// Robot -> station, every tick.
struct Telemetry {
  Pose ee_pose;
  Wrench wrench;
  JointConfig joints;
  MissionPhase phase = MissionPhase::PreCollection;
  Gripper gripper = Gripper::Open;
  bool safety_tripped = false;
  bool grasp_failed = false;           // last close ended with the gripper open
  std::uint64_t last_ref_seq = 0;      // seq of the newest PoseRef applied
  std::uint64_t exec_id = 0;           // trajectory id of the latest uplink (0: none)
  ExecState exec_state = ExecState::Idle;
  Pose sample_pose;                    // for rendering and scoring only
  double sim_time = 0.0;

  bool operator==(const Telemetry& o) const {
    return ee_pose.position == o.ee_pose.position && ee_pose.orientation.coeffs() == o.ee_pose.orientation.coeffs() &&
           wrench.force == o.wrench.force && wrench.torque == o.wrench.torque && joints == o.joints &&
           phase == o.phase && gripper == o.gripper && safety_tripped == o.safety_tripped &&
           grasp_failed == o.grasp_failed && last_ref_seq == o.last_ref_seq && exec_id == o.exec_id &&
           exec_state == o.exec_state && sample_pose.position == o.sample_pose.position &&
           sample_pose.orientation.coeffs() == o.sample_pose.orientation.coeffs() && sim_time == o.sim_time;
  }
};

enum class EngageKind : std::uint8_t { Request = 0, Ack = 1, Deny = 2 };

/// Engagement handshake. The station requests, the robot acknowledges unless
/// it is executing a trajectory or tripped.
struct Engage {
  EngageKind kind = EngageKind::Request;
  Quat stylus_orientation = Quat::Identity();  // world frame
  bool operator==(const Engage& o) const {
    return kind == o.kind && stylus_orientation.coeffs() == o.stylus_orientation.coeffs();
  }
};

/// Station -> robot: the mission phase, echoed back in telemetry and used by
/// the robot to gate autonomous motion.
struct PhaseNotice {
  MissionPhase phase = MissionPhase::PreCollection;
  bool operator==(const PhaseNotice&) const = default;
};

using Body = std::variant<PoseRef, GripperCmd, TrajectoryUplink, ExecAck, Telemetry, Engage, PhaseNotice>;

enum class Kind : std::uint8_t {
  PoseRef = 1,
  GripperCmd = 2,
  TrajectoryUplink = 3,
  ExecAck = 4,
  Telemetry = 5,
  Engage = 6,
  PhaseNotice = 7,
};

inline const char* to_string(Kind k) {
  switch (k) {
    case Kind::PoseRef: return "PoseRef";
    case Kind::GripperCmd: return "GripperCmd";
    case Kind::TrajectoryUplink: return "TrajectoryUplink";
    case Kind::ExecAck: return "ExecAck";
    case Kind::Telemetry: return "Telemetry";
    case Kind::Engage: return "Engage";
    case Kind::PhaseNotice: return "PhaseNotice";
  }
  return "?";
}

struct LinkMessage {
  std::uint64_t seq = 0;
  double timestamp = 0.0;  // s, sender clock
  Body body;

  Kind kind() const { return static_cast<Kind>(body.index() + 1); }

  template <class T>
  const T* as() const {
    return std::get_if<T>(&body);
  }

  bool operator==(const LinkMessage& o) const { return seq == o.seq && timestamp == o.timestamp && body == o.body; }
};

}  // namespace isru::link
