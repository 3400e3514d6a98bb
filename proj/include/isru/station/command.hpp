#pragma once

// Operator-side verbs understood by the station, and what a controller sees.

#include "isru/hcs.hpp"
#include "isru/link/message.hpp"
#include "isru/rvp/mission.hpp"
#include "isru/rvp/rehearse.hpp"

#include <memory>
#include <optional>
#include <string>
#include <variant>

namespace isru::station {

/// Absolute stylus pose in the device frame plus the button.
struct StylusInput {
  hcs::StylusState stylus;
  bool operator==(const StylusInput& o) const {
    return stylus.pose == o.stylus.pose && stylus.button == o.stylus.button;
  }
};
struct EngageRequest {
  bool operator==(const EngageRequest&) const = default;
};
struct DisengageRequest {
  bool operator==(const DisengageRequest&) const = default;
};
/// Named goal: "pre_collection", "retract" or "pre_utilization"; or an explicit grasp-frame pose.
struct PlanRequest {
  std::string goal;
  std::optional<Pose> pose;
  bool operator==(const PlanRequest&) const = default;
};
struct RehearseRequest {
  bool operator==(const RehearseRequest&) const = default;
};
struct ExecuteRequest {
  bool operator==(const ExecuteRequest&) const = default;
};
struct SetCamera {
  hcs::Camera camera = hcs::Camera::Rear;
  bool operator==(const SetCamera&) const = default;
};
struct GripperRequest {
  link::GripperAction action = link::GripperAction::Open;
  bool operator==(const GripperRequest&) const = default;
};
struct AbortRequest {
  std::string reason;
  bool operator==(const AbortRequest&) const = default;
};

using Command = std::variant<StylusInput, EngageRequest, DisengageRequest, PlanRequest, RehearseRequest,
                             ExecuteRequest, SetCamera, GripperRequest, AbortRequest>;

struct Reply {
  bool ok = true;
  std::string error;  // error class name and message when !ok
};

/// Station state as shown to a controller (virtual operator or remote client).
struct StationView {
  std::int64_t tick = 0;
  double time = 0.0;
  MissionState mission;
  bool force_feedback = true;
  bool engaged = false;
  bool engage_pending = false;
  hcs::Camera camera = hcs::Camera::Rear;
  double orientation_error = 0.0;
  bool workspace_clamped = false;
  hcs::StylusState stylus;
  std::uint64_t last_pose_ref_seq = 0;  // newest PoseRef sent (compare with telemetry.last_ref_seq)
  Vec3 device_force = Vec3::Zero();  // rendered on the stylus (zero without force feedback)
  std::optional<link::Telemetry> telemetry;
  std::shared_ptr<const Trajectory> plan;
  std::optional<RehearsalReport> rehearsal;
  std::uint64_t exec_id = 0;          // trajectory being executed (0: none)
  link::ExecState exec_state = link::ExecState::Idle;
  std::string last_error;
  bool fetched = false;               // holding when the retract completed
};

}  // namespace isru::station
