#pragma once

// Six-phase mission machine with guarded transitions and a latched failure.

#include "isru/errors.hpp"
#include "isru/rvp/phase.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace isru {

enum class MissionEvent : std::uint8_t {
  PlanDone,
  Engaged,
  GraspOk,
  RetractDone,
  Plan2Done,
  InsertOk,
  ReleaseOk,
  Abort,
};

inline constexpr std::string_view to_string(MissionEvent e) {
  switch (e) {
    case MissionEvent::PlanDone: return "plan_done";
    case MissionEvent::Engaged: return "engaged";
    case MissionEvent::GraspOk: return "grasp_ok";
    case MissionEvent::RetractDone: return "retract_done";
    case MissionEvent::Plan2Done: return "plan2_done";
    case MissionEvent::InsertOk: return "insert_ok";
    case MissionEvent::ReleaseOk: return "release_ok";
    case MissionEvent::Abort: return "abort";
  }
  return "?";
}

struct MissionState {
  MissionPhase phase = MissionPhase::PreCollection;
  bool failed = false;     // terminal after abort
  bool completed = false;  // terminal after release in PostUtilization
  // Guard flags of the current phase; cleared on every phase change.
  bool plan_executed = false;
  bool engaged = false;

  bool terminal() const { return failed || completed; }
  bool operator==(const MissionState&) const = default;
};

/// Applies one event. Throws IllegalTransition for events the current phase
/// does not accept; the state is unchanged in that case.
inline MissionState phase_transition(const MissionState& s, MissionEvent e) {
  auto illegal = [&]() -> MissionState {
    throw IllegalTransition("mission: event '" + std::string(to_string(e)) + "' not allowed in " +
                            (s.failed ? std::string("failed") : s.completed ? std::string("completed")
                                                                            : std::string(to_string(s.phase))));
  };
  if (s.failed) return e == MissionEvent::Abort ? s : illegal();
  if (s.completed) return illegal();

  MissionState n = s;
  auto advance = [&](MissionPhase p) {
    n.phase = p;
    n.plan_executed = false;
    n.engaged = false;
  };
  if (e == MissionEvent::Abort) {
    n.failed = true;
    return n;
  }
  switch (s.phase) {
    case MissionPhase::PreCollection:
    case MissionPhase::PreUtilization: {
      const MissionEvent plan = s.phase == MissionPhase::PreCollection ? MissionEvent::PlanDone : MissionEvent::Plan2Done;
      if (e == plan) n.plan_executed = true;
      else if (e == MissionEvent::Engaged) n.engaged = true;
      else return illegal();
      if (n.plan_executed && n.engaged)
        advance(s.phase == MissionPhase::PreCollection ? MissionPhase::Collection : MissionPhase::Utilization);
      return n;
    }
    case MissionPhase::Collection:
      if (e == MissionEvent::Engaged) return n;
      if (e == MissionEvent::GraspOk) {
        advance(MissionPhase::PostCollection);
        return n;
      }
      return illegal();
    case MissionPhase::PostCollection:
      if (e == MissionEvent::Engaged) return n;
      if (e == MissionEvent::RetractDone) {
        advance(MissionPhase::PreUtilization);
        return n;
      }
      return illegal();
    case MissionPhase::Utilization:
      if (e == MissionEvent::Engaged) return n;
      if (e == MissionEvent::InsertOk) {
        advance(MissionPhase::PostUtilization);
        return n;
      }
      return illegal();
    case MissionPhase::PostUtilization:
      if (e == MissionEvent::Engaged) return n;
      if (e == MissionEvent::ReleaseOk) {
        n.completed = true;
        return n;
      }
      return illegal();
  }
  return illegal();
}

/// Phases in which the robot may execute an uplinked trajectory.
inline bool autonomous_motion_allowed(MissionPhase p) {
  return p == MissionPhase::PreCollection || p == MissionPhase::PostCollection || p == MissionPhase::PreUtilization;
}

}  // namespace isru
