#pragma once

// Robot side of the link: the impedance-controlled arm, the trajectory
// executor and the engagement handshake. One tick consumes the messages
// delivered this tick, steps the simulation once and emits telemetry.

#include "isru/errors.hpp"
#include "isru/impedance.hpp"
#include "isru/kinematics.hpp"
#include "isru/link/message.hpp"
#include "isru/rvp/mission.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace isru {

struct RobotConfig {
  double exec_tolerance = 0.005;      // m, final ee distance to FK(q_goal)
  double exec_settle_timeout = 3.0;   // s after the nominal end before aborting
  double start_tolerance = 0.02;      // m, current ee vs FK(q_start) to accept an uplink
};

class RobotNode {
 public:
  RobotNode(const ArmModel& arm, SimModel model, const JointConfig& q0, RobotConfig cfg = {})
      : arm_(&arm), model_(std::move(model)), cfg_(cfg), joints_(q0) {
    check_dimension(arm, q0);
    model_.validate();
    state_ = initial_state(model_, forward_kinematics(arm, q0));
  }

  const SimState& state() const { return state_; }
  const SimModel& model() const { return model_; }
  const Wrench& wrench() const { return wrench_; }
  const JointConfig& joints() const { return joints_; }
  MissionPhase phase() const { return phase_; }
  bool executing() const { return exec_.has_value(); }
  double peak_force() const { return peak_force_; }
  double peak_torque() const { return peak_torque_; }

  /// One control tick. Returns the messages to send (seq left at 0).
  std::vector<link::LinkMessage> tick(const std::vector<link::LinkMessage>& inbox) {
    std::vector<link::LinkMessage> out;
    auto send = [&](link::Body b) { out.push_back({0, state_.clock, std::move(b)}); };

    std::optional<Pose> ref;
    std::uint64_t ref_seq = last_ref_seq_;
    for (const auto& m : inbox) {
      if (const auto* p = m.as<link::PhaseNotice>()) {
        phase_ = p->phase;
      } else if (const auto* p = m.as<link::PoseRef>()) {
        // Newest reference wins; stale ones (reordered by jitter) are ignored.
        if (m.seq > ref_seq && !exec_) {
          ref_seq = m.seq;
          ref = p->pose;
        }
      } else if (const auto* g = m.as<link::GripperCmd>()) {
        if (g->action == link::GripperAction::Close) {
          if (!state_.safety_tripped) state_ = begin_close(state_);
        } else if (state_.holding()) {
          state_ = settle_released(model_.env, release(state_));
        } else if (state_.gripper == Gripper::Closing) {
          state_.gripper = Gripper::Open;
          state_.closing_elapsed = 0.0;
        }
      } else if (const auto* e = m.as<link::Engage>()) {
        if (e->kind == link::EngageKind::Request)
          send(link::Engage{exec_ || state_.safety_tripped ? link::EngageKind::Deny : link::EngageKind::Ack,
                            e->stylus_orientation});
      } else if (const auto* u = m.as<link::TrajectoryUplink>()) {
        send(accept(u->trajectory));
      }
    }
    last_ref_seq_ = ref_seq;

    std::optional<JointConfig> q_ref;
    if (exec_) {
      q_ref = exec_->trajectory.sample(state_.clock - exec_->t0);
      ref = forward_kinematics(*arm_, *q_ref);
    }
    const auto r = step(model_, state_, ref, model_.dt);
    state_ = r.state;
    wrench_ = r.wrench;
    peak_force_ = std::max(peak_force_, wrench_.force.norm());
    peak_torque_ = std::max(peak_torque_, wrench_.torque.norm());
    // Joint readout: the commanded configuration seeds it while executing so
    // the redundant joint follows the plan.
    joints_ = track_ik(*arm_, state_.ee_pose, q_ref ? *q_ref : joints_);

    if (exec_) {
      const double t = state_.clock - exec_->t0;
      const Trajectory& tr = exec_->trajectory;
      if (state_.safety_tripped) {
        finish(link::ExecState::Aborted, out);
      } else if (t >= tr.duration() && distance(state_.ee_pose, exec_->goal).position <= cfg_.exec_tolerance) {
        finish(link::ExecState::Completed, out);
      } else if (t > tr.duration() + cfg_.exec_settle_timeout) {
        finish(link::ExecState::Aborted, out);
      }
    }
    send(telemetry());
    return out;
  }

  link::Telemetry telemetry() const {
    link::Telemetry t;
    t.ee_pose = state_.ee_pose;
    t.wrench = wrench_;
    t.joints = joints_;
    t.phase = phase_;
    t.gripper = state_.gripper;
    t.safety_tripped = state_.safety_tripped;
    t.grasp_failed = state_.last_grasp_failed;
    t.last_ref_seq = last_ref_seq_;
    t.exec_id = exec_id_;
    t.exec_state = exec_state_;
    t.sample_pose = state_.sample_pose;
    t.sim_time = state_.clock;
    return t;
  }

 private:
  struct Execution {
    Trajectory trajectory;
    double t0 = 0.0;
    Pose goal;
  };

  link::ExecAck accept(const Trajectory& tr) {
    // A resend of the trajectory being (or already) executed gets the current status again.
    if (tr.id == exec_id_ && exec_id_ != 0) {
      switch (exec_state_) {
        case link::ExecState::Running: return {tr.id, link::ExecStatus::Accepted};
        case link::ExecState::Completed: return {tr.id, link::ExecStatus::Completed};
        case link::ExecState::Aborted: return {tr.id, link::ExecStatus::Aborted};
        case link::ExecState::Idle: break;
      }
    }
    const bool busy = exec_.has_value();
    const bool start_ok = !tr.waypoints.empty() &&
                          tr.start().size() == static_cast<Eigen::Index>(arm_->dof()) &&
                          distance(forward_kinematics(*arm_, tr.start()), state_.ee_pose).position <= cfg_.start_tolerance;
    if (busy || state_.safety_tripped || !autonomous_motion_allowed(phase_) || !start_ok)
      return {tr.id, link::ExecStatus::Rejected};
    exec_ = Execution{tr, state_.clock, forward_kinematics(*arm_, tr.goal())};
    exec_id_ = tr.id;
    exec_state_ = link::ExecState::Running;
    return {tr.id, link::ExecStatus::Accepted};
  }

  void finish(link::ExecState s, std::vector<link::LinkMessage>& out) {
    exec_state_ = s;
    exec_.reset();
    out.push_back({0, state_.clock,
                   link::ExecAck{exec_id_, s == link::ExecState::Completed ? link::ExecStatus::Completed
                                                                          : link::ExecStatus::Aborted}});
  }

  const ArmModel* arm_;
  SimModel model_;
  RobotConfig cfg_;
  SimState state_;
  Wrench wrench_;
  JointConfig joints_;
  MissionPhase phase_ = MissionPhase::PreCollection;
  std::uint64_t last_ref_seq_ = 0;
  std::optional<Execution> exec_;
  std::uint64_t exec_id_ = 0;
  link::ExecState exec_state_ = link::ExecState::Idle;
  double peak_force_ = 0.0;
  double peak_torque_ = 0.0;
};

}  // namespace isru
