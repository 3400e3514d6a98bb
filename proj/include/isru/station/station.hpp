#pragma once

// Control station: HCS, planning/rehearsal, the mission machine and the
// station end of the link. Mission events are derived from what arrives over
// the link (acks and telemetry), never from the robot's internal state.

#include "isru/errors.hpp"
#include "isru/hcs.hpp"
#include "isru/impedance.hpp"
#include "isru/link/message.hpp"
#include "isru/rvp/mission.hpp"
#include "isru/rvp/planner.hpp"
#include "isru/rvp/rehearse.hpp"
#include "isru/rvp/world.hpp"
#include "isru/station/command.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace isru::station {

struct StationConfig {
  hcs::HcsConfig hcs;
  bool force_feedback = true;
  PlannerOptions planner;
  Pose pre_collection_goal = Pose::from_xyz_rpy(Vec3(-0.42, 0.0, -0.20), Vec3(M_PI, 0.0, 0.0));
  double retract_height = 0.15;  // m
  Pose pre_utilization_goal = Pose::from_xyz_rpy(Vec3(0.45, 0.0, 0.155), Vec3(M_PI, 0.0, 0.0));
  double resend_margin = 0.5;    // s added to the round trip before a resend
  int max_resends = 5;
};

struct LogEntry {
  double time = 0.0;
  std::string text;
};

class Station {
 public:
  Station(const ArmModel& arm, WorldModel world, EnvModel env, StationConfig cfg, double delay_each_way, double dt)
      : arm_(&arm),
        world_(std::move(world)),
        env_(std::move(env)),
        cfg_(std::move(cfg)),
        hcs_(cfg_.hcs),
        dt_(dt),
        resend_ticks_(std::max<std::int64_t>(1, std::llround((2.0 * delay_each_way + cfg_.resend_margin) / dt))) {}

  const MissionState& mission() const { return mission_; }
  const hcs::Hcs& hcs() const { return hcs_; }
  const std::optional<link::Telemetry>& telemetry() const { return telemetry_; }
  const std::vector<LogEntry>& log() const { return log_; }
  const std::shared_ptr<const Trajectory>& plan() const { return plan_; }
  const ArmModel& planning_arm() const { return plan_arm_ ? *plan_arm_ : *arm_; }
  const WorldModel& world() const { return world_; }
  bool fetched() const { return fetched_; }
  const std::string& abort_reason() const { return abort_reason_; }

  Reply apply(const Command& c, std::int64_t tick) {
    now_ = tick;
    try {
      std::visit([&](const auto& v) { handle(v); }, c);
      return {};
    } catch (const Error& e) {
      last_error_ = e.what();
      note(std::string("rejected: ") + e.what());
      return {false, e.what()};
    }
  }

  void on_message(const link::LinkMessage& m, std::int64_t tick) {
    now_ = tick;
    if (const auto* t = m.as<link::Telemetry>()) on_telemetry(*t);
    else if (const auto* a = m.as<link::ExecAck>()) on_exec_ack(*a);
    else if (const auto* e = m.as<link::Engage>()) on_engage(*e);
  }

  /// Messages for this tick, sequenced.
  std::vector<link::LinkMessage> outgoing(std::int64_t tick) {
    now_ = tick;
    std::vector<link::LinkMessage> out;
    auto send = [&](link::Body b) { out.push_back({next_seq_++, tick * dt_, std::move(b)}); };

    const bool phase_echoed = telemetry_ && telemetry_->phase == mission_.phase;
    if (notice_dirty_ || (!phase_echoed && tick - notice_sent_ >= resend_ticks_)) {
      send(link::PhaseNotice{mission_.phase});
      notice_sent_ = tick;
      notice_dirty_ = false;
    }
    if (engage_pending_ && tick - engage_sent_ >= (engage_sent_ < 0 ? 0 : resend_ticks_)) {
      if (engage_sent_ >= 0 && ++engage_resends_ > cfg_.max_resends) {
        engage_pending_ = false;
        if (hcs_.engaged()) hcs_.disengage();
        fail_soft("LinkTimeout: no engage acknowledgement");
      } else {
        send(link::Engage{link::EngageKind::Request, hcs::stylus_world_orientation(hcs_.config().mapping,
                                                                                   stylus_.pose.orientation)});
        engage_sent_ = tick;
      }
    }
    if (uplink_ && !uplink_->acked && tick - uplink_->sent >= (uplink_->sent < 0 ? 0 : resend_ticks_)) {
      if (uplink_->sent >= 0 && ++uplink_->resends > cfg_.max_resends) {
        uplink_.reset();
        exec_state_ = link::ExecState::Idle;
        exec_id_ = 0;
        fail_soft("LinkTimeout: no acknowledgement for the trajectory uplink");
      } else {
        send(link::TrajectoryUplink{uplink_->trajectory});
        uplink_->sent = tick;
      }
    }
    for (auto& g : gripper_queue_) send(g);
    gripper_queue_.clear();
    if (auto ref = hcs_.update(stylus_, dt_)) {
      send(link::PoseRef{*ref});
      last_pose_ref_seq_ = out.back().seq;
    }
    return out;
  }

  StationView view(std::int64_t tick) const {
    StationView v;
    v.tick = tick;
    v.time = tick * dt_;
    v.mission = mission_;
    v.force_feedback = cfg_.force_feedback;
    v.engaged = hcs_.engaged();
    v.engage_pending = engage_pending_;
    v.camera = hcs_.camera();
    v.orientation_error = hcs_.last_orientation_error();
    v.workspace_clamped = hcs_.workspace_clamped();
    v.stylus = stylus_;
    v.last_pose_ref_seq = last_pose_ref_seq_;
    v.device_force = device_force();
    v.telemetry = telemetry_;
    v.plan = plan_;
    v.rehearsal = rehearsal_;
    v.exec_id = exec_id_;
    v.exec_state = exec_state_;
    v.last_error = last_error_;
    v.fetched = fetched_;
    return v;
  }

  Vec3 device_force() const {
    if (!cfg_.force_feedback || !hcs_.engaged() || !telemetry_) return Vec3::Zero();
    return hcs_.feedback(telemetry_->wrench, telemetry_->gripper == Gripper::Holding);
  }

  /// Latches a failure from outside (operator gave up, trial timeout).
  void abort(const std::string& reason) { fire(MissionEvent::Abort, reason); }

 private:
  struct Uplink {
    Trajectory trajectory;
    std::int64_t sent = -1;
    int resends = 0;
    bool acked = false;
  };

  void note(std::string text) { log_.push_back({now_ * dt_, std::move(text)}); }

  void fail_soft(const std::string& msg) {
    last_error_ = msg;
    note(msg);
  }

  void fire(MissionEvent e, const std::string& why = {}) {
    const MissionPhase before = mission_.phase;
    const bool was_failed = mission_.failed;
    try {
      mission_ = phase_transition(mission_, e);
    } catch (const IllegalTransition& ex) {
      note(ex.what());
      return;
    }
    if (e == MissionEvent::Abort && !was_failed) {
      abort_reason_ = why;
      note("abort: " + why);
      if (hcs_.engaged()) hcs_.disengage();
      engage_pending_ = false;
    }
    if (mission_.phase != before) {
      notice_dirty_ = true;
      note(std::string(to_string(e)) + ": " + std::string(to_string(before)) + " -> " +
           std::string(to_string(mission_.phase)));
    }
    if (mission_.completed) note("mission completed");
  }

  void require_live() const {
    if (mission_.terminal()) throw IllegalTransition("mission is over");
  }

  const link::Telemetry& require_telemetry() const {
    if (!telemetry_) throw LinkTimeout("no telemetry received yet");
    return *telemetry_;
  }

  // -- verbs -----------------------------------------------------------------

  void handle(const StylusInput& s) { stylus_ = s.stylus; }

  void handle(const EngageRequest&) {
    require_live();
    if (hcs_.engaged()) throw AlreadyEngaged("engage: already engaged");
    if (exec_state_ == link::ExecState::Running) throw ExecRejected("engage: a trajectory is executing");
    const auto& t = require_telemetry();
    if (!hcs_.engage(stylus_, t.ee_pose))
      throw NotEngaged("engage: orientation error " + std::to_string(hcs_.last_orientation_error()) +
                       " rad exceeds the tolerance");
    engage_pending_ = true;
    engage_sent_ = -1;
    engage_resends_ = 0;
    note("engage requested");
  }

  void handle(const DisengageRequest&) {
    hcs_.disengage();
    engage_pending_ = false;
    note("disengaged");
  }

  void handle(const PlanRequest& p) {
    require_live();
    const auto& t = require_telemetry();
    Pose goal;
    if (p.pose) {
      goal = *p.pose;
    } else if (p.goal == "pre_collection") {
      goal = cfg_.pre_collection_goal;
    } else if (p.goal == "retract") {
      goal = t.ee_pose;
      goal.position.z() += cfg_.retract_height;
    } else if (p.goal == "pre_utilization") {
      goal = cfg_.pre_utilization_goal;
    } else {
      throw BadConfig("plan: unknown goal '" + p.goal + "'");
    }
    plan_arm_ = with_payload(t);
    PlannerOptions opt = cfg_.planner;
    opt.trajectory_id = ++plan_counter_;
    if (t.gripper == Gripper::Holding) opt.clearance_margin = std::max(opt.clearance_margin, kHoldingMargin);
    plan_.reset();
    rehearsal_.reset();
    plan_ = std::make_shared<const Trajectory>(plan_p2p(*plan_arm_, world_, t.joints, goal, opt));
    note("planned trajectory " + std::to_string(plan_->id) + " (" + std::to_string(plan_->waypoints.size()) +
         " waypoints, " + std::to_string(plan_->duration()) + " s)");
  }

  void handle(const RehearseRequest&) {
    if (!plan_) throw NoPathFound("rehearse: no plan");
    rehearsal_ = rehearse(*plan_, planning_arm(), world_);
    note(std::string("rehearsal ") + (rehearsal_->passed() ? "passed" : "failed") +
         ", min clearance " + std::to_string(rehearsal_->min_clearance) + " m");
  }

  void handle(const ExecuteRequest&) {
    require_live();
    if (!plan_) throw NoPathFound("execute: no plan");
    if (!rehearsal_ || !rehearsal_->passed()) throw ExecRejected("execute: plan has not passed rehearsal");
    if (plan_->world_hash != world_.hash()) throw ExecRejected("execute: plan was made for a different world");
    if (!autonomous_motion_allowed(mission_.phase))
      throw IllegalTransition(std::string("execute: no autonomous motion in ") + std::string(to_string(mission_.phase)));
    if (mission_.plan_executed) throw IllegalTransition("execute: this phase's plan has already run");
    if (hcs_.engaged()) throw AlreadyEngaged("execute: disengage before executing");
    if (uplink_ || exec_state_ == link::ExecState::Running) throw ExecRejected("execute: a trajectory is in progress");
    uplink_ = Uplink{*plan_};
    exec_id_ = plan_->id;
    exec_state_ = link::ExecState::Running;
    note("uplinking trajectory " + std::to_string(plan_->id));
  }

  void handle(const SetCamera& c) { hcs_.set_camera(c.camera); }

  void handle(const GripperRequest& g) {
    require_live();
    if (g.action == link::GripperAction::Close) {
      if (mission_.phase != MissionPhase::Collection)
        throw IllegalTransition("gripper: closing is only allowed in collection");
    } else {
      const bool holding = telemetry_ && telemetry_->gripper == Gripper::Holding;
      if (mission_.phase == MissionPhase::PostUtilization) release_requested_ = true;
      else if (holding) throw IllegalTransition("gripper: releasing is only allowed in post_utilization");
    }
    gripper_queue_.push_back(link::GripperCmd{g.action});
    note(g.action == link::GripperAction::Close ? "gripper close" : "gripper open");
  }

  void handle(const AbortRequest& a) { fire(MissionEvent::Abort, a.reason.empty() ? "operator abort" : a.reason); }

  // -- inbound ---------------------------------------------------------------

  void on_telemetry(const link::Telemetry& t) {
    if (telemetry_ && t.sim_time < telemetry_->sim_time) return;
    telemetry_ = t;
    if (mission_.terminal()) return;
    if (t.safety_tripped) {
      fire(MissionEvent::Abort, "safety trip");
      return;
    }
    if (exec_id_ != 0 && t.exec_id == exec_id_) {
      if (uplink_) uplink_->acked = true;
      if (t.exec_state == link::ExecState::Completed) exec_done(true);
      else if (t.exec_state == link::ExecState::Aborted) exec_done(false);
    }
    const bool holding = t.gripper == Gripper::Holding;
    if (mission_.phase == MissionPhase::Collection && holding) fire(MissionEvent::GraspOk);
    if (mission_.phase == MissionPhase::Utilization && holding && inserted(t.sample_pose)) fire(MissionEvent::InsertOk);
    if (mission_.phase == MissionPhase::PostUtilization && release_requested_ && t.gripper == Gripper::Open)
      fire(MissionEvent::ReleaseOk);
  }

  void on_exec_ack(const link::ExecAck& a) {
    if (a.trajectory_id != exec_id_ || exec_id_ == 0) return;
    switch (a.status) {
      case link::ExecStatus::Accepted:
        if (uplink_) uplink_->acked = true;
        break;
      case link::ExecStatus::Completed: exec_done(true); break;
      case link::ExecStatus::Aborted: exec_done(false); break;
      case link::ExecStatus::Rejected:
        uplink_.reset();
        exec_id_ = 0;
        exec_state_ = link::ExecState::Idle;
        fail_soft("ExecRejected: robot refused trajectory " + std::to_string(a.trajectory_id));
        break;
    }
  }

  void on_engage(const link::Engage& e) {
    if (!engage_pending_) return;
    engage_pending_ = false;
    if (e.kind == link::EngageKind::Ack && hcs_.engaged()) {
      note("engaged");
      fire(MissionEvent::Engaged);
    } else if (e.kind == link::EngageKind::Deny) {
      if (hcs_.engaged()) hcs_.disengage();
      fail_soft("NotEngaged: robot denied engagement");
    }
  }

  void exec_done(bool completed) {
    const std::uint64_t id = exec_id_;
    uplink_.reset();
    exec_id_ = 0;
    exec_state_ = completed ? link::ExecState::Completed : link::ExecState::Aborted;
    if (!completed) {
      fire(MissionEvent::Abort, "trajectory " + std::to_string(id) + " aborted");
      return;
    }
    note("trajectory " + std::to_string(id) + " completed");
    switch (mission_.phase) {
      case MissionPhase::PreCollection: fire(MissionEvent::PlanDone); break;
      case MissionPhase::PostCollection:
        fetched_ = telemetry_ && telemetry_->gripper == Gripper::Holding;
        fire(MissionEvent::RetractDone);
        break;
      case MissionPhase::PreUtilization: fire(MissionEvent::Plan2Done); break;
      default: break;
    }
  }

  bool inserted(const Pose& sample) const {
    const auto c = slot_coordinates(env_, sample);
    const double footprint = 0.5 * env_.clearance + env_.chamfer;
    return c.depth >= env_.insertion_depth && std::abs(c.ex) <= footprint && std::abs(c.ey) <= footprint;
  }

  /// The arm plus a box for the held sample, trimmed at the bottom so the
  /// sample resting on the ground right after the grasp is not a collision.
  ArmModel with_payload(const link::Telemetry& t) const {
    ArmModel a = *arm_;
    if (t.gripper != Gripper::Holding) return a;
    const Pose in_grasp = compose(inverse(t.ee_pose), t.sample_pose);
    Vec3 half = env_.sample_half_extents;
    half.z() -= 0.5 * kPayloadBottomGap;
    CollisionPrimitive body;
    body.name = "payload";
    body.shape = Box{half};
    body.attachment = static_cast<int>(a.dof());
    body.local_pose = compose(a.ee_offset, compose(in_grasp, Pose(Vec3(0, 0, 0.5 * kPayloadBottomGap), Quat::Identity())));
    a.bodies.push_back(body);
    return a;
  }

  static constexpr double kPayloadBottomGap = 0.004;  // m
  static constexpr double kHoldingMargin = 0.01;      // m, planning pad for payload sag and tracking lag

  const ArmModel* arm_;
  WorldModel world_;
  EnvModel env_;
  StationConfig cfg_;
  hcs::Hcs hcs_;
  double dt_;
  std::int64_t resend_ticks_;
  std::int64_t now_ = 0;
  std::uint64_t next_seq_ = 1;
  std::uint64_t last_pose_ref_seq_ = 0;

  MissionState mission_;
  hcs::StylusState stylus_;
  std::optional<link::Telemetry> telemetry_;
  std::optional<ArmModel> plan_arm_;
  std::shared_ptr<const Trajectory> plan_;
  std::optional<RehearsalReport> rehearsal_;
  std::uint64_t plan_counter_ = 0;
  std::optional<Uplink> uplink_;
  std::uint64_t exec_id_ = 0;
  link::ExecState exec_state_ = link::ExecState::Idle;
  bool engage_pending_ = false;
  std::int64_t engage_sent_ = -1;
  int engage_resends_ = 0;
  bool notice_dirty_ = true;
  std::int64_t notice_sent_ = 0;
  std::vector<link::GripperCmd> gripper_queue_;
  bool release_requested_ = false;
  bool fetched_ = false;
  std::string abort_reason_;
  std::string last_error_;
  std::vector<LogEntry> log_;
};

}  // namespace isru::station
