#pragma once

// Scripted virtual operator. It sees the station through a reaction-delay
// buffer (on top of the link delay already present in the telemetry), holds
// a per-trial biased estimate of where the sample and the hole are, and acts
// through the same verbs a remote client would use.
//
// Teleoperation is move-and-wait: the stylus is driven open loop toward a goal
// computed from the last settled observation, then the operator waits until
// telemetry echoes the newest reference before judging the result.

#include "isru/errors.hpp"
#include "isru/hcs.hpp"
#include "isru/impedance.hpp"
#include "isru/rng.hpp"
#include "isru/station/command.hpp"

#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace isru::op {

struct OperatorParams {
  bool uses_force_feedback = true;
  double reaction_delay = 0.25;      // s
  double tremor_amplitude = 0.0015;  // m
  double tremor_frequency = 9.0;     // Hz
  double servo_speed = 0.02;         // m/s
  double compliance_gain = 0.015;    // m/s of stylus motion per N felt at the device
  double perception_noise = 0.004;   // m, std per axis of the sample and hole estimates
  std::uint64_t seed = 0;

  // Secondary behaviour constants.
  double contact_force = 0.2;        // N felt: vertical contact threshold
  double light_contact = 0.25;       // N felt: force held while searching
  double lateral_ok = 0.1;           // N felt: lateral force low enough to push on / release
  double force_regulation_gain = 0.01;  // m/s per N felt while searching
  double search_pitch = 0.003;       // m of radius per spiral turn
  double search_speed = 0.004;       // m/s along the spiral
  double settle_time = 0.3;          // s of stillness before judging a move
  double engage_misalignment = 0.05; // rad, largest stylus misalignment at engagement
  double engage_height = 0.03;       // m, stylus z when engaging (room to descend)
  double press_step = 0.01;          // m, extra push when the sample does not go in
  double press_limit = 0.04;         // m, total extra push before giving up
  double teleop_timeout = 90.0;      // s per teleoperated phase before giving up
  int plan_attempts = 3;

  void validate() const {
    auto nonneg = [](double v, const char* name) {
      if (!(v >= 0.0)) throw BadConfig(std::string("operator: ") + name + " must be >= 0");
    };
    nonneg(reaction_delay, "reaction_delay");
    nonneg(tremor_amplitude, "tremor_amplitude");
    nonneg(tremor_frequency, "tremor_frequency");
    nonneg(compliance_gain, "compliance_gain");
    nonneg(perception_noise, "perception_noise");
    if (!(servo_speed > 0.0 && servo_speed <= 0.05)) throw BadConfig("operator: servo_speed must be in (0, 0.05]");
    if (!(search_speed > 0.0 && search_speed <= servo_speed)) throw BadConfig("operator: search_speed must be in (0, servo_speed]");
    if (!(teleop_timeout > 0.0)) throw BadConfig("operator: teleop_timeout must be > 0");
  }
};

/// What the operator works from: delayed telemetry plus its own estimates.
struct Observation {
  double time = 0.0;  // station time the view was taken
  double age = 0.0;   // s between the robot producing the telemetry and the operator acting on it
  MissionState mission;
  bool engaged = false;
  bool engage_pending = false;
  hcs::Camera camera = hcs::Camera::Rear;
  std::uint64_t last_pose_ref_seq = 0;
  Vec3 device_force = Vec3::Zero();
  std::optional<link::Telemetry> telemetry;
  std::uint64_t exec_id = 0;
  link::ExecState exec_state = link::ExecState::Idle;
  Vec3 sample_estimate = Vec3::Zero();
  Vec3 hole_estimate = Vec3::Zero();  // centre of the hole mouth
};

/// Everything the operator knows about the task besides what it observes.
struct TaskKnowledge {
  hcs::MappingConfig mapping;
  Pose slot_pose;                 // hole mouth
  double sample_half_height = 0.05;
  double insertion_depth = 0.03;
  double chamfer = 0.0025;
  double capture_radius = 0.01;
  double close_duration = 0.3;

  static TaskKnowledge from(const EnvModel& env, const hcs::MappingConfig& mapping) {
    TaskKnowledge k;
    k.mapping = mapping;
    k.slot_pose = env.slot_pose;
    k.sample_half_height = env.sample_half_extents.z();
    k.insertion_depth = env.insertion_depth;
    k.chamfer = env.chamfer;
    k.capture_radius = env.capture_radius;
    k.close_duration = env.close_duration;
    return k;
  }
};

class VirtualOperator {
 public:
  VirtualOperator(OperatorParams p, TaskKnowledge k, double dt) : p_(p), k_(std::move(k)), dt_(dt), rng_(p.seed) {
    p_.validate();
    for (int i = 0; i < 3; ++i) sample_bias_[i] = rng_.normal(0.0, p_.perception_noise);
    for (int i = 0; i < 2; ++i) hole_bias_[i] = rng_.normal(0.0, p_.perception_noise);
    for (int i = 0; i < 3; ++i) tremor_phase_[i] = rng_.uniform(0.0, 2.0 * std::numbers::pi);
    for (int i = 0; i < 3; ++i) misalign_axis_[i] = rng_.normal();
    misalign_angle_ = rng_.uniform(0.0, p_.engage_misalignment);
  }

  const OperatorParams& params() const { return p_; }
  const std::string& give_up_reason() const { return give_up_; }
  Vec3 sample_bias() const { return sample_bias_; }
  Vec3 hole_bias() const { return hole_bias_; }

  /// One tick: record the view, act on the observation reaction_delay old.
  std::vector<station::Command> tick(const station::StationView& v) {
    buffer_.push_back(observe(v));
    std::optional<Observation> obs;
    while (!buffer_.empty() && buffer_.front().time <= v.time - p_.reaction_delay + 1e-9) {
      obs = std::move(buffer_.front());
      buffer_.pop_front();
    }
    if (obs) current_ = std::move(obs);
    std::vector<station::Command> out;
    if (!current_ || current_->mission.terminal()) return out;
    now_ = v.time;
    act(*current_, out);
    if (current_->engaged || current_->engage_pending || stylus_dirty_) {
      out.push_back(station::StylusInput{stylus_output()});
      stylus_dirty_ = false;
    }
    return out;
  }

 private:
  enum class Stage {
    Idle,
    Align,     // lateral move over the target
    Descend,   // vertical move toward the target depth
    Search,    // spiral with light contact (force feedback only)
    Insert,    // in the hole, pushing to depth
    Grasping,  // waiting for the gripper outcome
    Released,
  };

  Observation observe(const station::StationView& v) const {
    Observation o;
    o.time = v.time;
    o.mission = v.mission;
    o.engaged = v.engaged;
    o.engage_pending = v.engage_pending;
    o.camera = v.camera;
    o.last_pose_ref_seq = v.last_pose_ref_seq;
    o.device_force = v.device_force;
    o.telemetry = v.telemetry;
    o.exec_id = v.exec_id;
    o.exec_state = v.exec_state;
    o.age = p_.reaction_delay + (v.telemetry ? v.time - v.telemetry->sim_time : 0.0);
    if (v.telemetry) o.sample_estimate = v.telemetry->sample_pose.position + sample_bias_;
    o.hole_estimate = k_.slot_pose.position + hole_bias_;
    return o;
  }

  // -- stylus ----------------------------------------------------------------

  Vec3 tremor() const {
    const double w = 2.0 * std::numbers::pi * p_.tremor_frequency * now_;
    return p_.tremor_amplitude * Vec3(std::sin(w + tremor_phase_[0]), std::sin(w + tremor_phase_[1]),
                                      std::sin(w + tremor_phase_[2]));
  }

  hcs::StylusState stylus_output() const {
    hcs::StylusState s;
    s.pose = Pose(hand_ + tremor(), hand_orientation_);
    return s;
  }

  /// Moves the hand toward the goal at servo speed.
  void servo() {
    const Vec3 d = goal_ - hand_;
    const double step = p_.servo_speed * dt_;
    hand_ = d.norm() <= step ? goal_ : Vec3(hand_ + d * (step / d.norm()));
  }

  bool hand_arrived() const { return (goal_ - hand_).norm() < 1e-9; }

  Mat3 cam() const { return k_.mapping.camera_pose().rotation(); }
  Vec3 to_device(const Vec3& world) const { return cam().transpose() * world; }

  /// True once the newest reference has been echoed and the arm looked still for settle_time.
  bool settled(const Observation& o) {
    if (!hand_arrived() || !o.telemetry) {
      still_since_.reset();
      return false;
    }
    if (!arrival_seq_) arrival_seq_ = o.last_pose_ref_seq;
    if (o.telemetry->last_ref_seq < *arrival_seq_) return false;
    const Vec3 p = o.telemetry->ee_pose.position;
    if (!last_seen_ || (p - *last_seen_).norm() > 0.0005) {
      last_seen_ = p;
      still_since_ = o.time;
      return false;
    }
    return still_since_ && o.time - *still_since_ >= p_.settle_time;
  }

  void move_goal(const Vec3& device_delta) {
    goal_ += device_delta;
    arrival_seq_.reset();
    still_since_.reset();
    last_seen_.reset();
  }

  void start_stage(Stage s) {
    stage_ = s;
    stage_since_ = now_;
    arrival_seq_.reset();
    still_since_.reset();
    last_seen_.reset();
  }

  // -- behaviour -------------------------------------------------------------

  void give_up(const std::string& why, std::vector<station::Command>& out) {
    if (!give_up_.empty()) return;
    give_up_ = why;
    out.push_back(station::AbortRequest{"operator gave up: " + why});
  }

  void act(const Observation& o, std::vector<station::Command>& out) {
    const MissionPhase ph = o.mission.phase;
    if (ph != phase_) {
      phase_ = ph;
      phase_since_ = now_;
      plan_tries_ = 0;
      last_batch_.reset();
      start_stage(Stage::Idle);
    }
    switch (ph) {
      case MissionPhase::PreCollection:
      case MissionPhase::PreUtilization:
        if (!o.mission.plan_executed) autonomous(o, ph == MissionPhase::PreCollection ? "pre_collection" : "pre_utilization", out);
        else engage(o, ph == MissionPhase::PreCollection ? hcs::Camera::Rear : hcs::Camera::Front, out);
        break;
      case MissionPhase::Collection:
        if (!o.engaged) engage(o, hcs::Camera::Rear, out);
        else fetch(o, out);
        break;
      case MissionPhase::PostCollection:
        if (o.engaged) {
          if (!disengage_sent_) out.push_back(station::DisengageRequest{});
          disengage_sent_ = true;
        } else {
          disengage_sent_ = false;
          autonomous(o, "retract", out);
        }
        break;
      case MissionPhase::Utilization:
        if (!o.engaged) engage(o, hcs::Camera::Front, out);
        else assemble(o, out);
        break;
      case MissionPhase::PostUtilization:
        release(o, out);
        break;
    }
    if ((ph == MissionPhase::Collection || ph == MissionPhase::Utilization) && now_ - phase_since_ > p_.teleop_timeout)
      give_up("timeout in " + std::string(to_string(ph)), out);
  }

  void autonomous(const Observation& o, const char* goal, std::vector<station::Command>& out) {
    if (o.exec_state == link::ExecState::Running && o.exec_id != 0) return;
    // Wait long enough for the last batch to show up in the observation.
    if (last_batch_ && now_ - *last_batch_ < p_.reaction_delay + 1.0) return;
    if (plan_tries_ >= p_.plan_attempts) {
      give_up(std::string("could not plan/execute '") + goal + "'", out);
      return;
    }
    ++plan_tries_;
    last_batch_ = now_;
    out.push_back(station::PlanRequest{goal, std::nullopt});
    out.push_back(station::RehearseRequest{});
    out.push_back(station::ExecuteRequest{});
  }

  void engage(const Observation& o, hcs::Camera camera, std::vector<station::Command>& out) {
    if (o.engage_pending || !o.telemetry) return;
    if (last_engage_ && now_ - *last_engage_ < p_.reaction_delay + 0.5) return;
    last_engage_ = now_;
    if (o.camera != camera) out.push_back(station::SetCamera{camera});
    k_.mapping.active_camera = camera;
    // Align the stylus with what the camera shows, up to a small misalignment.
    const Quat aligned = k_.mapping.camera_pose().orientation.conjugate() * o.telemetry->ee_pose.orientation;
    hand_orientation_ = canonical(quat_from_axis_angle(misalign_axis_.normalized(), misalign_angle_) * aligned);
    hand_ = goal_ = Vec3(0.0, 0.0, p_.engage_height);
    stylus_dirty_ = true;
    out.push_back(station::StylusInput{stylus_output()});
    out.push_back(station::EngageRequest{});
    anchor_ee_.reset();
    start_stage(Stage::Idle);
  }

  void fetch(const Observation& o, std::vector<station::Command>& out) {
    if (!o.telemetry) return;
    const auto& t = *o.telemetry;
    servo();
    switch (stage_) {
      case Stage::Idle:
        start_stage(Stage::Align);
        move_goal(to_device(o.sample_estimate - t.ee_pose.position));
        close_hits_ = 0;
        break;
      case Stage::Align:
        if (!settled(o)) break;
        if ((o.sample_estimate - t.ee_pose.position).norm() < 0.8 * k_.capture_radius) {
          if (++close_hits_ >= 3) {
            out.push_back(station::GripperRequest{link::GripperAction::Close});
            start_stage(Stage::Grasping);
          }
        } else {
          close_hits_ = 0;
          move_goal(to_device(o.sample_estimate - t.ee_pose.position));
        }
        break;
      case Stage::Grasping:
        // The phase changes on success; a failed close shows up as an open gripper flagged failed.
        if (now_ - stage_since_ > k_.close_duration + o.age + 0.2 && t.gripper == Gripper::Open && t.grasp_failed)
          give_up("grasp failed", out);
        break;
      default: break;
    }
  }

  Vec3 peg_bottom(const link::Telemetry& t) const {
    return t.sample_pose.apply(Vec3(0, 0, -k_.sample_half_height));
  }
  double peg_depth(const link::Telemetry& t) const {
    return -inverse(k_.slot_pose).apply(peg_bottom(t)).z();
  }

  void comply(const Observation& o) {
    if (!p_.uses_force_feedback) return;
    Vec3 f = o.device_force;
    f.z() = 0.0;
    const Vec3 d = p_.compliance_gain * f * dt_;
    hand_ += d;
    goal_ += d;
  }

  void assemble(const Observation& o, std::vector<station::Command>& out) {
    if (!o.telemetry) return;
    const auto& t = *o.telemetry;
    const Vec3 bottom = peg_bottom(t);
    const double depth = peg_depth(t);
    const double fz = o.device_force.z();
    const double flat = std::hypot(o.device_force.x(), o.device_force.y());
    const bool ff = p_.uses_force_feedback;
    const double target_depth = k_.insertion_depth + 0.005;
    auto lateral_error = [&]() {
      Vec3 e = o.hole_estimate - bottom;
      e.z() = 0.0;
      return e;
    };

    switch (stage_) {
      case Stage::Idle:
        start_stage(Stage::Align);
        move_goal(to_device(lateral_error()));
        break;
      case Stage::Align:
        servo();
        if (!settled(o)) break;
        if (lateral_error().norm() > 0.0007) {
          move_goal(to_device(lateral_error()));
        } else {
          start_stage(Stage::Descend);
          pressed_ = 0.0;
          move_goal(to_device(Vec3(0, 0, -(target_depth - depth))));
        }
        break;
      case Stage::Descend:
        comply(o);
        if (ff && fz > p_.contact_force && depth < kEntered) {
          // Resting on the top face: stop, back off slightly and search.
          goal_ = hand_ + Vec3(0, 0, 0.002);
          search_centre_ = hand_;
          search_angle_ = 0.0;
          start_stage(Stage::Search);
          break;
        }
        if (depth > kEntered) {
          begin_insert(depth);
          break;
        }
        servo();
        if (settled(o)) press(o, out);
        break;
      case Stage::Search: {
        comply(o);
        if (depth > kEntered) {
          begin_insert(depth);
          break;
        }
        // Archimedean spiral about the starting point at constant path speed.
        const double a = p_.search_pitch / (2.0 * std::numbers::pi);
        const double r = std::max(a * search_angle_, 0.0005);
        search_angle_ += p_.search_speed * dt_ / r;
        const double rr = a * search_angle_;
        Vec3 g = search_centre_ + Vec3(rr * std::cos(search_angle_), rr * std::sin(search_angle_), 0.0);
        g.z() = goal_.z() + p_.force_regulation_gain * (fz - p_.light_contact) * dt_;
        goal_ = g;
        search_centre_.z() = g.z();
        hand_ = goal_;
        stylus_dirty_ = true;
        break;
      }
      case Stage::Insert: {
        comply(o);
        // Push on only while the walls are not pushing back sideways.
        const bool calm = !ff || flat < p_.lateral_ok;
        if (calm) servo();
        if (settled(o) && depth < k_.insertion_depth) press(o, out);
        break;
      }
      default: break;
    }
  }

  // Peg bottom this far below the mouth means it is in the chamfer or the hole.
  static constexpr double kEntered = 0.0012;

  void begin_insert(double depth) {
    const double target_depth = k_.insertion_depth + 0.005;
    goal_ = hand_;
    start_stage(Stage::Insert);
    move_goal(to_device(Vec3(0, 0, -std::max(0.0, target_depth - depth))));
  }

  /// The sample is not in yet although the hand is where it should be.
  void press(const Observation&, std::vector<station::Command>& out) {
    if (pressed_ >= p_.press_limit - 1e-12) {
      give_up("sample does not go in", out);
      return;
    }
    pressed_ += p_.press_step;
    move_goal(to_device(Vec3(0, 0, -p_.press_step)));
  }

  void release(const Observation& o, std::vector<station::Command>& out) {
    if (!o.telemetry) return;
    if (stage_ != Stage::Released) {
      comply(o);
      goal_ = hand_;
      const double flat = std::hypot(o.device_force.x(), o.device_force.y());
      if (!p_.uses_force_feedback || flat < p_.lateral_ok || now_ - phase_since_ > 5.0) {
        out.push_back(station::GripperRequest{link::GripperAction::Open});
        start_stage(Stage::Released);
      }
      return;
    }
    if (o.engaged && o.telemetry->gripper == Gripper::Open && !disengage_sent_) {
      out.push_back(station::DisengageRequest{});
      disengage_sent_ = true;
    }
  }

  OperatorParams p_;
  TaskKnowledge k_;
  double dt_;
  Rng rng_;
  Vec3 sample_bias_ = Vec3::Zero();
  Vec3 hole_bias_ = Vec3::Zero();
  Vec3 tremor_phase_ = Vec3::Zero();
  Vec3 misalign_axis_ = Vec3::UnitX();
  double misalign_angle_ = 0.0;

  std::deque<Observation> buffer_;
  std::optional<Observation> current_;
  double now_ = 0.0;

  MissionPhase phase_ = MissionPhase::PreCollection;
  double phase_since_ = 0.0;
  int plan_tries_ = 0;
  std::optional<double> last_batch_;
  std::optional<double> last_engage_;
  bool disengage_sent_ = false;

  Stage stage_ = Stage::Idle;
  double stage_since_ = 0.0;
  Vec3 hand_ = Vec3::Zero();  // intended stylus position (device frame)
  Vec3 goal_ = Vec3::Zero();
  Quat hand_orientation_ = Quat::Identity();
  bool stylus_dirty_ = false;
  std::optional<std::uint64_t> arrival_seq_;
  std::optional<double> still_since_;
  std::optional<Vec3> last_seen_;
  std::optional<Pose> anchor_ee_;
  int close_hits_ = 0;
  double pressed_ = 0.0;
  Vec3 search_centre_ = Vec3::Zero();
  double search_angle_ = 0.0;
  std::string give_up_;
};

/// Free-function form: one operator step against the station view.
inline std::vector<station::Command> operator_tick(VirtualOperator& op, const station::StationView& view) {
  return op.tick(view);
}

}  // namespace isru::op
