#pragma once

// Scripted controller that flies a whole mission through the station
// endpoint using only what the protocol exposes: the welcome message (camera
// frames, task geometry) and the snapshot stream. No virtual operator and no
// UI is involved.

#include "isru/station/protocol.hpp"
#include "isru/station/server.hpp"

#include <chrono>
#include <optional>
#include <string>
#include <vector>

namespace isru::station {

struct HeadlessOptions {
  double timeout_s = 120.0;    // wall clock
  double gain = 0.3;           // fraction of the remaining error commanded per snapshot
  double max_step = 0.005;     // m per snapshot
  double engage_height = 0.03; // stylus z at engagement
};

struct HeadlessResult {
  bool completed = false;
  std::string final_phase;
  std::vector<std::string> phases;  // every phase seen, in order
  std::vector<std::string> errors;  // failed replies and error messages
};

class HeadlessPilot {
 public:
  HeadlessPilot(StationClient& client, HeadlessOptions opt = {}) : c_(client), opt_(opt) {}

  HeadlessResult run() {
    HeadlessResult res;
    c_.send(ClientMessage{Hello{Role::Controller}});
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(opt_.timeout_s);
    while (std::chrono::steady_clock::now() < deadline) {
      auto m = c_.receive(0.5);
      if (!m) {
        if (c_.closed()) break;
        continue;
      }
      const std::string type = (*m)["type"].get<std::string>();
      if (type == "welcome") {
        on_welcome(*m);
      } else if (type == "error") {
        res.errors.push_back((*m)["code"].get<std::string>() + ": " + (*m)["message"].get<std::string>());
        if ((*m)["code"] == "EndpointBusy") break;
      } else if (type == "reply") {
        if (!(*m)["ok"].get<bool>()) {
          res.errors.push_back((*m)["verb"].get<std::string>() + ": " + (*m)["error"].get<std::string>());
          if ((*m)["verb"] == "execute_request" || (*m)["verb"] == "plan_request") batch_at_.reset();
          if ((*m)["verb"] == "engage_request") engage_at_.reset();
        }
      } else if (type == "snapshot" && have_welcome_) {
        const Json& v = (*m)["view"];
        const std::string phase = v["phase"].get<std::string>();
        if (res.phases.empty() || res.phases.back() != phase) res.phases.push_back(phase);
        res.final_phase = phase;
        if (v["completed"].get<bool>()) {
          res.completed = true;
          break;
        }
        if (v["failed"].get<bool>()) break;
        act((*m)["scene"], v);
      }
    }
    return res;
  }

 private:
  using Clock = std::chrono::steady_clock;

  static Pose pose_of(const Json& j) { return config::parse_pose(config::Node(j)); }
  static Vec3 vec_of(const Json& j) { return config::Node(j).vec3(); }

  void on_welcome(const Json& w) {
    const Json& s = w["session"];
    rear_ = pose_of(s["cameras"]["rear"]);
    front_ = pose_of(s["cameras"]["front"]);
    slot_ = pose_of(s["task"]["slot_pose"]);
    insertion_depth_ = s["task"]["insertion_depth_m"].get<double>();
    sample_half_ = vec_of(s["task"]["sample_half_extents_m"]);
    have_welcome_ = true;
  }

  bool waited(const std::optional<Clock::time_point>& t, double s) const {
    return !t || Clock::now() - *t > std::chrono::duration<double>(s);
  }

  void autonomous(const std::string& goal) {
    if (!waited(batch_at_, 2.0)) return;
    batch_at_ = Clock::now();
    c_.send(ClientMessage{Command{PlanRequest{goal, std::nullopt}}});
    c_.send(ClientMessage{Command{RehearseRequest{}}});
    c_.send(ClientMessage{Command{ExecuteRequest{}}});
  }

  void engage(const Json& scene, hcs::Camera cam) {
    if (!waited(engage_at_, 2.0)) return;
    engage_at_ = Clock::now();
    cam_ = cam == hcs::Camera::Rear ? rear_ : front_;
    const Quat ee = pose_of(scene["ee_pose"]).orientation;
    hcs::StylusState s;
    s.pose = Pose(Vec3(0, 0, opt_.engage_height), cam_.orientation.conjugate() * ee);
    c_.send(ClientMessage{Command{SetCamera{cam}}});
    c_.send(ClientMessage{Command{StylusInput{s}}});
    c_.send(ClientMessage{Command{EngageRequest{}}});
  }

  /// Moves the reference a fraction of the way to make `from` reach `to`.
  void steer(const Vec3& from, const Vec3& to) {
    Vec3 d = opt_.gain * (to - from);
    if (d.norm() > opt_.max_step) d *= opt_.max_step / d.norm();
    if (d.norm() < 1e-5) return;
    c_.send(ClientMessage{StylusDelta{cam_.rotation().transpose() * d, std::nullopt}});
  }

  void act(const Json& scene, const Json& v) {
    const std::string phase = v["phase"].get<std::string>();
    const bool engaged = v["engaged"].get<bool>();
    const bool pending = v["engage_pending"].get<bool>();
    const bool executed = v["plan_executed"].get<bool>();
    const bool running = v["exec_state"] == "running";
    if (phase != phase_) {
      phase_ = phase;
      batch_at_.reset();
      engage_at_.reset();
      gripper_at_.reset();
      disengaged_ = false;
    }
    const Pose ee = pose_of(scene["ee_pose"]);
    const Pose sample = pose_of(scene["sample_pose"]);

    if (phase == "pre_collection" || phase == "pre_utilization") {
      if (!executed) {
        if (!running) autonomous(phase);
      } else if (!engaged && !pending) {
        engage(scene, phase == "pre_collection" ? hcs::Camera::Rear : hcs::Camera::Front);
      }
    } else if (phase == "collection") {
      if (!engaged) {
        if (!pending) engage(scene, hcs::Camera::Rear);
        return;
      }
      const Vec3 err = sample.position - ee.position;
      if (err.norm() < 0.003) {
        if (waited(gripper_at_, 2.0)) {
          gripper_at_ = Clock::now();
          c_.send(ClientMessage{Command{GripperRequest{link::GripperAction::Close}}});
        }
      } else {
        steer(ee.position, sample.position);
      }
    } else if (phase == "post_collection") {
      if (engaged) {
        if (!disengaged_) c_.send(ClientMessage{Command{DisengageRequest{}}});
        disengaged_ = true;
      } else if (!running) {
        autonomous("retract");
      }
    } else if (phase == "utilization") {
      if (!engaged) {
        if (!pending) engage(scene, hcs::Camera::Front);
        return;
      }
      const Vec3 bottom = sample.apply(Vec3(0, 0, -sample_half_.z()));
      const Vec3 b = inverse(slot_).apply(bottom);
      Vec3 target = b;
      target.x() = 0.0;
      target.y() = 0.0;
      // Descend only once centred over the hole.
      if (std::hypot(b.x(), b.y()) < 0.0005) target.z() = -(insertion_depth_ + 0.005);
      steer(slot_.rotation() * b, slot_.rotation() * target);
    } else if (phase == "post_utilization") {
      if (waited(gripper_at_, 2.0)) {
        gripper_at_ = Clock::now();
        c_.send(ClientMessage{Command{GripperRequest{link::GripperAction::Open}}});
      }
    }
  }

  StationClient& c_;
  HeadlessOptions opt_;
  bool have_welcome_ = false;
  Pose rear_, front_, slot_, cam_;
  double insertion_depth_ = 0.03;
  Vec3 sample_half_ = Vec3::Zero();
  std::string phase_;
  std::optional<Clock::time_point> batch_at_, engage_at_, gripper_at_;
  bool disengaged_ = false;
};

}  // namespace isru::station
