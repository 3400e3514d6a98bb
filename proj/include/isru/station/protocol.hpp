#pragma once

// Client protocol of the station endpoint. Every message is one JSON object
// in a frame of a 4-byte big-endian length followed by that many bytes of
// UTF-8 JSON. Every object carries "v" (protocol version) and "type".
//
// Client -> station:  hello, stylus_input, engage_request, disengage,
//                     plan_request, rehearse_request, execute_request,
//                     set_camera, gripper, abort
// Station -> client:  welcome, reply, snapshot, error

#include "isru/config.hpp"
#include "isru/errors.hpp"
#include "isru/rvp/scene.hpp"
#include "isru/station/command.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace isru::station {

using config::Json;

inline constexpr int kProtocolVersion = 1;
inline constexpr std::size_t kMaxFrameBytes = 4u << 20;

// ---------------------------------------------------------------------------
// Framing

inline std::string encode_frame(const Json& j) {
  const std::string body = j.dump();
  if (body.size() > kMaxFrameBytes) throw MalformedFrame("frame: message too large");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((n >> shift) & 0xff));
  out += body;
  return out;
}

/// Accumulates stream bytes and yields complete messages.
class FrameReader {
 public:
  void feed(std::string_view bytes) { buf_.append(bytes); }

  /// Next complete message, if any. Throws MalformedFrame on an oversize
  /// length or a body that is not a JSON object.
  std::optional<Json> next() {
    if (buf_.size() < 4) return std::nullopt;
    std::uint32_t n = 0;
    for (int i = 0; i < 4; ++i) n = (n << 8) | static_cast<std::uint8_t>(buf_[static_cast<std::size_t>(i)]);
    if (n > kMaxFrameBytes) throw MalformedFrame("frame: length " + std::to_string(n) + " exceeds the limit");
    if (buf_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
    const std::string body = buf_.substr(4, n);
    buf_.erase(0, 4 + static_cast<std::size_t>(n));
    Json j = Json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw MalformedFrame("frame: body is not a JSON object");
    return j;
  }

  std::size_t buffered() const { return buf_.size(); }

 private:
  std::string buf_;
};

// ---------------------------------------------------------------------------
// Client messages

enum class Role { Controller, Viewer };

inline const char* to_string(Role r) { return r == Role::Controller ? "controller" : "viewer"; }

struct Hello {
  Role role = Role::Viewer;
  bool operator==(const Hello&) const = default;
};

/// Relative stylus move, applied to the station's current stylus pose.
struct StylusDelta {
  Vec3 delta = Vec3::Zero();  // m, device frame
  std::optional<bool> button;
  bool operator==(const StylusDelta&) const = default;
};

using ClientMessage = std::variant<Hello, StylusDelta, Command>;

inline const std::vector<std::string>& client_verbs() {
  static const std::vector<std::string> v{"hello",          "stylus_input",     "engage_request",
                                          "disengage",      "plan_request",     "rehearse_request",
                                          "execute_request", "set_camera",      "gripper",
                                          "abort"};
  return v;
}

/// Throws VersionMismatch for a wrong "v" and BadConfig (with the field path)
/// for unknown verbs or bad fields.
inline ClientMessage parse_client_message(const Json& j) {
  const config::Node n(j);
  if (!j.is_object()) n.fail("expected an object");
  if (!n.has("v")) n.fail("missing protocol version 'v'");
  if (n["v"].integer() != kProtocolVersion)
    throw VersionMismatch("protocol version " + std::to_string(n["v"].integer()) + ", expected " +
                          std::to_string(kProtocolVersion));
  const std::string type = n["type"].string();
  if (type == "hello") {
    const std::string role = n["role"].string();
    if (role == "controller") return Hello{Role::Controller};
    if (role == "viewer") return Hello{Role::Viewer};
    n["role"].fail("expected 'controller' or 'viewer'");
  }
  if (type == "stylus_input") {
    std::optional<bool> button;
    if (n.has("button")) button = n["button"].boolean();
    if (n.has("delta_m")) {
      if (n.has("pose")) n.fail("give either 'pose' or 'delta_m', not both");
      return StylusDelta{n["delta_m"].vec3(), button};
    }
    hcs::StylusState s;
    s.pose = config::parse_pose(n["pose"]);
    s.button = button.value_or(false);
    return Command{StylusInput{s}};
  }
  if (type == "engage_request") return Command{EngageRequest{}};
  if (type == "disengage") return Command{DisengageRequest{}};
  if (type == "plan_request") {
    PlanRequest p;
    p.goal = n.has("goal") ? n["goal"].string() : std::string{};
    if (n.has("pose")) p.pose = config::parse_pose(n["pose"]);
    if (p.goal.empty() && !p.pose) n.fail("plan_request needs 'goal' or 'pose'");
    return Command{p};
  }
  if (type == "rehearse_request") return Command{RehearseRequest{}};
  if (type == "execute_request") return Command{ExecuteRequest{}};
  if (type == "set_camera") {
    const std::string c = n["camera"].string();
    if (c == "rear") return Command{SetCamera{hcs::Camera::Rear}};
    if (c == "front") return Command{SetCamera{hcs::Camera::Front}};
    n["camera"].fail("expected 'rear' or 'front'");
  }
  if (type == "gripper") {
    const std::string a = n["action"].string();
    if (a == "open") return Command{GripperRequest{link::GripperAction::Open}};
    if (a == "close") return Command{GripperRequest{link::GripperAction::Close}};
    n["action"].fail("expected 'open' or 'close'");
  }
  if (type == "abort") return Command{AbortRequest{n.has("reason") ? n["reason"].string() : "client abort"}};
  n["type"].fail("unknown verb '" + type + "'");
}

inline Json client_message_to_json(const ClientMessage& m) {
  Json j{{"v", kProtocolVersion}};
  std::visit(
      [&](const auto& x) {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, Hello>) {
          j["type"] = "hello";
          j["role"] = to_string(x.role);
        } else if constexpr (std::is_same_v<T, StylusDelta>) {
          j["type"] = "stylus_input";
          j["delta_m"] = {x.delta.x(), x.delta.y(), x.delta.z()};
          if (x.button) j["button"] = *x.button;
        } else {
          std::visit(
              [&](const auto& c) {
                using C = std::decay_t<decltype(c)>;
                if constexpr (std::is_same_v<C, StylusInput>) {
                  j["type"] = "stylus_input";
                  j["pose"] = config::pose_to_json_exact(c.stylus.pose);
                  j["button"] = c.stylus.button;
                } else if constexpr (std::is_same_v<C, EngageRequest>) {
                  j["type"] = "engage_request";
                } else if constexpr (std::is_same_v<C, DisengageRequest>) {
                  j["type"] = "disengage";
                } else if constexpr (std::is_same_v<C, PlanRequest>) {
                  j["type"] = "plan_request";
                  if (!c.goal.empty()) j["goal"] = c.goal;
                  if (c.pose) j["pose"] = config::pose_to_json_exact(*c.pose);
                } else if constexpr (std::is_same_v<C, RehearseRequest>) {
                  j["type"] = "rehearse_request";
                } else if constexpr (std::is_same_v<C, ExecuteRequest>) {
                  j["type"] = "execute_request";
                } else if constexpr (std::is_same_v<C, SetCamera>) {
                  j["type"] = "set_camera";
                  j["camera"] = hcs::to_string(c.camera);
                } else if constexpr (std::is_same_v<C, GripperRequest>) {
                  j["type"] = "gripper";
                  j["action"] = c.action == link::GripperAction::Close ? "close" : "open";
                } else if constexpr (std::is_same_v<C, AbortRequest>) {
                  j["type"] = "abort";
                  j["reason"] = c.reason;
                }
              },
              x);
        }
      },
      m);
  return j;
}

/// Verb name of a client message, as used in replies.
inline std::string verb_of(const ClientMessage& m) { return client_message_to_json(m)["type"].get<std::string>(); }

// ---------------------------------------------------------------------------
// Station messages

inline Json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

inline const char* to_string(link::ExecState s) {
  switch (s) {
    case link::ExecState::Idle: return "idle";
    case link::ExecState::Running: return "running";
    case link::ExecState::Completed: return "completed";
    case link::ExecState::Aborted: return "aborted";
  }
  return "?";
}

inline Json telemetry_to_json(const link::Telemetry& t) {
  Json joints = Json::array();
  for (Eigen::Index i = 0; i < t.joints.size(); ++i) joints.push_back(t.joints[i]);
  return {{"sim_time_s", t.sim_time},
          {"ee_pose", config::pose_to_json_exact(t.ee_pose)},
          {"force_n", vec_json(t.wrench.force)},
          {"torque_nm", vec_json(t.wrench.torque)},
          {"joints_rad", std::move(joints)},
          {"phase", std::string(to_string(t.phase))},
          {"gripper", to_string(t.gripper)},
          {"safety_tripped", t.safety_tripped},
          {"grasp_failed", t.grasp_failed},
          {"last_ref_seq", t.last_ref_seq},
          {"exec_id", t.exec_id},
          {"exec_state", to_string(t.exec_state)},
          {"sample_pose", config::pose_to_json_exact(t.sample_pose)}};
}

inline Json view_to_json(const StationView& v) {
  Json j{{"tick", v.tick},
         {"time_s", v.time},
         {"phase", std::string(to_string(v.mission.phase))},
         {"completed", v.mission.completed},
         {"failed", v.mission.failed},
         {"plan_executed", v.mission.plan_executed},
         {"force_feedback", v.force_feedback},
         {"engaged", v.engaged},
         {"engage_pending", v.engage_pending},
         {"camera", hcs::to_string(v.camera)},
         {"orientation_error_rad", v.orientation_error},
         {"workspace_clamped", v.workspace_clamped},
         {"stylus", {{"pose", config::pose_to_json_exact(v.stylus.pose)}, {"button", v.stylus.button}}},
         {"last_pose_ref_seq", v.last_pose_ref_seq},
         {"device_force_n", vec_json(v.device_force)},
         {"exec_id", v.exec_id},
         {"exec_state", to_string(v.exec_state)},
         {"last_error", v.last_error},
         {"fetched", v.fetched}};
  j["telemetry"] = v.telemetry ? telemetry_to_json(*v.telemetry) : Json(nullptr);
  if (v.plan) {
    j["plan"] = {{"trajectory_id", v.plan->id},
                 {"planner", v.plan->planner},
                 {"waypoints", v.plan->waypoints.size()},
                 {"duration_s", v.plan->duration()},
                 {"world_hash", v.plan->world_hash}};
  } else {
    j["plan"] = nullptr;
  }
  if (v.rehearsal) {
    const auto& r = *v.rehearsal;
    Json rj{{"passed", r.passed()},
            {"collision_free", r.collision_free},
            {"world_hash_matches", r.world_hash_matches},
            {"samples", r.samples},
            {"limit_violations", r.limit_violations.size()}};
    rj["min_clearance_m"] = std::isfinite(r.min_clearance) ? Json(r.min_clearance) : Json(nullptr);
    if (r.first_violation)
      rj["first_violation"] = {{"time_s", r.first_violation->time},
                               {"pair", r.first_violation->pair},
                               {"distance_m", r.first_violation->distance}};
    j["rehearsal"] = std::move(rj);
  } else {
    j["rehearsal"] = nullptr;
  }
  return j;
}

struct SessionInfo {
  std::string scenario;
  bool force_feedback = true;
  double delay_s = 0.0;
  double dt_s = 0.01;
  double time_scale = 1.0;
  double snapshot_hz = 20.0;
  Pose rear_camera;   // device axes seen from each camera, world frame
  Pose front_camera;
  Pose slot_pose;     // centre of the hole mouth
  double hole_width = 0.0;
  double insertion_depth = 0.0;
  Vec3 sample_half_extents = Vec3::Zero();
};

inline Json welcome_message(Role role, const SessionInfo& s) {
  return {{"v", kProtocolVersion},
          {"type", "welcome"},
          {"role", to_string(role)},
          {"session",
           {{"scenario", s.scenario},
            {"force_feedback", s.force_feedback},
            {"delay_s", s.delay_s},
            {"dt_s", s.dt_s},
            {"time_scale", s.time_scale},
            {"snapshot_hz", s.snapshot_hz},
            {"cameras",
             {{"rear", config::pose_to_json_exact(s.rear_camera)}, {"front", config::pose_to_json_exact(s.front_camera)}}},
            {"task",
             {{"slot_pose", config::pose_to_json_exact(s.slot_pose)},
              {"hole_width_m", s.hole_width},
              {"insertion_depth_m", s.insertion_depth},
              {"sample_half_extents_m", vec_json(s.sample_half_extents)}}}}}};
}

inline Json reply_message(const std::string& verb, const Reply& r) {
  Json j{{"v", kProtocolVersion}, {"type", "reply"}, {"verb", verb}, {"ok", r.ok}};
  if (!r.ok) j["error"] = r.error;
  return j;
}

inline Json error_message(const std::string& code, const std::string& text) {
  return {{"v", kProtocolVersion}, {"type", "error"}, {"code", code}, {"message", text}};
}

inline Json snapshot_message(const SceneSnapshot& scene, const StationView& view) {
  return {{"v", kProtocolVersion},
          {"type", "snapshot"},
          {"scene", config::scene_to_json(scene)},
          {"view", view_to_json(view)}};
}

}  // namespace isru::station
