#pragma once

// Structured-text configuration files (JSON, explicit units in key names,
// versioned by `format_version`). Errors carry the JSON path of the bad field.

#include "isru/collision.hpp"
#include "isru/errors.hpp"
#include "isru/kinematics.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace isru::config {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

/// Default directory of the bundled config files.
inline std::filesystem::path bundled_dir() {
#ifdef ISRU_CONFIG_DIR
  return ISRU_CONFIG_DIR;
#else
  return "config";
#endif
}

inline Json load_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw BadConfig(path.string() + ": cannot open");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw BadConfig(path.string() + ": " + e.what());
  }
}

/// Cursor into a JSON document that remembers its path for error messages.
class Node {
 public:
  Node(const Json& j, std::string path = "$") : j_(&j), path_(std::move(path)) {}

  const Json& raw() const { return *j_; }
  const std::string& path() const { return path_; }

  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  Node operator[](const std::string& key) const {
    if (!j_->is_object() || !j_->contains(key)) fail(path_ + "." + key, "missing field");
    return Node(j_->at(key), path_ + "." + key);
  }

  Node operator[](std::size_t i) const {
    if (!j_->is_array() || i >= j_->size()) fail(path_ + "[" + std::to_string(i) + "]", "missing element");
    return Node(j_->at(i), path_ + "[" + std::to_string(i) + "]");
  }

  std::size_t size() const {
    if (!j_->is_array()) fail(path_, "expected an array");
    return j_->size();
  }

  double number() const {
    if (!j_->is_number()) fail(path_, "expected a number");
    return j_->get<double>();
  }

  double positive() const {
    const double v = number();
    if (!(v > 0.0)) fail(path_, "must be > 0");
    return v;
  }

  double non_negative() const {
    const double v = number();
    if (!(v >= 0.0)) fail(path_, "must be >= 0");
    return v;
  }

  std::int64_t integer() const {
    if (!j_->is_number_integer()) fail(path_, "expected an integer");
    return j_->get<std::int64_t>();
  }

  std::uint64_t unsigned_integer() const {
    if (!j_->is_number_unsigned() && !(j_->is_number_integer() && j_->get<std::int64_t>() >= 0))
      fail(path_, "expected a non-negative integer");
    return j_->get<std::uint64_t>();
  }

  bool boolean() const {
    if (!j_->is_boolean()) fail(path_, "expected a boolean");
    return j_->get<bool>();
  }

  std::string string() const {
    if (!j_->is_string()) fail(path_, "expected a string");
    return j_->get<std::string>();
  }

  Vec3 vec3() const {
    if (!j_->is_array() || j_->size() != 3) fail(path_, "expected [x, y, z]");
    return {(*this)[0].number(), (*this)[1].number(), (*this)[2].number()};
  }

  Eigen::VectorXd vector() const {
    Eigen::VectorXd v(static_cast<Eigen::Index>(size()));
    for (std::size_t i = 0; i < size(); ++i) v[static_cast<Eigen::Index>(i)] = (*this)[i].number();
    return v;
  }

  [[noreturn]] void fail(const std::string& msg) const { fail(path_, msg); }

  [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
    throw BadConfig(path + ": " + msg);
  }

 private:
  const Json* j_;
  std::string path_;
};

inline void check_version(const Node& root, const std::string& kind) {
  if (root["format_version"].integer() != kFormatVersion)
    root["format_version"].fail("unsupported format_version (expected " + std::to_string(kFormatVersion) + ")");
  if (root.has("kind") && root["kind"].string() != kind) root["kind"].fail("expected kind '" + kind + "'");
}

inline Pose parse_pose(const Node& n) {
  const Vec3 xyz = n.has("xyz_m") ? n["xyz_m"].vec3() : Vec3::Zero();
  if (n.has("quat_xyzw")) {
    const Node q = n["quat_xyzw"];
    if (q.size() != 4) q.fail("expected [x, y, z, w]");
    Quat r(q[3].number(), q[0].number(), q[1].number(), q[2].number());
    if (!(std::abs(r.norm() - 1.0) < 1e-6)) q.fail("quaternion must be unit length");
    return Pose(xyz, r);
  }
  const Vec3 rpy = n.has("rpy_rad") ? n["rpy_rad"].vec3() : Vec3::Zero();
  return Pose::from_xyz_rpy(xyz, rpy);
}

inline Json pose_to_json(const Pose& p) {
  const Vec3 rpy = p.rotation().eulerAngles(2, 1, 0);  // yaw, pitch, roll
  return {{"xyz_m", {p.position.x(), p.position.y(), p.position.z()}},
          {"rpy_rad", {rpy[2], rpy[1], rpy[0]}}};
}

inline CollisionPrimitive parse_primitive(const Node& n, int attachment) {
  CollisionPrimitive p;
  p.name = n.has("name") ? n["name"].string() : std::string{};
  p.attachment = attachment;
  p.local_pose = n.has("pose") ? parse_pose(n["pose"]) : Pose{};
  const std::string shape = n["shape"].string();
  if (shape == "sphere") {
    p.shape = Sphere{n["radius_m"].positive()};
  } else if (shape == "capsule") {
    p.shape = Capsule{n["radius_m"].positive(), n["half_length_m"].positive()};
  } else if (shape == "box") {
    const Vec3 h = n["half_extents_m"].vec3();
    if (!(h.minCoeff() > 0.0)) n["half_extents_m"].fail("must be > 0");
    p.shape = Box{h};
  } else {
    n["shape"].fail("unknown shape '" + shape + "'");
  }
  return p;
}

inline ArmModel parse_arm(const Json& j) {
  const Node root(j);
  check_version(root, "arm_model");
  ArmModel arm;
  arm.format_version = static_cast<int>(root["format_version"].integer());
  arm.name = root.has("name") ? root["name"].string() : "arm";
  arm.base = root.has("base") ? parse_pose(root["base"]) : Pose{};
  const Node joints = root["joints"];
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const Node jn = joints[i];
    JointSpec js;
    js.name = jn.has("name") ? jn["name"].string() : "joint" + std::to_string(i + 1);
    js.origin = parse_pose(jn["origin"]);
    js.axis = jn.has("axis") ? jn["axis"].vec3() : Vec3::UnitZ();
    js.lower = jn["limits_rad"][0].number();
    js.upper = jn["limits_rad"][1].number();
    if (!(js.lower < js.upper)) jn["limits_rad"].fail("lower must be < upper");
    arm.joints.push_back(js);
  }
  arm.ee_offset = parse_pose(root["ee_offset"]);
  arm.home = root["home_rad"].vector();
  if (root.has("collision_bodies")) {
    const Node bodies = root["collision_bodies"];
    for (std::size_t i = 0; i < bodies.size(); ++i) {
      const Node b = bodies[i];
      const auto link = b["link"].integer();
      if (link < 0 || link > static_cast<std::int64_t>(arm.dof())) b["link"].fail("no such link");
      arm.bodies.push_back(parse_primitive(b, static_cast<int>(link)));
    }
  }
  if (root.has("self_collision_ignore")) {
    const Node ig = root["self_collision_ignore"];
    for (std::size_t i = 0; i < ig.size(); ++i)
      arm.ignore_pairs.emplace_back(static_cast<int>(ig[i][0].integer()), static_cast<int>(ig[i][1].integer()));
  }
  try {
    arm.validate();
  } catch (const BadConfig& e) {
    throw BadConfig(std::string("$: ") + e.what());
  }
  return arm;
}

inline ArmModel load_arm(const std::filesystem::path& path) { return parse_arm(load_json_file(path)); }

inline ArmModel default_arm() { return load_arm(bundled_dir() / "arm_panda_like.json"); }

inline std::vector<CollisionPrimitive> parse_world(const Json& j) {
  const Node root(j);
  check_version(root, "world");
  std::vector<CollisionPrimitive> out;
  const Node obstacles = root["obstacles"];
  for (std::size_t i = 0; i < obstacles.size(); ++i) out.push_back(parse_primitive(obstacles[i], kWorldAttachment));
  return out;
}

inline std::vector<CollisionPrimitive> load_world(const std::filesystem::path& path) {
  return parse_world(load_json_file(path));
}

/// Exact form (quaternion), used where values must round-trip.
inline Json pose_to_json_exact(const Pose& p) {
  return {{"xyz_m", {p.position.x(), p.position.y(), p.position.z()}},
          {"quat_xyzw", {p.orientation.x(), p.orientation.y(), p.orientation.z(), p.orientation.w()}}};
}

inline Json primitive_to_json(const CollisionPrimitive& p) {
  Json j;
  j["name"] = p.name;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          j["shape"] = "sphere";
          j["radius_m"] = s.radius;
        } else if constexpr (std::is_same_v<T, Capsule>) {
          j["shape"] = "capsule";
          j["radius_m"] = s.radius;
          j["half_length_m"] = s.half_length;
        } else {
          j["shape"] = "box";
          j["half_extents_m"] = {s.half_extents.x(), s.half_extents.y(), s.half_extents.z()};
        }
      },
      p.shape);
  j["pose"] = pose_to_json_exact(p.local_pose);
  return j;
}

}  // namespace isru::config
