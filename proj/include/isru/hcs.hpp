#pragma once

// Master-side haptic control: engagement, relative 1:1 mapping through the
// active camera frame, force feedback with payload compensation, and the
// tremor filter.

#include "isru/config.hpp"
#include "isru/errors.hpp"
#include "isru/geometry.hpp"

#include <cmath>
#include <numbers>
#include <optional>

namespace isru::hcs {

struct StylusState {
  Pose pose;  // haptic device frame
  bool button = false;
};

enum class Camera : std::uint8_t { Rear = 0, Front = 1 };

inline const char* to_string(Camera c) { return c == Camera::Rear ? "rear" : "front"; }

struct MappingConfig {
  double position_scale = 1.0;
  double force_scale = 0.1;
  Camera active_camera = Camera::Rear;
  // Device axes seen from each camera, expressed in the world frame. Only the
  // rotation matters for the relative mapping.
  Pose rear_camera = Pose::from_rotation(quat_from_axis_angle(Vec3::UnitZ(), std::numbers::pi));
  Pose front_camera = Pose::identity();
  double payload_mass = 0.2;  // kg
  bool orientation_lock = false;

  const Pose& camera_pose() const { return active_camera == Camera::Rear ? rear_camera : front_camera; }

  void validate() const {
    if (position_scale != 1.0) throw BadConfig("hcs: position_scale is fixed at 1.0");
    if (!(force_scale > 0.0 && force_scale <= 1.0)) throw BadConfig("hcs: force_scale must be in (0, 1]");
    if (!(payload_mass >= 0.0)) throw BadConfig("hcs: payload_mass must be >= 0");
  }
};

/// Axis-aligned device workspace centred on the device origin.
struct DeviceWorkspace {
  Vec3 half_extents{0.08, 0.06, 0.035};

  bool contains(const Vec3& p) const { return (p.cwiseAbs().array() <= half_extents.array()).all(); }
  Vec3 clamp(const Vec3& p) const { return p.cwiseMax(-half_extents).cwiseMin(half_extents); }
};

struct EngagementState {
  bool engaged = false;
  std::optional<Pose> anchor_stylus;
  std::optional<Pose> anchor_ee;
};

/// Stylus orientation expressed in the world through the camera rotation.
inline Quat stylus_world_orientation(const MappingConfig& cfg, const Quat& stylus) {
  const Quat c = cfg.camera_pose().orientation;
  return canonical(c * stylus);
}

struct EngageResult {
  EngagementState state;
  bool accepted = false;
  double orientation_error = 0.0;
};

/// Accepts iff the stylus and end-effector orientations match within tol.
inline EngageResult try_engage(const EngagementState& est, const StylusState& stylus, const Pose& ee_pose, double tol,
                               const MappingConfig& cfg = {}) {
  if (est.engaged) throw AlreadyEngaged("engage: already engaged");
  EngageResult r;
  r.state = est;
  r.orientation_error = orientation_error(stylus_world_orientation(cfg, stylus.pose.orientation), ee_pose.orientation);
  if (r.orientation_error <= tol) {
    r.accepted = true;
    r.state.engaged = true;
    r.state.anchor_stylus = stylus.pose;
    r.state.anchor_ee = ee_pose;
  }
  return r;
}

inline EngagementState disengage(const EngagementState& est) {
  if (!est.engaged) throw NotEngaged("disengage: not engaged");
  return {};
}

/// End-effector reference for the stylus pose: anchor_ee displaced by the
/// stylus displacement rotated into the world by the camera frame.
inline Pose map_position(const EngagementState& est, const MappingConfig& cfg, const StylusState& stylus) {
  if (!est.engaged) throw NotEngaged("map_position: not engaged");
  const Quat c = cfg.camera_pose().orientation;
  const Vec3 d = cfg.position_scale * (stylus.pose.position - est.anchor_stylus->position);
  const Vec3 p = est.anchor_ee->position + c * d;
  if (cfg.orientation_lock) return Pose(p, est.anchor_ee->orientation);
  const Quat delta_dev = stylus.pose.orientation * est.anchor_stylus->orientation.conjugate();
  const Quat delta_world = c * delta_dev * c.conjugate();
  return Pose(p, delta_world * est.anchor_ee->orientation);
}

/// Force rendered at the device (device frame, N).
inline Vec3 map_force(const MappingConfig& cfg, const Wrench& wrench, bool holding) {
  Vec3 f = wrench.force;
  if (holding) f -= Vec3(0, 0, -cfg.payload_mass * kGravity);
  return cfg.force_scale * (cfg.camera_pose().orientation.conjugate() * f);
}

/// First-order low-pass, zero-order-hold discretization:
///   y += a (x - y),  a = 1 - exp(-2 pi fc dt).
/// Orientation follows by slerp with the same factor.
class TremorFilter {
 public:
  explicit TremorFilter(double cutoff_hz = 2.0) : cutoff_(cutoff_hz) {
    if (!(cutoff_hz > 0.0)) throw BadConfig("tremor filter: cutoff must be > 0");
  }

  double cutoff() const { return cutoff_; }
  double alpha(double dt) const { return 1.0 - std::exp(-2.0 * std::numbers::pi * cutoff_ * dt); }

  void reset(const Pose& p) { y_ = p; }
  bool primed() const { return y_.has_value(); }

  Pose filter(const Pose& raw, double dt) {
    if (!y_) {
      y_ = raw;
      return raw;
    }
    const double a = alpha(dt);
    const Vec3 p = y_->position + a * (raw.position - y_->position);
    const Quat q = y_->orientation.slerp(a, raw.orientation);
    y_ = Pose(p, q);
    return *y_;
  }

 private:
  double cutoff_;
  std::optional<Pose> y_;
};

inline Pose filter_tremor(TremorFilter& f, const Pose& raw, double dt) { return f.filter(raw, dt); }

struct HcsConfig {
  MappingConfig mapping;
  DeviceWorkspace workspace;
  double tremor_cutoff_hz = 2.0;
  bool tremor_filter_enabled = true;
  double engage_tolerance = 0.15;  // rad
};

/// Station-side haptic controller.
class Hcs {
 public:
  explicit Hcs(HcsConfig cfg = {}) : cfg_(std::move(cfg)), filter_(cfg_.tremor_cutoff_hz) { cfg_.mapping.validate(); }

  const HcsConfig& config() const { return cfg_; }
  const EngagementState& engagement() const { return est_; }
  bool engaged() const { return est_.engaged; }
  bool workspace_clamped() const { return clamped_; }
  double last_orientation_error() const { return last_error_; }

  void set_camera(Camera c) {
    if (est_.engaged) throw AlreadyEngaged("set_camera: disengage before switching cameras");
    cfg_.mapping.active_camera = c;
  }
  Camera camera() const { return cfg_.mapping.active_camera; }

  /// Tries to engage at the stylus pose against the observed end-effector pose.
  bool engage(const StylusState& stylus, const Pose& ee_pose) {
    StylusState s = stylus;
    s.pose.position = cfg_.workspace.clamp(s.pose.position);
    const auto r = try_engage(est_, s, ee_pose, cfg_.engage_tolerance, cfg_.mapping);
    last_error_ = r.orientation_error;
    if (r.accepted) {
      est_ = r.state;
      filter_.reset(s.pose);
    }
    return r.accepted;
  }

  void disengage() { est_ = hcs::disengage(est_); }

  /// Reference for this tick, or nothing while disengaged.
  std::optional<Pose> update(const StylusState& stylus, double dt) {
    StylusState s = stylus;
    clamped_ = !cfg_.workspace.contains(s.pose.position);
    s.pose.position = cfg_.workspace.clamp(s.pose.position);
    if (!est_.engaged) return std::nullopt;
    if (cfg_.tremor_filter_enabled) s.pose = filter_.filter(s.pose, dt);
    return map_position(est_, cfg_.mapping, s);
  }

  Vec3 feedback(const Wrench& wrench, bool holding) const { return map_force(cfg_.mapping, wrench, holding); }

 private:
  HcsConfig cfg_;
  TremorFilter filter_;
  EngagementState est_;
  bool clamped_ = false;
  double last_error_ = 0.0;
};

}  // namespace isru::hcs
