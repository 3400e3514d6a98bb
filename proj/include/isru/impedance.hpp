#pragma once

// Slave-side simulation: a 6-DOF virtual mass at the grasp frame under
// Cartesian impedance control, a peg-in-hole contact model, the gripper and
// the safety monitor.
//
// Stepping is a pure function of (model, state, reference, dt). The
// spring-damper part is integrated linearly implicitly (backward Euler), the
// contact wrench is evaluated explicitly at the start of the step.

#include "isru/config.hpp"
#include "isru/errors.hpp"
#include "isru/geometry.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace isru {

struct ImpedanceParams {
  Vec6 stiffness;     // N/m x3, N m/rad x3
  Vec6 damping;       // N s/m x3, N m s/rad x3
  Vec6 virtual_mass;  // kg x3, kg m^2 x3

  static Vec6 critical_damping(const Vec6& k, const Vec6& m) {
    return (2.0 * (k.array() * m.array()).sqrt()).matrix();
  }

  static ImpedanceParams defaults() {
    ImpedanceParams p;
    p.stiffness << 600, 600, 600, 30, 30, 30;
    p.virtual_mass << 5, 5, 5, 0.5, 0.5, 0.5;
    p.damping = critical_damping(p.stiffness, p.virtual_mass);
    return p;
  }

  void validate() const {
    if (!(stiffness.minCoeff() > 0.0) || !(damping.minCoeff() > 0.0) || !(virtual_mass.minCoeff() > 0.0))
      throw BadConfig("impedance: all entries must be > 0");
    const Vec6 crit = critical_damping(stiffness, virtual_mass);
    for (int i = 0; i < 6; ++i)
      if (damping[i] < 0.7 * crit[i]) throw BadConfig("impedance: damping below 0.7 of critical on axis " + std::to_string(i));
  }
};

struct SafetyMonitor {
  double force_limit = 30.0;   // N
  double torque_limit = 10.0;  // N m

  void validate() const {
    if (!(force_limit > 0.0) || !(torque_limit > 0.0)) throw BadConfig("safety: limits must be > 0");
  }
};

/// Tripped iff the force or torque norm exceeds its limit.
inline bool check_safety(const SafetyMonitor& m, const Wrench& w) {
  return w.force.norm() > m.force_limit || w.torque.norm() > m.torque_limit;
}

/// Scene around the arm. The hole's axis is the slot frame's z axis and
/// slot_pose sits at the centre of the hole mouth.
struct EnvModel {
  double ground_height = -0.30;         // m, world z
  Vec3 sample_half_extents{0.015, 0.015, 0.05};
  Pose sample_pose{Vec3(-0.42, 0.0, -0.25), Quat::Identity()};
  double sample_mass = 0.2;             // kg
  Pose slot_pose{Vec3(0.45, 0.0, 0.085), Quat::Identity()};
  double hole_width = 0.032;            // m, square cross-section
  double clearance = 0.002;             // m, hole_width - sample width
  double hole_depth = 0.05;             // m
  double chamfer = 0.0025;              // m, 45 degree lead-in at the mouth
  double slot_half_width = 0.05;        // m, outer half width of the slot block
  double wall_stiffness = 20000.0;      // N/m
  double wall_damping = 50.0;           // N s/m
  double capture_radius = 0.01;         // m
  double capture_angle = 0.2;           // rad
  double close_duration = 0.3;          // s, gripper closing time before the grasp is decided
  double finger_reach = 0.015;          // m, fingertips ahead of the grasp frame along its z
  double insertion_depth = 0.03;        // m, depth counted as assembled

  double sample_width() const { return 2.0 * sample_half_extents.x(); }

  void validate() const {
    if (!(clearance > 0.0)) throw BadConfig("env: clearance must be > 0");
    if (!(sample_half_extents.minCoeff() > 0.0)) throw BadConfig("env: sample half extents must be > 0");
    if (std::abs(sample_half_extents.x() - sample_half_extents.y()) > 1e-12)
      throw BadConfig("env: sample cross-section must be square");
    if (std::abs(hole_width - (sample_width() + clearance)) > 1e-9)
      throw BadConfig("env: hole width must equal sample width + clearance");
    if (!(sample_mass > 0.0) || !(wall_stiffness > 0.0) || !(wall_damping >= 0.0))
      throw BadConfig("env: sample mass and wall stiffness must be > 0, damping >= 0");
    if (!(capture_radius > 0.0) || !(capture_angle > 0.0)) throw BadConfig("env: capture thresholds must be > 0");
    if (!(hole_depth > insertion_depth) || !(insertion_depth > 0.0))
      throw BadConfig("env: need 0 < insertion_depth < hole_depth");
    if (!(chamfer >= 0.0) || !(slot_half_width > 0.5 * hole_width + chamfer))
      throw BadConfig("env: slot block must be wider than the chamfered hole");
  }
};

enum class Gripper : std::uint8_t { Open = 0, Closing = 1, Holding = 2 };

inline const char* to_string(Gripper g) {
  switch (g) {
    case Gripper::Open: return "open";
    case Gripper::Closing: return "closing";
    case Gripper::Holding: return "holding";
  }
  return "?";
}

struct SimState {
  Pose ee_pose;                  // grasp frame, world
  Vec6 ee_twist = Vec6::Zero();  // [v; omega], world
  Pose last_reference;
  Gripper gripper = Gripper::Open;
  double closing_elapsed = 0.0;          // s spent in Closing
  std::optional<Pose> grasped_sample;    // sample pose in the grasp frame, iff Holding
  Pose sample_pose;                      // world; follows the grasp while held
  double clock = 0.0;                    // s
  std::uint64_t steps = 0;
  bool safety_tripped = false;
  bool last_grasp_failed = false;        // the most recent close ended open

  bool holding() const { return gripper == Gripper::Holding; }
};

/// Everything a step needs besides the state.
struct SimModel {
  ImpedanceParams impedance = ImpedanceParams::defaults();
  EnvModel env;
  SafetyMonitor safety;
  double dt = 0.01;  // s

  void validate() const {
    impedance.validate();
    env.validate();
    safety.validate();
    if (!(dt > 0.0)) throw BadConfig("sim: dt must be > 0");
  }
};

inline SimState initial_state(const SimModel& model, const Pose& ee) {
  SimState s;
  s.ee_pose = ee;
  s.last_reference = ee;
  s.sample_pose = model.env.sample_pose;
  return s;
}

// ---------------------------------------------------------------------------
// Contact

/// Lateral offset and depth of the held sample's bottom face in the slot frame.
struct SlotCoordinates {
  double ex = 0.0, ey = 0.0;  // bottom-centre offset from the hole axis (m)
  double depth = 0.0;         // below the hole mouth (m), negative above it
};

inline SlotCoordinates slot_coordinates(const EnvModel& env, const Pose& sample) {
  const Vec3 bottom = sample.apply(Vec3(0, 0, -env.sample_half_extents.z()));
  const Vec3 local = inverse(env.slot_pose).apply(bottom);
  return {local.x(), local.y(), -local.z()};
}

/// Released sample resting in the hole at least insertion_depth deep.
inline bool sample_assembled(const EnvModel& env, const Pose& sample) {
  const auto c = slot_coordinates(env, sample);
  const double lateral = 0.5 * env.clearance + 1e-4;
  return std::abs(c.ex) <= lateral && std::abs(c.ey) <= lateral && c.depth >= env.insertion_depth;
}

inline bool assembly_success(const EnvModel& env, const SimState& s) {
  return s.gripper == Gripper::Open && !s.grasped_sample && sample_assembled(env, s.sample_pose);
}

namespace detail {

/// Penetration of one bottom edge into the slot material, in the plane spanned
/// by one lateral axis and the hole axis. Material is the convex region
///   depth >= 0, u >= w_half, u + depth >= w_half + chamfer
/// (u = distance of the edge from the hole axis). Over the flat top the
/// contact is always the top face; inside the chamfer band the penetration is
/// the smallest of the three half-plane depths.
struct EdgeContact {
  double pen = 0.0;
  double n_lat = 0.0;  // normal component along +u (outward from the axis)
  double n_up = 0.0;   // normal component along +z (out of the hole)
};

inline EdgeContact edge_contact(double u, double depth, double w_half, double chamfer) {
  EdgeContact c;
  if (depth <= 0.0 || u <= w_half) return c;
  // Beyond the chamfer band the edge can only have come down onto the flat top.
  if (u - w_half > chamfer) return {depth, 0.0, 1.0};
  const double d_top = depth;
  const double d_wall = u - w_half;
  const double d_ch = (u + depth - w_half - chamfer) / std::sqrt(2.0);
  if (d_ch <= 0.0) return c;
  if (d_top <= d_wall && d_top <= d_ch) {
    c = {d_top, 0.0, 1.0};
  } else if (d_wall <= d_ch) {
    c = {d_wall, -1.0, 0.0};
  } else {
    c = {d_ch, -1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)};
  }
  return c;
}

inline Vec3 point_velocity(const SimState& s, const Vec3& p) {
  return s.ee_twist.head<3>() + s.ee_twist.tail<3>().cross(p - s.ee_pose.position);
}

inline double spring_damper(double k, double c, double pen, double pen_rate) {
  return std::max(0.0, k * pen + c * pen_rate);
}

}  // namespace detail

/// Contact wrench on the grasp frame (force in N, torque about the grasp origin).
inline Wrench contact_wrench(const EnvModel& env, const SimState& s) {
  Wrench w;
  auto apply_at = [&](const Vec3& point, const Vec3& force) {
    w.force += force;
    w.torque += (point - s.ee_pose.position).cross(force);
  };

  // Fingertips against the ground.
  {
    const Vec3 tip = s.ee_pose.apply(Vec3(0, 0, env.finger_reach));
    const double pen = env.ground_height - tip.z();
    if (pen > 0.0) {
      const double rate = -detail::point_velocity(s, tip).z();
      apply_at(tip, Vec3(0, 0, detail::spring_damper(env.wall_stiffness, env.wall_damping, pen, rate)));
    }
  }
  if (!s.holding()) return w;

  const Vec3 bottom = s.sample_pose.apply(Vec3(0, 0, -env.sample_half_extents.z()));
  const Vec3 vb = detail::point_velocity(s, bottom);

  // Held sample against the ground.
  {
    const double pen = env.ground_height - bottom.z();
    if (pen > 0.0) apply_at(bottom, Vec3(0, 0, detail::spring_damper(env.wall_stiffness, env.wall_damping, pen, -vb.z())));
  }

  // Held sample against the slot: one edge contact per lateral axis.
  const Pose slot_inv = inverse(env.slot_pose);
  const Vec3 local = slot_inv.apply(bottom);
  const Vec3 v_local = env.slot_pose.orientation.conjugate() * vb;
  const double depth = -local.z();
  const double half = env.sample_half_extents.x();
  if (depth <= 0.0) return w;
  if (std::abs(local.x()) - half > env.slot_half_width || std::abs(local.y()) - half > env.slot_half_width) return w;
  if (depth >= env.hole_depth) {
    // Hole bottom.
    const double pen = depth - env.hole_depth;
    const Vec3 f_local(0, 0, detail::spring_damper(env.wall_stiffness, env.wall_damping, pen, -v_local.z()));
    apply_at(bottom, env.slot_pose.orientation * f_local);
  }
  Vec3 f_local = Vec3::Zero();
  double up = 0.0;
  for (int axis = 0; axis < 2; ++axis) {
    const double e = local[axis];
    const double sgn = e >= 0.0 ? 1.0 : -1.0;
    const auto c = detail::edge_contact(std::abs(e) + half, depth, 0.5 * env.hole_width, env.chamfer);
    if (c.pen <= 0.0) continue;
    // d(pen)/dt along the normal: the edge moves outward with sgn*v and downward with -v_z.
    const double rate = -(c.n_lat * sgn * v_local[axis] + c.n_up * v_local.z());
    const double f = detail::spring_damper(env.wall_stiffness, env.wall_damping, c.pen, rate);
    f_local[axis] += c.n_lat * sgn * f;
    up = std::max(up, c.n_up * f);
  }
  f_local.z() += up;
  if (f_local.squaredNorm() > 0.0) apply_at(bottom, env.slot_pose.orientation * f_local);
  return w;
}

/// Weight of the held sample as seen at the grasp frame.
inline Wrench payload_wrench(const EnvModel& env, const SimState& s) {
  if (!s.holding()) return {};
  const Vec3 f(0, 0, -env.sample_mass * kGravity);
  return {f, (s.sample_pose.position - s.ee_pose.position).cross(f)};
}

// ---------------------------------------------------------------------------
// Gripper

/// Decides a close: holding iff the sample centre is within the capture radius
/// of the grasp origin and the grasp approach axis is within the capture angle
/// of the sample's long axis. The fingers square the sample to the grasp frame
/// about the approach axis and keep its offset.
inline SimState grasp_attempt(const SimState& in, const EnvModel& env) {
  SimState s = in;
  s.closing_elapsed = 0.0;
  const Vec3 offset = s.sample_pose.position - s.ee_pose.position;
  const Vec3 approach = s.ee_pose.rotation().col(2);
  const Vec3 axis = s.sample_pose.rotation().col(2);
  const double angle = std::acos(std::min(1.0, std::abs(approach.dot(axis))));
  if (offset.norm() <= env.capture_radius && angle <= env.capture_angle) {
    s.gripper = Gripper::Holding;
    s.last_grasp_failed = false;
    // Sample axis anti-parallel to the approach (the grasp looks down the sample).
    const Quat flip = quat_from_axis_angle(Vec3::UnitX(), M_PI);
    s.grasped_sample = Pose(s.ee_pose.orientation.conjugate() * offset, flip);
    s.sample_pose = compose(s.ee_pose, *s.grasped_sample);
  } else {
    s.gripper = Gripper::Open;
    s.grasped_sample.reset();
    s.last_grasp_failed = true;
  }
  return s;
}

/// Starts closing the fingers; the grasp is decided after env.close_duration.
inline SimState begin_close(const SimState& in) {
  SimState s = in;
  if (s.gripper == Gripper::Open) {
    s.gripper = Gripper::Closing;
    s.closing_elapsed = 0.0;
  }
  return s;
}

inline SimState release(const SimState& in) {
  if (!in.holding()) throw NotHolding("release: gripper is not holding a sample");
  SimState s = in;
  s.gripper = Gripper::Open;
  s.grasped_sample.reset();
  return s;
}

/// Where a just-released sample comes to rest. Inside the hole (bottom below
/// the mouth and within the hole footprint) it stands upright against the
/// nearest wall at its current depth; anywhere else it stays put.
inline SimState settle_released(const EnvModel& env, const SimState& in) {
  SimState s = in;
  if (s.holding()) return s;
  const auto c = slot_coordinates(env, s.sample_pose);
  const double footprint = 0.5 * env.clearance + env.chamfer;
  if (c.depth <= 0.0 || std::abs(c.ex) > footprint || std::abs(c.ey) > footprint) return s;
  const double lim = 0.5 * env.clearance;
  const double depth = std::min(c.depth, env.hole_depth);
  const Vec3 bottom_local(std::clamp(c.ex, -lim, lim), std::clamp(c.ey, -lim, lim), -depth);
  const Vec3 centre_local = bottom_local + Vec3(0, 0, env.sample_half_extents.z());
  // Keep the yaw, drop the tilt.
  const Mat3 r = (env.slot_pose.orientation.conjugate() * s.sample_pose.orientation).toRotationMatrix();
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  s.sample_pose = compose(env.slot_pose, Pose(centre_local, quat_from_axis_angle(Vec3::UnitZ(), yaw)));
  return s;
}

// ---------------------------------------------------------------------------
// Dynamics

struct StepResult {
  SimState state;
  Wrench wrench;  // measured external wrench at the grasp frame (contact + payload)
};

/// Advances one fixed step. An absent reference means the stream is starved
/// and the last reference is held. After a safety trip the setpoint stays at
/// the pose where the trip happened.
inline StepResult step(const SimModel& model, const SimState& in, const std::optional<Pose>& reference, double dt) {
  if (std::abs(dt - model.dt) > 1e-12) throw BadConfig("step: dt must equal the configured step");
  SimState s = in;
  const Pose prev_ref = s.last_reference;
  if (reference && !s.safety_tripped) s.last_reference = *reference;
  const Vec6 ref_rate = pose_error(s.last_reference, prev_ref) / dt;

  const Wrench contact = contact_wrench(model.env, s);
  const Wrench payload = payload_wrench(model.env, s);
  const Wrench measured = contact + payload;

  const auto& K = model.impedance.stiffness;
  const auto& D = model.impedance.damping;
  const auto& M = model.impedance.virtual_mass;
  const Vec6 err = pose_error(s.last_reference, s.ee_pose);
  Vec6 ext;
  ext << measured.force, measured.torque;
  Vec6 v1;
  for (int i = 0; i < 6; ++i) {
    const double lhs = M[i] / dt + K[i] * dt + D[i];
    v1[i] = (M[i] / dt * s.ee_twist[i] + K[i] * err[i] + D[i] * ref_rate[i] + ext[i]) / lhs;
  }
  s.ee_twist = v1;
  s.ee_pose = Pose(s.ee_pose.position + dt * v1.head<3>(), rotation_exp(dt * v1.tail<3>()) * s.ee_pose.orientation);

  if (s.gripper == Gripper::Closing) {
    s.closing_elapsed += dt;
    if (s.closing_elapsed >= model.env.close_duration - 1e-12) s = grasp_attempt(s, model.env);
  }
  if (s.grasped_sample) s.sample_pose = compose(s.ee_pose, *s.grasped_sample);

  if (!s.safety_tripped && check_safety(model.safety, measured)) {
    s.safety_tripped = true;
    s.last_reference = s.ee_pose;
  }
  s.clock += dt;
  ++s.steps;
  return {s, measured};
}

/// Kinetic plus spring energy of the virtual mass about its reference.
inline double virtual_energy(const SimModel& model, const SimState& s) {
  const Vec6 e = pose_error(s.last_reference, s.ee_pose);
  double E = 0.0;
  for (int i = 0; i < 6; ++i)
    E += 0.5 * model.impedance.virtual_mass[i] * s.ee_twist[i] * s.ee_twist[i] +
         0.5 * model.impedance.stiffness[i] * e[i] * e[i];
  return E;
}

// ---------------------------------------------------------------------------
// Config

namespace config {

inline Vec6 parse_vec6(const Node& n) {
  const auto v = n.vector();
  if (v.size() != 6) n.fail("expected 6 entries");
  return v;
}

/// Reads an "environment" file: impedance, safety, scene.
inline SimModel parse_environment(const Json& j) {
  const Node root(j);
  check_version(root, "environment");
  SimModel m;
  if (root.has("dt_s")) m.dt = root["dt_s"].positive();
  if (root.has("impedance")) {
    const Node im = root["impedance"];
    m.impedance.stiffness = parse_vec6(im["stiffness"]);
    m.impedance.virtual_mass = parse_vec6(im["virtual_mass"]);
    m.impedance.damping = im.has("damping") ? parse_vec6(im["damping"])
                                            : ImpedanceParams::critical_damping(m.impedance.stiffness, m.impedance.virtual_mass);
  }
  if (root.has("safety")) {
    const Node sf = root["safety"];
    m.safety.force_limit = sf["force_limit_n"].positive();
    m.safety.torque_limit = sf["torque_limit_nm"].positive();
  }
  auto& e = m.env;
  if (root.has("scene")) {
    const Node sc = root["scene"];
    if (sc.has("ground_height_m")) e.ground_height = sc["ground_height_m"].number();
    if (sc.has("sample")) {
      const Node sm = sc["sample"];
      e.sample_half_extents = sm["half_extents_m"].vec3();
      e.sample_pose = parse_pose(sm["pose"]);
      e.sample_mass = sm["mass_kg"].positive();
    }
    if (sc.has("slot")) {
      const Node sl = sc["slot"];
      e.slot_pose = parse_pose(sl["pose"]);
      e.hole_width = sl["hole_width_m"].positive();
      e.clearance = sl["clearance_m"].positive();
      e.hole_depth = sl["hole_depth_m"].positive();
      if (sl.has("chamfer_m")) e.chamfer = sl["chamfer_m"].non_negative();
      if (sl.has("half_width_m")) e.slot_half_width = sl["half_width_m"].positive();
      if (sl.has("insertion_depth_m")) e.insertion_depth = sl["insertion_depth_m"].positive();
    }
    if (sc.has("wall_stiffness_n_per_m")) e.wall_stiffness = sc["wall_stiffness_n_per_m"].positive();
    if (sc.has("wall_damping_ns_per_m")) e.wall_damping = sc["wall_damping_ns_per_m"].non_negative();
  }
  if (root.has("gripper")) {
    const Node g = root["gripper"];
    if (g.has("capture_radius_m")) e.capture_radius = g["capture_radius_m"].positive();
    if (g.has("capture_angle_rad")) e.capture_angle = g["capture_angle_rad"].positive();
    if (g.has("close_duration_s")) e.close_duration = g["close_duration_s"].non_negative();
    if (g.has("finger_reach_m")) e.finger_reach = g["finger_reach_m"].non_negative();
  }
  try {
    m.validate();
  } catch (const BadConfig& err) {
    throw BadConfig(std::string("$: ") + err.what());
  }
  return m;
}

inline SimModel load_environment(const std::filesystem::path& path) {
  return parse_environment(load_json_file(path));
}

inline SimModel default_environment() { return load_environment(bundled_dir() / "environment.json"); }

}  // namespace config

}  // namespace isru
