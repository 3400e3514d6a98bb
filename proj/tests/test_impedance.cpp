#include "isru/impedance.hpp"
#include "isru/robot.hpp"
#include "isru/rvp/planner.hpp"
#include "isru/rvp/world.hpp"

#include <gtest/gtest.h>

using namespace isru;

namespace {

Pose grasp_down(const Vec3& p) { return Pose::from_xyz_rpy(p, Vec3(M_PI, 0.0, 0.0)); }

const Quat kFlip = quat_from_axis_angle(Vec3::UnitX(), M_PI);

SimState holding_at(const SimModel& m, const Pose& ee, const Vec3& offset = Vec3::Zero()) {
  SimState s = initial_state(m, ee);
  s.gripper = Gripper::Holding;
  s.grasped_sample = Pose(offset, kFlip);
  s.sample_pose = compose(ee, *s.grasped_sample);
  return s;
}

/// Grasp pose that puts the held sample's bottom at (ex, ey, -depth) in the slot frame.
Pose above_slot(const EnvModel& env, double ex, double ey, double depth) {
  const Vec3 bottom = env.slot_pose.apply(Vec3(ex, ey, -depth));
  return grasp_down(bottom + Vec3(0, 0, env.sample_half_extents.z()));
}

}  // namespace

class Impedance : public ::testing::Test {
 protected:
  SimModel model = config::default_environment();
};

TEST_F(Impedance, DefaultsAreCriticallyDamped) {
  const auto p = ImpedanceParams::defaults();
  for (int i = 0; i < 6; ++i)
    EXPECT_NEAR(p.damping[i], 2.0 * std::sqrt(p.stiffness[i] * p.virtual_mass[i]), 1e-12);
  EXPECT_NO_THROW(p.validate());
}

TEST_F(Impedance, UnderdampedParamsAreRejected) {
  auto p = ImpedanceParams::defaults();
  p.damping[3] = 0.5 * p.damping[3];
  EXPECT_THROW(p.validate(), BadConfig);
}

TEST_F(Impedance, StepRejectsForeignDt) {
  const SimState s = initial_state(model, grasp_down(Vec3(0.3, 0.3, 0.3)));
  EXPECT_THROW(step(model, s, std::nullopt, 0.02), BadConfig);
}

TEST_F(Impedance, TracksAStepInFreeSpace) {
  const Pose start = grasp_down(Vec3(0.3, 0.3, 0.3));
  const Pose ref(Vec3(0.35, 0.28, 0.32), quat_from_axis_angle(Vec3::UnitZ(), 0.2) * start.orientation);
  SimState s = initial_state(model, start);
  for (int k = 0; k < 300; ++k) s = step(model, s, ref, model.dt).state;
  const auto d = distance(s.ee_pose, ref);
  EXPECT_LT(d.position, 1e-8);
  EXPECT_LT(d.angle, 1e-7);
  EXPECT_FALSE(s.safety_tripped);
  EXPECT_EQ(s.steps, 300u);
  EXPECT_NEAR(s.clock, 3.0, 1e-9);
}

TEST_F(Impedance, HoldsTheLastReferenceWhenStarved) {
  SimState s = initial_state(model, grasp_down(Vec3(0.3, 0.3, 0.3)));
  Pose last;
  for (int k = 1; k <= 50; ++k) {
    last = grasp_down(Vec3(0.3 + 0.002 * k, 0.3, 0.3));
    s = step(model, s, last, model.dt).state;
  }
  for (int k = 0; k < 200; ++k) s = step(model, s, std::nullopt, model.dt).state;
  EXPECT_TRUE(s.last_reference == last);
  EXPECT_LT(distance(s.ee_pose, last).position, 1e-4);
}

TEST_F(Impedance, StaticOffsetIsComplianceTimesPayload) {
  for (double mass : {0.1, 0.2, 0.5}) {
    SimModel m = model;
    m.env.sample_mass = mass;
    const Pose ref = grasp_down(Vec3(0.0, 0.3, 0.3));
    SimState s = holding_at(m, ref);
    StepResult r{s, {}};
    for (int k = 0; k < 3000; ++k) r = step(m, r.state, ref, m.dt);
    const double expect = -mass * kGravity / m.impedance.stiffness[2];
    EXPECT_NEAR(r.state.ee_pose.position.z() - ref.position.z(), expect, 1e-9);
    EXPECT_NEAR(r.wrench.force.z(), -mass * kGravity, 1e-12);
    EXPECT_LT(distance(r.state.ee_pose, ref).angle, 1e-9);
  }
}

TEST_F(Impedance, OffCentrePayloadTiltsAgainstRotationalStiffness) {
  // Sample hanging 2 cm off the grasp axis: torque m g 0.02 about x, small tilt.
  const Pose ref = grasp_down(Vec3(0.0, 0.3, 0.3));
  SimState s = holding_at(model, ref, Vec3(0.0, 0.02, 0.0));
  StepResult r{s, {}};
  for (int k = 0; k < 3000; ++k) r = step(model, r.state, ref, model.dt);
  const double tau = r.wrench.torque.norm();
  const double angle = distance(r.state.ee_pose, ref).angle;
  EXPECT_NEAR(tau, model.env.sample_mass * kGravity * 0.02, 1e-3);
  EXPECT_NEAR(angle, tau / model.impedance.stiffness[3], 1e-6);
}

TEST_F(Impedance, EnergyNeverGrowsAboutAFixedReference) {
  const Pose ref = grasp_down(Vec3(0.0, 0.3, 0.3));
  SimState s = initial_state(model, ref);
  s.ee_pose = Pose(ref.position + Vec3(-0.04, 0.02, 0.05), quat_from_axis_angle(Vec3(3, -1, 2).normalized(), 0.5) * ref.orientation);
  s.ee_twist << -0.3, 0.2, 0.1, -0.6, 0.2, 0.9;
  double e = virtual_energy(model, s);
  for (int k = 0; k < 1000; ++k) {
    s = step(model, s, ref, model.dt).state;
    const double n = virtual_energy(model, s);
    ASSERT_LE(n, e * (1.0 + 1e-12)) << "step " << k;
    e = n;
  }
  EXPECT_LT(e, 1e-12);
}

TEST_F(Impedance, SafetyThresholdIsStrict) {
  const SafetyMonitor m;
  Wrench w;
  w.force = Vec3(m.force_limit, 0, 0);
  EXPECT_FALSE(check_safety(m, w));
  w.force.x() = std::nextafter(m.force_limit, 100.0);
  EXPECT_TRUE(check_safety(m, w));
  w = {};
  w.torque = Vec3(0, 0, m.torque_limit + 1e-9);
  EXPECT_TRUE(check_safety(m, w));
}

TEST_F(Impedance, SafetyTripLatchesAndFreezesTheSetpoint) {
  const double top = model.env.ground_height + model.env.finger_reach;
  SimState s = initial_state(model, grasp_down(Vec3(0.0, 0.3, top + 0.001)));
  int tripped_at = -1;
  for (int k = 0; k < 300 && tripped_at < 0; ++k) {
    const auto r = step(model, s, grasp_down(Vec3(0.0, 0.3, top - 0.0005 * k)), model.dt);
    if (r.state.safety_tripped) {
      EXPECT_TRUE(check_safety(model.safety, r.wrench));
      EXPECT_TRUE(r.state.last_reference == r.state.ee_pose);
      tripped_at = k;
    } else {
      EXPECT_FALSE(check_safety(model.safety, r.wrench));
    }
    s = r.state;
  }
  ASSERT_GE(tripped_at, 0);
  const Pose frozen = s.last_reference;
  for (int k = 0; k < 300; ++k) s = step(model, s, grasp_down(Vec3(0.0, 0.3, 0.2)), model.dt).state;
  EXPECT_TRUE(s.safety_tripped);
  EXPECT_TRUE(s.last_reference == frozen);
}

// ---------------------------------------------------------------------------
// Contact

TEST(EdgeContact, TopFaceBeyondTheChamfer) {
  const auto c = detail::edge_contact(0.03, 0.002, 0.016, 0.0025);
  EXPECT_DOUBLE_EQ(c.pen, 0.002);
  EXPECT_DOUBLE_EQ(c.n_up, 1.0);
  EXPECT_DOUBLE_EQ(c.n_lat, 0.0);
}

TEST(EdgeContact, WallAndChamferInsideTheBand) {
  const double w = 0.016, ch = 0.0025;
  const auto wall = detail::edge_contact(w + 0.0005, 0.01, w, ch);
  EXPECT_NEAR(wall.pen, 0.0005, 1e-15);
  EXPECT_DOUBLE_EQ(wall.n_lat, -1.0);
  const auto bevel = detail::edge_contact(w + 0.002, 0.001, w, ch);
  EXPECT_NEAR(bevel.pen, (0.002 + 0.001 - ch) / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(bevel.n_up, 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_EQ(detail::edge_contact(w + 0.001, 0.001, w, ch).pen, 0.0);  // in the open bevel
  EXPECT_EQ(detail::edge_contact(w - 0.001, 0.02, w, ch).pen, 0.0);  // inside the hole
  EXPECT_EQ(detail::edge_contact(w + 0.01, -0.001, w, ch).pen, 0.0); // above the mouth
}

TEST_F(Impedance, CentredSampleInsideTheHoleFeelsNothing) {
  const auto& env = model.env;
  const SimState s = holding_at(model, above_slot(env, 0.0, 0.0, 0.02));
  const Wrench w = contact_wrench(env, s);
  EXPECT_EQ(w.force.norm(), 0.0);
}

TEST_F(Impedance, SampleOnTheTopFaceIsPushedStraightUp) {
  const auto& env = model.env;
  const SimState s = holding_at(model, above_slot(env, 0.03, 0.0, 0.001));
  const Wrench w = contact_wrench(env, s);
  EXPECT_NEAR(w.force.z(), env.wall_stiffness * 0.001, 1e-9);
  EXPECT_NEAR(w.force.head<2>().norm(), 0.0, 1e-12);
}

TEST_F(Impedance, SampleAgainstTheWallIsPushedBackToTheAxis) {
  const auto& env = model.env;
  const double lim = 0.5 * env.clearance;
  const SimState s = holding_at(model, above_slot(env, lim + 0.0003, 0.0, 0.02));
  const Wrench w = contact_wrench(env, s);
  EXPECT_NEAR(w.force.x(), -env.wall_stiffness * 0.0003, 1e-9);
  EXPECT_NEAR(w.force.z(), 0.0, 1e-12);
}

TEST_F(Impedance, FingertipsPressOnTheGround) {
  const auto& env = model.env;
  const SimState s = initial_state(model, grasp_down(Vec3(0.0, 0.3, env.ground_height + env.finger_reach - 0.001)));
  EXPECT_NEAR(contact_wrench(env, s).force.z(), env.wall_stiffness * 0.001, 1e-9);
}

TEST_F(Impedance, PayloadWeightOnlyWhileHolding) {
  const Pose ee = grasp_down(Vec3(0.0, 0.3, 0.3));
  EXPECT_EQ(payload_wrench(model.env, initial_state(model, ee)).force.norm(), 0.0);
  EXPECT_NEAR(payload_wrench(model.env, holding_at(model, ee)).force.z(), -model.env.sample_mass * kGravity, 1e-12);
}

// ---------------------------------------------------------------------------
// Gripper

TEST_F(Impedance, GraspCapturesANearbyAlignedSample) {
  const auto& env = model.env;
  SimState s = initial_state(model, grasp_down(env.sample_pose.position + Vec3(0.004, 0, 0)));
  s = begin_close(s);
  EXPECT_EQ(s.gripper, Gripper::Closing);
  for (int k = 0; k < 40; ++k) s = step(model, s, s.last_reference, model.dt).state;
  ASSERT_EQ(s.gripper, Gripper::Holding);
  EXPECT_FALSE(s.last_grasp_failed);
  // The sample now follows the grasp frame.
  const Pose moved = grasp_down(s.ee_pose.position + Vec3(0, 0, 0.1));
  for (int k = 0; k < 300; ++k) s = step(model, s, moved, model.dt).state;
  EXPECT_LT(distance(compose(s.ee_pose, *s.grasped_sample), s.sample_pose).position, 1e-12);
  EXPECT_GT(s.sample_pose.position.z(), env.sample_pose.position.z() + 0.09);
}

TEST_F(Impedance, GraspMissesAFarSample) {
  const auto& env = model.env;
  SimState s = initial_state(model, grasp_down(env.sample_pose.position + Vec3(0.03, 0, 0)));
  s = begin_close(s);
  for (int k = 0; k < 40; ++k) s = step(model, s, s.last_reference, model.dt).state;
  EXPECT_EQ(s.gripper, Gripper::Open);
  EXPECT_TRUE(s.last_grasp_failed);
  EXPECT_FALSE(s.grasped_sample);
}

TEST_F(Impedance, GraspMissesATiltedApproach) {
  const auto& env = model.env;
  const Pose tilted(env.sample_pose.position, quat_from_axis_angle(Vec3::UnitY(), 0.5) * kFlip);
  const SimState s = grasp_attempt(initial_state(model, tilted), env);
  EXPECT_EQ(s.gripper, Gripper::Open);
}

TEST_F(Impedance, ReleaseNeedsAHeldSample) {
  EXPECT_THROW(release(initial_state(model, grasp_down(Vec3(0, 0.3, 0.3)))), NotHolding);
}

TEST_F(Impedance, ReleasedInTheHoleStandsAgainstTheWall) {
  const auto& env = model.env;
  SimState s = holding_at(model, above_slot(env, 0.0015, -0.0002, 0.035));
  s = settle_released(env, release(s));
  const auto c = slot_coordinates(env, s.sample_pose);
  EXPECT_NEAR(c.ex, 0.5 * env.clearance, 1e-12);
  EXPECT_NEAR(c.ey, -0.0002, 1e-12);
  EXPECT_NEAR(c.depth, 0.035, 1e-12);
  EXPECT_TRUE(assembly_success(env, s));
}

TEST_F(Impedance, ReleasedElsewhereStaysPut) {
  const auto& env = model.env;
  SimState s = holding_at(model, above_slot(env, 0.01, 0.0, 0.0005));
  const Pose before = s.sample_pose;
  s = settle_released(env, release(s));
  EXPECT_TRUE(s.sample_pose == before);
  EXPECT_FALSE(assembly_success(env, s));
}

TEST_F(Impedance, ShallowInsertionIsNotAssembled) {
  const auto& env = model.env;
  SimState s = settle_released(env, release(holding_at(model, above_slot(env, 0.0, 0.0, env.insertion_depth - 0.002))));
  EXPECT_FALSE(assembly_success(env, s));
  SimState held = holding_at(model, above_slot(env, 0.0, 0.0, env.insertion_depth + 0.002));
  EXPECT_FALSE(assembly_success(env, held));  // fingers still closed
}

TEST_F(Impedance, EnvironmentErrorsCarryAFieldPath) {
  auto j = config::load_json_file(config::bundled_dir() / "environment.json");
  j["scene"]["slot"]["clearance_m"] = -0.001;
  try {
    config::parse_environment(j);
    FAIL() << "expected BadConfig";
  } catch (const BadConfig& e) {
    EXPECT_NE(std::string(e.what()).find("$.scene.slot.clearance_m"), std::string::npos) << e.what();
  }
}

TEST_F(Impedance, HoleMustFitTheSample) {
  EnvModel env = model.env;
  env.hole_width = env.sample_width();
  EXPECT_THROW(env.validate(), BadConfig);
}

// ---------------------------------------------------------------------------
// Robot node

class Robot : public ::testing::Test {
 protected:
  ArmModel arm = config::default_arm();
  SimModel model = config::default_environment();
};

TEST_F(Robot, StaleReferencesAreIgnored) {
  RobotNode r(arm, model, arm.home);
  const Pose p0 = r.state().ee_pose;
  const Pose a(p0.position + Vec3(0.01, 0, 0), p0.orientation);
  const Pose b(p0.position + Vec3(0.0, 0.01, 0), p0.orientation);
  r.tick({{5, 0.0, link::PoseRef{a}}});
  r.tick({{4, 0.0, link::PoseRef{b}}});
  EXPECT_EQ(r.telemetry().last_ref_seq, 5u);
  EXPECT_TRUE(r.state().last_reference == a);
}

TEST_F(Robot, SendsTelemetryEveryTick) {
  RobotNode r(arm, model, arm.home);
  for (int k = 0; k < 3; ++k) {
    const auto out = r.tick({});
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out.front().kind(), link::Kind::Telemetry);
  }
  EXPECT_NEAR(r.telemetry().sim_time, 0.03, 1e-12);
}

TEST_F(Robot, ExecutesAnAcceptedTrajectory) {
  RobotNode r(arm, model, arm.home);
  const auto world = config::default_world();
  PlannerOptions opt;
  opt.trajectory_id = 9;
  const Trajectory t = plan_p2p(arm, world, arm.home, forward_kinematics(arm, arm.home) * Pose::from_xyz_rpy(Vec3(0.05, 0.0, -0.05), Vec3::Zero()), opt);
  auto out = r.tick({{1, 0.0, link::TrajectoryUplink{t}}});
  ASSERT_EQ(out.size(), 2u);
  ASSERT_TRUE(out[0].as<link::ExecAck>());
  EXPECT_EQ(out[0].as<link::ExecAck>()->status, link::ExecStatus::Accepted);
  // Engagement is refused while executing.
  out = r.tick({{2, 0.0, link::Engage{}}});
  ASSERT_TRUE(out[0].as<link::Engage>());
  EXPECT_EQ(out[0].as<link::Engage>()->kind, link::EngageKind::Deny);
  bool done = false;
  for (int k = 0; k < 2000 && !done; ++k)
    for (const auto& m : r.tick({}))
      if (const auto* a = m.as<link::ExecAck>()) done = a->status == link::ExecStatus::Completed;
  ASSERT_TRUE(done);
  EXPECT_EQ(r.telemetry().exec_state, link::ExecState::Completed);
  EXPECT_LT(distance(r.state().ee_pose, forward_kinematics(arm, t.goal())).position, 0.005);
  // A resend of the finished trajectory reports its outcome again.
  out = r.tick({{3, 0.0, link::TrajectoryUplink{t}}});
  EXPECT_EQ(out[0].as<link::ExecAck>()->status, link::ExecStatus::Completed);
}

TEST_F(Robot, RejectsTrajectoriesThatStartElsewhere) {
  RobotNode r(arm, model, arm.home);
  JointConfig far = arm.home;
  far[0] += 0.5;
  Trajectory t;
  t.id = 3;
  t.waypoints = {{0.0, far}, {1.0, arm.home}};
  const auto out = r.tick({{1, 0.0, link::TrajectoryUplink{t}}});
  EXPECT_EQ(out[0].as<link::ExecAck>()->status, link::ExecStatus::Rejected);
}

TEST_F(Robot, RejectsTrajectoriesInTeleoperatedPhases) {
  RobotNode r(arm, model, arm.home);
  Trajectory t;
  t.id = 4;
  t.waypoints = {{0.0, arm.home}, {1.0, arm.home}};
  const auto out = r.tick({{1, 0.0, link::PhaseNotice{MissionPhase::Collection}}, {2, 0.0, link::TrajectoryUplink{t}}});
  EXPECT_EQ(out[0].as<link::ExecAck>()->status, link::ExecStatus::Rejected);
}
