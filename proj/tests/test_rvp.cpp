#include "isru/rvp/mission.hpp"
#include "isru/rvp/planner.hpp"
#include "isru/rvp/rehearse.hpp"
#include "isru/rvp/scene.hpp"
#include "isru/rvp/world.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace isru;

// ---------------------------------------------------------------------------
// Mission

namespace {

MissionState apply(MissionState s, std::initializer_list<MissionEvent> events) {
  for (auto e : events) s = phase_transition(s, e);
  return s;
}

}  // namespace

TEST(Mission, NominalSequenceVisitsEveryPhaseInOrder) {
  using E = MissionEvent;
  MissionState s;
  std::vector<MissionPhase> seen{s.phase};
  for (auto e : {E::PlanDone, E::Engaged, E::GraspOk, E::RetractDone, E::Engaged, E::Plan2Done, E::InsertOk, E::ReleaseOk}) {
    s = phase_transition(s, e);
    if (seen.back() != s.phase) seen.push_back(s.phase);
  }
  EXPECT_EQ(seen, (std::vector<MissionPhase>{MissionPhase::PreCollection, MissionPhase::Collection,
                                             MissionPhase::PostCollection, MissionPhase::PreUtilization,
                                             MissionPhase::Utilization, MissionPhase::PostUtilization}));
  EXPECT_TRUE(s.completed);
  EXPECT_TRUE(s.terminal());
}

TEST(Mission, PrePhasesNeedBothThePlanAndTheHandshake) {
  using E = MissionEvent;
  EXPECT_EQ(apply({}, {E::PlanDone}).phase, MissionPhase::PreCollection);
  EXPECT_EQ(apply({}, {E::Engaged}).phase, MissionPhase::PreCollection);
  EXPECT_EQ(apply({}, {E::Engaged, E::PlanDone}).phase, MissionPhase::Collection);
  const auto s = apply({}, {E::PlanDone, E::Engaged});
  EXPECT_FALSE(s.plan_executed);
  EXPECT_FALSE(s.engaged);
}

TEST(Mission, OutOfOrderEventsAreIllegal) {
  using E = MissionEvent;
  EXPECT_THROW(phase_transition({}, E::GraspOk), IllegalTransition);
  EXPECT_THROW(phase_transition({}, E::Plan2Done), IllegalTransition);
  const auto collection = apply({}, {E::PlanDone, E::Engaged});
  EXPECT_THROW(phase_transition(collection, E::InsertOk), IllegalTransition);
  EXPECT_THROW(phase_transition(collection, E::PlanDone), IllegalTransition);
  EXPECT_EQ(phase_transition(collection, E::Engaged), collection);
}

TEST(Mission, AbortLatches) {
  using E = MissionEvent;
  const auto s = apply({}, {E::PlanDone, E::Engaged, E::Abort});
  EXPECT_TRUE(s.failed);
  EXPECT_EQ(s.phase, MissionPhase::Collection);
  EXPECT_EQ(phase_transition(s, E::Abort), s);
  EXPECT_THROW(phase_transition(s, E::GraspOk), IllegalTransition);
}

TEST(Mission, CompletedAcceptsNothing) {
  using E = MissionEvent;
  const auto s = apply({}, {E::PlanDone, E::Engaged, E::GraspOk, E::RetractDone, E::Plan2Done, E::Engaged, E::InsertOk,
                            E::ReleaseOk});
  ASSERT_TRUE(s.completed);
  for (auto e : {E::Abort, E::ReleaseOk, E::Engaged}) EXPECT_THROW(phase_transition(s, e), IllegalTransition);
}

TEST(Mission, AutonomousMotionOnlyBetweenTeleoperatedPhases) {
  EXPECT_TRUE(autonomous_motion_allowed(MissionPhase::PreCollection));
  EXPECT_FALSE(autonomous_motion_allowed(MissionPhase::Collection));
  EXPECT_TRUE(autonomous_motion_allowed(MissionPhase::PostCollection));
  EXPECT_TRUE(autonomous_motion_allowed(MissionPhase::PreUtilization));
  EXPECT_FALSE(autonomous_motion_allowed(MissionPhase::Utilization));
  EXPECT_FALSE(autonomous_motion_allowed(MissionPhase::PostUtilization));
  for (int i = 0; i <= 5; ++i) {
    const auto p = static_cast<MissionPhase>(i);
    EXPECT_EQ(phase_from_string(to_string(p)), p);
  }
  EXPECT_FALSE(phase_from_string("landing"));
}

// ---------------------------------------------------------------------------
// Rehearsal and planning

class Rvp : public ::testing::Test {
 protected:
  ArmModel arm = config::default_arm();
  WorldModel world = config::default_world();

  Trajectory straight(const JointConfig& a, const JointConfig& b, double duration = 2.0) const {
    Trajectory t;
    t.world_hash = world.hash();
    t.waypoints = {{0.0, a}, {duration, b}};
    return t;
  }
};

TEST_F(Rvp, RehearsalAgreesWithBruteForce) {
  Rng rng(5);
  const JointConfig lo = arm.lower_limits(), hi = arm.upper_limits();
  int free = 0, hit = 0;
  for (int i = 0; i < 150; ++i) {
    JointConfig posture = arm.home;
    for (std::size_t j = 0; j < arm.dof(); ++j) posture[j] += rng.uniform(-0.5, 0.5);
    const auto frames = oracle::link_frames(arm, arm.clamp(posture));
    const Vec3 near = frames[static_cast<std::size_t>(rng.uniform_int(3, 7))].translation();
    const WorldModel w({make_sphere("probe", rng.uniform(0.03, 0.08), Pose(near + Vec3(rng.normal(0, 0.1), rng.normal(0, 0.1), rng.normal(0, 0.1))))});
    JointConfig a(arm.dof()), b(arm.dof());
    for (std::size_t j = 0; j < arm.dof(); ++j) {
      a[j] = rng.uniform(lo[j], hi[j]);
      b[j] = std::clamp(a[j] + rng.uniform(-0.4, 0.4), lo[j], hi[j]);
    }
    Trajectory t;
    t.waypoints = {{0.0, a}, {1.0, b}};
    const auto rep = rehearse(t, arm, w);
    const bool collides = oracle::trajectory_collides(t, arm, w.obstacles(), 0.001);
    free += rep.collision_free;
    hit += collides;
    EXPECT_FALSE(rep.collision_free && collides) << "missed collision on case " << i;
    if (!rep.collision_free) {
      ASSERT_TRUE(rep.first_violation);
      EXPECT_NE(rep.first_violation->pair.find('|'), std::string::npos);
      EXPECT_GE(rep.first_violation->time, 0.0);
      EXPECT_LE(rep.first_violation->time, 1.0);
    }
  }
  EXPECT_GT(free, 10);
  EXPECT_GT(hit, 10);
}

TEST_F(Rvp, RehearsalFindsTheFirstContactTime) {
  // A sphere parked where the hand passes halfway along a joint-0 sweep.
  JointConfig b = arm.home;
  b[0] += 0.8;
  JointConfig mid = arm.home;
  mid[0] += 0.4;
  const Vec3 hand = oracle::grasp_frame(arm, mid).translation();
  const WorldModel w({make_sphere("probe", 0.02, Pose(hand))});
  Trajectory t;
  t.waypoints = {{0.0, arm.home}, {1.0, b}};
  const auto rep = rehearse(t, arm, w);
  ASSERT_FALSE(rep.collision_free);
  double first = -1.0;
  for (int i = 0; i <= 8000 && first < 0.0; ++i) {
    const double s = i / 8000.0;
    if (oracle::in_collision(arm, arm.home + s * (b - arm.home), w.obstacles())) first = s;
  }
  ASSERT_GT(first, 0.0);
  ASSERT_LT(first, 0.5);
  // Reported at the first validation sample at or after contact: one 0.005 rad step late at most.
  const double step = RehearseOptions{}.fine_step / 0.8;
  EXPECT_LE(rep.first_violation->time, first + step + 1e-9);
  EXPECT_GE(rep.first_violation->time, first - 1.0 / 8000.0);
}

TEST_F(Rvp, RehearsalReportsLimitsAndHash) {
  JointConfig over = arm.home;
  over[3] = arm.joints[3].upper + 0.01;
  const auto rep = rehearse(straight(arm.home, over, 1.0), arm, world);
  ASSERT_EQ(rep.limit_violations.size(), 1u);
  EXPECT_EQ(rep.limit_violations[0].joint, 3u);
  EXPECT_FALSE(rep.passed());
  Trajectory stale = straight(arm.home, arm.home);
  stale.world_hash ^= 1;
  EXPECT_FALSE(rehearse(stale, arm, world).world_hash_matches);
}

TEST_F(Rvp, PlannerOutputIsValidAndCollisionFree) {
  const Pose goal = forward_kinematics(arm, arm.home) * Pose::from_xyz_rpy(Vec3(0.1, -0.15, 0.05), Vec3(0.0, 0.0, 0.3));
  PlannerOptions opt;
  opt.trajectory_id = 12;
  opt.seed = 3;
  const Trajectory t = plan_p2p(arm, world, arm.home, goal, opt);
  EXPECT_EQ(t.id, 12u);
  EXPECT_EQ(t.world_hash, world.hash());
  EXPECT_TRUE(t.start() == arm.home);
  EXPECT_NO_THROW(validate_trajectory(t, arm, opt.densify_step));
  EXPECT_TRUE(rehearse(t, arm, world).passed());
  EXPECT_FALSE(oracle::trajectory_collides(t, arm, world.obstacles(), 0.002));
  const auto d = distance(forward_kinematics(arm, t.goal()), goal);
  EXPECT_LT(d.position, 1e-5);
  EXPECT_LT(d.angle, 1e-4);
  // Joint velocity stays within the bound between samples.
  for (std::size_t i = 1; i < t.waypoints.size(); ++i) {
    const auto& a = t.waypoints[i - 1];
    const auto& b = t.waypoints[i];
    EXPECT_LE((b.q - a.q).cwiseAbs().maxCoeff() / (b.time - a.time), opt.max_velocity * (1.0 + 1e-6));
  }
}

TEST_F(Rvp, PlannerIsDeterministicPerSeed) {
  const Pose goal = forward_kinematics(arm, arm.home) * Pose::from_xyz_rpy(Vec3(-0.12, 0.1, 0.0), Vec3::Zero());
  PlannerOptions opt;
  opt.seed = 17;
  EXPECT_EQ(plan_p2p(arm, world, arm.home, goal, opt), plan_p2p(arm, world, arm.home, goal, opt));
}

TEST_F(Rvp, PlannerErrors) {
  EXPECT_THROW(plan_p2p(arm, world, arm.home, Pose::from_xyz_rpy(Vec3(3.0, 0, 0), Vec3::Zero())), GoalUnreachable);
  const Vec3 hand = forward_kinematics(arm, arm.home).position;
  const WorldModel blocked = world.with(make_sphere("blocker", 0.05, Pose(hand)));
  EXPECT_THROW(plan_p2p(arm, blocked, arm.home, forward_kinematics(arm, arm.home)), StartInCollision);
  EXPECT_THROW(plan_p2p(arm, world, JointConfig::Zero(3), Pose::identity()), DimensionMismatch);
}

// ---------------------------------------------------------------------------
// Trajectories

TEST_F(Rvp, SampleInterpolatesLinearlyAndClamps) {
  JointConfig b = arm.home;
  b[1] += 0.4;
  Trajectory t = straight(arm.home, b, 2.0);
  t.waypoints.push_back({3.0, arm.home});
  EXPECT_TRUE(t.sample(-1.0) == arm.home);
  EXPECT_NEAR(t.sample(0.5)[1], arm.home[1] + 0.1, 1e-15);
  EXPECT_NEAR(t.sample(2.5)[1], arm.home[1] + 0.2, 1e-15);
  EXPECT_TRUE(t.sample(9.0) == arm.home);
  EXPECT_THROW(Trajectory{}.sample(0.0), DimensionMismatch);
}

TEST_F(Rvp, ValidationCatchesBrokenTrajectories) {
  JointConfig b = arm.home;
  b[0] += 0.01;
  Trajectory t = straight(arm.home, b, 0.1);
  EXPECT_NO_THROW(validate_trajectory(t, arm, 0.02));
  t.waypoints[1].time = 0.0;
  EXPECT_THROW(validate_trajectory(t, arm, 0.02), BadConfig);
  t.waypoints[1].time = 0.1;
  t.waypoints[1].q[0] += 0.1;
  EXPECT_THROW(validate_trajectory(t, arm, 0.02), BadConfig);
  t.waypoints[1].q[0] = arm.joints[0].upper + 0.001;
  EXPECT_THROW(validate_trajectory(t, arm, 10.0), JointLimitViolation);
}

TEST_F(Rvp, TrajectoryFileRoundTripsExactly) {
  PlannerOptions opt;
  opt.trajectory_id = 44;
  const Trajectory t =
      plan_p2p(arm, world, arm.home, forward_kinematics(arm, arm.home) * Pose::from_xyz_rpy(Vec3(0.05, 0.05, 0.0), Vec3::Zero()), opt);
  const auto path = std::filesystem::temp_directory_path() / "isru_rvp_traj.json";
  config::save_trajectory(t, path);
  EXPECT_EQ(config::load_trajectory(path), t);
  std::filesystem::remove(path);
}

TEST_F(Rvp, TrajectoryParseErrorsNameTheField) {
  auto j = config::trajectory_to_json(straight(arm.home, arm.home));
  j["world_hash"] = "zz";
  try {
    config::parse_trajectory(j);
    FAIL();
  } catch (const BadConfig& e) {
    EXPECT_NE(std::string(e.what()).find("$.world_hash"), std::string::npos) << e.what();
  }
  j = config::trajectory_to_json(straight(arm.home, arm.home));
  j["kind"] = "world";
  EXPECT_THROW(config::parse_trajectory(j), BadConfig);
}

// ---------------------------------------------------------------------------
// World and scene

TEST_F(Rvp, WorldHashTracksContent) {
  EXPECT_EQ(world.hash(), config::default_world().hash());
  auto obs = world.obstacles();
  ASSERT_FALSE(obs.empty());
  obs[0].local_pose.position.x() += 1e-9;
  EXPECT_NE(WorldModel(obs).hash(), world.hash());
  EXPECT_NE(world.with(make_sphere("extra", 0.01, Pose::identity())).hash(), world.hash());
  const WorldModel pz({make_sphere("s", 0.1, Pose(Vec3(0.0, 0, 0)))});
  const WorldModel nz({make_sphere("s", 0.1, Pose(Vec3(-0.0, 0, 0)))});
  EXPECT_EQ(pz.hash(), nz.hash());
}

TEST_F(Rvp, WorldRejectsArmAttachedObstacles) {
  auto o = make_sphere("s", 0.1, Pose::identity());
  o.attachment = 2;
  EXPECT_THROW(WorldModel({o}), BadConfig);
}

TEST_F(Rvp, SceneSnapshotRoundTrips) {
  const SimModel model = config::default_environment();
  SimState sim = initial_state(model, forward_kinematics(arm, arm.home));
  sim.clock = 1.25;
  sim.gripper = Gripper::Closing;
  const Trajectory t = straight(arm.home, arm.home);
  const SceneSnapshot s = snapshot_scene(sim, arm, world, arm.home, MissionPhase::PostCollection, &t);
  EXPECT_EQ(s.link_poses.size(), arm.dof() + 1);
  EXPECT_EQ(s.planned_path.size(), 2u);
  const SceneSnapshot back = config::parse_scene(config::scene_to_json(s));
  EXPECT_EQ(back, s);
  EXPECT_EQ(config::scene_hash(back), config::scene_hash(s));
}
