#pragma once

// A session wires one robot, one channel pair, one station and one controller
// onto a 100 Hz logical clock. Tick order:
//   1. the station takes what the downlink delivers this tick
//   2. the controller (virtual operator or remote client) acts on the station
//   3. the station's messages go onto the uplink
//   4. the robot takes what the uplink delivers, steps once, sends telemetry
// so a command sent at tick T reaches the robot at T + D and its effect is
// back at the station at T + 2D (D = delay in ticks).

#include "isru/impedance.hpp"
#include "isru/link/capture.hpp"
#include "isru/link/channel.hpp"
#include "isru/link/codec.hpp"
#include "isru/operator_model.hpp"
#include "isru/robot.hpp"
#include "isru/rvp/scene.hpp"
#include "isru/station/scenario.hpp"
#include "isru/station/station.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace isru {

enum class SessionMode { Scripted, Interactive };

/// Sub-seed streams derived from a trial seed.
enum class SeedStream : std::uint64_t { Uplink = 1, Downlink = 2, Operator = 3, Planner = 4 };

inline std::uint64_t sub_seed(std::uint64_t seed, SeedStream s) { return mix_seed(seed, static_cast<std::uint64_t>(s)); }

class Session {
 public:
  using Controller = std::function<std::vector<station::Command>(const station::StationView&)>;

  Session(const ScenarioConfig& cfg, std::uint64_t seed, SessionMode mode = SessionMode::Scripted)
      : cfg_(cfg), seed_(seed), mode_(mode) {
    cfg_.validate();
    arm_ = std::make_unique<ArmModel>(cfg_.arm_path.empty() ? config::default_arm() : config::load_arm(cfg_.arm_path));
    world_ = cfg_.world_path.empty() ? config::default_world() : config::load_world_model(cfg_.world_path);
    model_ = cfg_.environment_path.empty() ? config::default_environment()
                                           : config::load_environment(cfg_.environment_path);
    model_.validate();
    dt_ = model_.dt;

    link::ChannelConfig up{cfg_.delay, cfg_.jitter, cfg_.loss_probability, 1.0 / dt_, sub_seed(seed, SeedStream::Uplink)};
    link::ChannelConfig down = up;
    down.seed = sub_seed(seed, SeedStream::Downlink);
    uplink_ = std::make_unique<link::DelayChannel<link::WireFrame>>(up);
    downlink_ = std::make_unique<link::DelayChannel<link::WireFrame>>(down);

    station::StationConfig sc = cfg_.station;
    sc.force_feedback = cfg_.force_feedback;
    sc.hcs.mapping.payload_mass = model_.env.sample_mass;
    sc.planner.seed = sub_seed(seed, SeedStream::Planner);
    station_ = std::make_unique<station::Station>(*arm_, world_, model_.env, sc, cfg_.delay, dt_);
    robot_ = std::make_unique<RobotNode>(*arm_, model_, arm_->home);

    if (mode_ == SessionMode::Scripted) {
      op::OperatorParams p = cfg_.operator_params;
      p.uses_force_feedback = cfg_.force_feedback;
      p.seed = sub_seed(seed, SeedStream::Operator);
      operator_ = std::make_unique<op::VirtualOperator>(p, op::TaskKnowledge::from(model_.env, sc.hcs.mapping), dt_);
    }
  }

  const ScenarioConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }
  SessionMode mode() const { return mode_; }
  std::int64_t tick_count() const { return tick_; }
  double time() const { return static_cast<double>(tick_) * dt_; }
  double dt() const { return dt_; }
  const ArmModel& arm() const { return *arm_; }
  const WorldModel& world() const { return world_; }
  const SimModel& sim_model() const { return model_; }
  station::Station& station() { return *station_; }
  const station::Station& station() const { return *station_; }
  RobotNode& robot() { return *robot_; }
  const RobotNode& robot() const { return *robot_; }
  op::VirtualOperator* virtual_operator() { return operator_.get(); }
  const link::DelayChannel<link::WireFrame>& uplink() const { return *uplink_; }
  const link::DelayChannel<link::WireFrame>& downlink() const { return *downlink_; }
  const std::vector<station::Reply>& last_replies() const { return replies_; }

  /// Records every frame pushed onto either channel.
  void set_capture(std::shared_ptr<link::CaptureWriter> w) { capture_ = std::move(w); }

  station::StationView view() const { return station_->view(tick_); }

  SceneSnapshot snapshot() const {
    return snapshot_scene(robot_->state(), *arm_, world_, robot_->joints(), station_->mission().phase,
                          station_->plan().get());
  }

  /// One tick driven by the session's own virtual operator.
  void step() {
    if (!operator_) throw BadConfig("session: no virtual operator in interactive mode");
    step([this](const station::StationView& v) { return operator_->tick(v); });
  }

  /// One tick with an arbitrary controller.
  void step(const Controller& controller) {
    for (auto& f : downlink_->poll(tick_)) station_->on_message(link::decode(f.bytes), tick_);

    replies_.clear();
    for (const auto& c : controller(station_->view(tick_))) replies_.push_back(station_->apply(c, tick_));

    for (auto& m : station_->outgoing(tick_)) {
      auto f = link::to_wire(m);
      if (capture_) capture_->write(tick_, link::Direction::Uplink, f.bytes);
      uplink_->push(std::move(f), tick_);
    }

    std::vector<link::LinkMessage> inbox;
    for (auto& f : uplink_->poll(tick_)) inbox.push_back(link::decode(f.bytes));
    for (auto& m : robot_->tick(inbox)) {
      m.seq = next_down_seq_++;
      auto f = link::to_wire(m);
      if (capture_) capture_->write(tick_, link::Direction::Downlink, f.bytes);
      downlink_->push(std::move(f), tick_);
    }
    ++tick_;
  }

 private:
  ScenarioConfig cfg_;
  std::uint64_t seed_;
  SessionMode mode_;
  std::unique_ptr<ArmModel> arm_;  // stable address: station and robot keep pointers
  WorldModel world_;
  SimModel model_;
  double dt_ = 0.01;
  std::unique_ptr<link::DelayChannel<link::WireFrame>> uplink_;
  std::unique_ptr<link::DelayChannel<link::WireFrame>> downlink_;
  std::unique_ptr<station::Station> station_;
  std::unique_ptr<RobotNode> robot_;
  std::unique_ptr<op::VirtualOperator> operator_;
  std::shared_ptr<link::CaptureWriter> capture_;
  std::vector<station::Reply> replies_;
  std::int64_t tick_ = 0;
  std::uint64_t next_down_seq_ = 1;
};

inline std::unique_ptr<Session> create_session(const ScenarioConfig& cfg, std::uint64_t seed,
                                               SessionMode mode = SessionMode::Scripted) {
  return std::make_unique<Session>(cfg, seed, mode);
}

// ---------------------------------------------------------------------------
// Trials

struct TrialRecord {
  std::string scenario;
  std::uint64_t trial = 0;
  std::uint64_t seed = 0;
  bool force_feedback = true;
  double delay_s = 0.0;
  bool fetching_success = false;
  bool assembly_success = false;
  bool safety_tripped = false;
  bool completed = false;
  std::string final_phase;
  std::string failure;       // empty on success
  double peak_force_n = 0.0;
  double peak_torque_nm = 0.0;
  double duration_s = 0.0;   // sim time

  bool operator==(const TrialRecord&) const = default;
};

/// Runs the full mission with the session's virtual operator.
inline TrialRecord run_trial(Session& s, std::uint64_t trial_index = 0) {
  if (s.mode() != SessionMode::Scripted) throw BadConfig("run_trial: session is not scripted");
  const auto limit = static_cast<std::int64_t>(std::llround(s.config().trial_timeout / s.dt()));
  while (!s.station().mission().terminal() && s.tick_count() < limit) s.step();
  if (!s.station().mission().terminal()) s.station().abort("trial timeout");

  TrialRecord r;
  r.scenario = s.config().name;
  r.trial = trial_index;
  r.seed = s.seed();
  r.force_feedback = s.config().force_feedback;
  r.delay_s = s.config().delay;
  const auto& m = s.station().mission();
  r.completed = m.completed;
  r.final_phase = std::string(to_string(m.phase));
  r.safety_tripped = s.robot().state().safety_tripped;
  r.fetching_success = s.station().fetched();
  r.assembly_success = m.completed && !r.safety_tripped && assembly_success(s.sim_model().env, s.robot().state());
  r.failure = m.completed ? (r.assembly_success ? "" : "released out of the slot") : s.station().abort_reason();
  r.peak_force_n = s.robot().peak_force();
  r.peak_torque_nm = s.robot().peak_torque();
  r.duration_s = s.time();
  return r;
}

inline TrialRecord run_trial(const ScenarioConfig& cfg, std::uint64_t trial_index) {
  Session s(cfg, cfg.base_seed + trial_index);
  return run_trial(s, trial_index);
}

namespace config {

inline Json trial_to_json(const TrialRecord& r) {
  return {{"scenario", r.scenario},
          {"trial", r.trial},
          {"seed", r.seed},
          {"force_feedback", r.force_feedback},
          {"delay_s", r.delay_s},
          {"fetching_success", r.fetching_success},
          {"assembly_success", r.assembly_success},
          {"safety_tripped", r.safety_tripped},
          {"completed", r.completed},
          {"final_phase", r.final_phase},
          {"failure", r.failure},
          {"peak_force_n", r.peak_force_n},
          {"peak_torque_nm", r.peak_torque_nm},
          {"duration_s", r.duration_s}};
}

inline TrialRecord parse_trial(const Json& j) {
  const Node n(j);
  TrialRecord r;
  r.scenario = n["scenario"].string();
  r.trial = n["trial"].unsigned_integer();
  r.seed = n["seed"].unsigned_integer();
  r.force_feedback = n["force_feedback"].boolean();
  r.delay_s = n["delay_s"].number();
  r.fetching_success = n["fetching_success"].boolean();
  r.assembly_success = n["assembly_success"].boolean();
  r.safety_tripped = n["safety_tripped"].boolean();
  r.completed = n["completed"].boolean();
  r.final_phase = n["final_phase"].string();
  r.failure = n["failure"].string();
  r.peak_force_n = n["peak_force_n"].number();
  r.peak_torque_nm = n["peak_torque_nm"].number();
  r.duration_s = n["duration_s"].number();
  return r;
}

}  // namespace config

}  // namespace isru
