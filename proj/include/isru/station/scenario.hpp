#pragma once

// Scenario configuration: one row of the experiment table plus everything a
// session needs to be built from it.

#include "isru/config.hpp"
#include "isru/errors.hpp"
#include "isru/operator_model.hpp"
#include "isru/station/station.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace isru {

struct ScenarioConfig {
  std::string name = "default";
  bool force_feedback = true;
  double delay = 0.0;            // s, each way
  double jitter = 0.0;           // s
  double loss_probability = 0.0;
  int trials = 50;
  std::uint64_t base_seed = 1;
  double trial_timeout = 400.0;  // s of sim time
  op::OperatorParams operator_params;
  station::StationConfig station;
  std::string arm_path;          // empty: bundled
  std::string world_path;
  std::string environment_path;

  void validate() const {
    if (trials < 1) throw BadConfig("scenario '" + name + "': trials must be >= 1");
    if (!(delay >= 0.0)) throw BadConfig("scenario '" + name + "': delay must be >= 0");
    if (!(trial_timeout > 0.0)) throw BadConfig("scenario '" + name + "': trial_timeout must be > 0");
    operator_params.validate();
    station.hcs.mapping.validate();
  }
};

namespace config {

inline op::OperatorParams parse_operator(const Node& n, op::OperatorParams p) {
  auto num = [&](const char* key, double& v) {
    if (n.has(key)) v = n[key].non_negative();
  };
  if (n.has("uses_force_feedback")) p.uses_force_feedback = n["uses_force_feedback"].boolean();
  num("reaction_delay_s", p.reaction_delay);
  num("tremor_amplitude_m", p.tremor_amplitude);
  num("tremor_frequency_hz", p.tremor_frequency);
  num("servo_speed_mps", p.servo_speed);
  num("compliance_gain_mps_per_n", p.compliance_gain);
  num("perception_noise_m", p.perception_noise);
  num("contact_force_n", p.contact_force);
  num("light_contact_n", p.light_contact);
  num("lateral_ok_n", p.lateral_ok);
  num("force_regulation_gain_mps_per_n", p.force_regulation_gain);
  num("search_pitch_m", p.search_pitch);
  num("search_speed_mps", p.search_speed);
  num("settle_time_s", p.settle_time);
  num("engage_misalignment_rad", p.engage_misalignment);
  num("engage_height_m", p.engage_height);
  num("press_step_m", p.press_step);
  num("press_limit_m", p.press_limit);
  num("teleop_timeout_s", p.teleop_timeout);
  if (n.has("plan_attempts")) p.plan_attempts = static_cast<int>(n["plan_attempts"].integer());
  if (n.has("seed")) p.seed = n["seed"].unsigned_integer();
  try {
    p.validate();
  } catch (const BadConfig& e) {
    n.fail(e.what());
  }
  return p;
}

inline Json operator_to_json(const op::OperatorParams& p) {
  return {{"uses_force_feedback", p.uses_force_feedback},
          {"reaction_delay_s", p.reaction_delay},
          {"tremor_amplitude_m", p.tremor_amplitude},
          {"tremor_frequency_hz", p.tremor_frequency},
          {"servo_speed_mps", p.servo_speed},
          {"compliance_gain_mps_per_n", p.compliance_gain},
          {"perception_noise_m", p.perception_noise},
          {"contact_force_n", p.contact_force},
          {"light_contact_n", p.light_contact},
          {"lateral_ok_n", p.lateral_ok},
          {"force_regulation_gain_mps_per_n", p.force_regulation_gain},
          {"search_pitch_m", p.search_pitch},
          {"search_speed_mps", p.search_speed},
          {"settle_time_s", p.settle_time},
          {"engage_misalignment_rad", p.engage_misalignment},
          {"engage_height_m", p.engage_height},
          {"press_step_m", p.press_step},
          {"press_limit_m", p.press_limit},
          {"teleop_timeout_s", p.teleop_timeout},
          {"plan_attempts", p.plan_attempts}};
}

inline station::StationConfig parse_station(const Node& n, station::StationConfig s) {
  if (n.has("force_scale")) s.hcs.mapping.force_scale = n["force_scale"].positive();
  if (n.has("payload_mass_kg")) s.hcs.mapping.payload_mass = n["payload_mass_kg"].non_negative();
  if (n.has("orientation_lock")) s.hcs.mapping.orientation_lock = n["orientation_lock"].boolean();
  if (n.has("tremor_cutoff_hz")) s.hcs.tremor_cutoff_hz = n["tremor_cutoff_hz"].positive();
  if (n.has("tremor_filter")) s.hcs.tremor_filter_enabled = n["tremor_filter"].boolean();
  if (n.has("engage_tolerance_rad")) s.hcs.engage_tolerance = n["engage_tolerance_rad"].positive();
  if (n.has("workspace_half_extents_m")) s.hcs.workspace.half_extents = n["workspace_half_extents_m"].vec3();
  if (n.has("pre_collection_goal")) s.pre_collection_goal = parse_pose(n["pre_collection_goal"]);
  if (n.has("pre_utilization_goal")) s.pre_utilization_goal = parse_pose(n["pre_utilization_goal"]);
  if (n.has("retract_height_m")) s.retract_height = n["retract_height_m"].positive();
  if (n.has("resend_margin_s")) s.resend_margin = n["resend_margin_s"].non_negative();
  if (n.has("max_resends")) s.max_resends = static_cast<int>(n["max_resends"].integer());
  if (n.has("planner")) {
    const Node p = n["planner"];
    if (p.has("max_samples")) s.planner.max_samples = static_cast<int>(p["max_samples"].integer());
    if (p.has("clearance_margin_m")) s.planner.clearance_margin = p["clearance_margin_m"].non_negative();
    if (p.has("max_velocity_radps")) s.planner.max_velocity = p["max_velocity_radps"].positive();
    if (p.has("max_acceleration_radps2")) s.planner.max_acceleration = p["max_acceleration_radps2"].positive();
  }
  return s;
}

/// One scenario object on top of the given defaults.
inline ScenarioConfig parse_scenario(const Node& n, ScenarioConfig s) {
  if (n.has("name")) s.name = n["name"].string();
  if (n.has("force_feedback")) s.force_feedback = n["force_feedback"].boolean();
  if (n.has("delay_s")) s.delay = n["delay_s"].non_negative();
  if (n.has("jitter_s")) s.jitter = n["jitter_s"].non_negative();
  if (n.has("loss_probability")) s.loss_probability = n["loss_probability"].non_negative();
  if (n.has("trials")) {
    const auto t = n["trials"].integer();
    if (t < 1) n["trials"].fail("must be >= 1");
    s.trials = static_cast<int>(t);
  }
  if (n.has("base_seed")) s.base_seed = n["base_seed"].unsigned_integer();
  if (n.has("trial_timeout_s")) s.trial_timeout = n["trial_timeout_s"].positive();
  if (n.has("operator")) s.operator_params = parse_operator(n["operator"], s.operator_params);
  if (n.has("station")) s.station = parse_station(n["station"], s.station);
  if (n.has("arm")) s.arm_path = n["arm"].string();
  if (n.has("world")) s.world_path = n["world"].string();
  if (n.has("environment")) s.environment_path = n["environment"].string();
  s.operator_params.uses_force_feedback = s.force_feedback;
  s.station.force_feedback = s.force_feedback;
  if (s.jitter > s.delay) n.fail("jitter_s must not exceed delay_s");
  if (s.loss_probability > 1.0) n["loss_probability"].fail("must be <= 1");
  return s;
}

/// A scenario file: {"format_version", "kind": "scenarios", "defaults": {...}, "scenarios": [...]}.
/// Relative config paths resolve against the file's directory.
inline std::vector<ScenarioConfig> parse_scenarios(const Json& j, const std::filesystem::path& base_dir = {}) {
  const Node root(j);
  check_version(root, "scenarios");
  ScenarioConfig defaults;
  if (root.has("defaults")) defaults = parse_scenario(root["defaults"], defaults);
  std::vector<ScenarioConfig> out;
  const Node list = root["scenarios"];
  if (list.size() == 0) list.fail("expected at least one scenario");
  for (std::size_t i = 0; i < list.size(); ++i) {
    ScenarioConfig s = parse_scenario(list[i], defaults);
    for (std::string* p : {&s.arm_path, &s.world_path, &s.environment_path})
      if (!p->empty() && std::filesystem::path(*p).is_relative() && !base_dir.empty()) *p = (base_dir / *p).string();
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

inline std::vector<ScenarioConfig> load_scenarios(const std::filesystem::path& path) {
  return parse_scenarios(load_json_file(path), path.parent_path());
}

inline std::vector<ScenarioConfig> standard_scenarios() { return load_scenarios(bundled_dir() / "scenarios_abcd.json"); }

/// A single-scenario session file (used by `serve`); either a bare scenario
/// object with format_version, or a scenarios file whose first entry is used.
inline ScenarioConfig load_session_config(const std::filesystem::path& path) {
  const Json j = load_json_file(path);
  const Node root(j);
  if (root.has("scenarios")) return load_scenarios(path).front();
  check_version(root, "scenario");
  ScenarioConfig s = parse_scenario(root, ScenarioConfig{});
  s.validate();
  return s;
}

}  // namespace config

}  // namespace isru
