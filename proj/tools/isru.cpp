// Command-line front end: run campaigns, serve a live session, inspect captures.

#include "isru/harness/campaign.hpp"
#include "isru/link/capture.hpp"
#include "isru/link/codec.hpp"
#include "isru/station/headless.hpp"
#include "isru/station/server.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

namespace {

using namespace isru;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int run_command(const std::string& scenarios_path, std::optional<int> trials, std::optional<std::uint64_t> seed,
                const std::string& out_dir, const std::string& format, int threads) {
  const auto fmt = harness::table_format_from_string(format);
  if (!fmt) throw BadConfig("--format must be text, csv or json");
  const auto scenarios =
      scenarios_path.empty() ? config::standard_scenarios() : config::load_scenarios(scenarios_path);

  std::ofstream records;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    records.open(std::filesystem::path(out_dir) / "records.jsonl");
    if (!records) throw IoError(out_dir + "/records.jsonl: cannot open for writing");
  }
  harness::CampaignOptions opt;
  opt.trials = trials;
  opt.base_seed = seed;
  opt.threads = threads;
  const auto result = harness::run_campaign(scenarios, opt, [&](const TrialRecord& r) {
    if (records.is_open()) {
      harness::write_record(records, r);
      records.flush();
    }
  });

  const std::string table = harness::emit_table(result.summary, *fmt);
  std::cout << table;
  if (!out_dir.empty()) {
    const char* ext = *fmt == harness::TableFormat::Csv ? "csv" : *fmt == harness::TableFormat::Json ? "json" : "txt";
    const auto path = std::filesystem::path(out_dir) / (std::string("summary.") + ext);
    std::ofstream s(path);
    s << table;
    if (!s) throw IoError(path.string() + ": write failed");
  }
  return 0;
}

int serve_command(const std::string& config_path, std::uint16_t port, double time_scale, double snapshot_hz,
                  std::uint64_t seed, const std::string& capture) {
  const ScenarioConfig cfg = config_path.empty() ? ScenarioConfig{} : config::load_session_config(config_path);
  station::ServerOptions opt;
  opt.port = port;
  opt.time_scale = time_scale;
  opt.snapshot_hz = snapshot_hz;
  opt.seed = seed;
  opt.capture_path = capture;
  station::StationServer server(cfg, opt);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::cerr << "serving scenario '" << cfg.name << "' on 127.0.0.1:" << server.port() << "\n";
  server.start();
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return 0;
}

int drive_command(const std::string& host, std::uint16_t port, double timeout) {
  station::StationClient client(host, port);
  station::HeadlessOptions opt;
  opt.timeout_s = timeout;
  station::HeadlessPilot pilot(client, opt);
  const auto r = pilot.run();
  for (const auto& p : r.phases) std::cout << "phase " << p << "\n";
  for (const auto& e : r.errors) std::cout << "error " << e << "\n";
  std::cout << (r.completed ? "mission completed" : "mission not completed") << " in " << r.final_phase << "\n";
  return r.completed ? 0 : 1;
}

std::string describe(const link::LinkMessage& m) {
  std::ostringstream os;
  std::visit(
      [&](const auto& b) {
        using T = std::decay_t<decltype(b)>;
        if constexpr (std::is_same_v<T, link::PoseRef>) {
          os << "xyz " << b.pose.position.transpose();
        } else if constexpr (std::is_same_v<T, link::GripperCmd>) {
          os << (b.action == link::GripperAction::Close ? "close" : "open");
        } else if constexpr (std::is_same_v<T, link::TrajectoryUplink>) {
          os << "id " << b.trajectory.id << " waypoints " << b.trajectory.waypoints.size();
        } else if constexpr (std::is_same_v<T, link::ExecAck>) {
          os << "id " << b.trajectory_id << " " << link::to_string(b.status);
        } else if constexpr (std::is_same_v<T, link::Telemetry>) {
          os << "ee " << b.ee_pose.position.transpose() << " f " << b.wrench.force.transpose() << " "
             << to_string(b.phase);
        } else if constexpr (std::is_same_v<T, link::Engage>) {
          os << (b.kind == link::EngageKind::Request ? "request" : b.kind == link::EngageKind::Ack ? "ack" : "deny");
        } else if constexpr (std::is_same_v<T, link::PhaseNotice>) {
          os << to_string(b.phase);
        }
      },
      m.body);
  return os.str();
}

int replay_command(const std::string& path, bool skip_telemetry) {
  const auto records = link::read_capture(path);
  std::size_t shown = 0;
  for (const auto& r : records) {
    const auto m = link::decode(r.frame);
    if (skip_telemetry && m.kind() == link::Kind::Telemetry) continue;
    std::cout << r.tick << ' ' << (r.direction == link::Direction::Uplink ? "up  " : "down") << ' '
              << link::to_string(m.kind()) << " seq " << m.seq << " t " << m.timestamp << ' ' << describe(m) << "\n";
    ++shown;
  }
  std::cerr << records.size() << " frames, " << shown << " shown\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Teleoperated fetch-and-assemble testbed"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a Monte-Carlo campaign and print the success table");
  std::string scenarios, out_dir, format = "text";
  std::optional<int> trials;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  run->add_option("--scenarios", scenarios, "Scenario file (default: bundled four-scenario campaign)");
  run->add_option("--trials", trials, "Trials per scenario")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "Base seed");
  run->add_option("--out", out_dir, "Directory for records.jsonl and the summary");
  run->add_option("--format", format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));
  run->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* serve = app.add_subcommand("serve", "Serve a live session over TCP");
  std::string config_path, capture;
  std::uint16_t port = 7878;
  double time_scale = 1.0, snapshot_hz = 20.0;
  std::uint64_t serve_seed = 1;
  serve->add_option("--config", config_path, "Scenario or scenarios file (first entry used)");
  serve->add_option("--port", port, "TCP port (0: any free port)");
  serve->add_option("--time-scale", time_scale, "Sim seconds per wall second");
  serve->add_option("--snapshot-hz", snapshot_hz, "Snapshots per wall second (>= 10)");
  serve->add_option("--seed", serve_seed, "Session seed");
  serve->add_option("--capture", capture, "Record every link frame to this file");

  auto* drive = app.add_subcommand("drive", "Fly a full mission against a running server, headless");
  std::string host = "127.0.0.1";
  std::uint16_t drive_port = 7878;
  double timeout = 300.0;
  drive->add_option("--host", host, "Server address");
  drive->add_option("--port", drive_port, "Server port");
  drive->add_option("--timeout", timeout, "Wall-clock limit in seconds");

  auto* replay = app.add_subcommand("replay", "Decode a capture file");
  std::string capture_in;
  bool skip_telemetry = false;
  replay->add_option("--capture", capture_in, "Capture file")->required();
  replay->add_flag("--no-telemetry", skip_telemetry, "Hide telemetry frames");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return run_command(scenarios, trials, seed, out_dir, format, threads);
    if (*serve) return serve_command(config_path, port, time_scale, snapshot_hz, serve_seed, capture);
    if (*drive) return drive_command(host, drive_port, timeout);
    if (*replay) return replay_command(capture_in, skip_telemetry);
  } catch (const isru::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
