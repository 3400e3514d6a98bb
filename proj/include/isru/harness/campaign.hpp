#pragma once

// Campaign runner: every trial of every scenario, per-trial records streamed
// in trial order, and a summary table rendered as text, CSV or JSON.

#include "isru/config.hpp"
#include "isru/errors.hpp"
#include "isru/station/scenario.hpp"
#include "isru/station/session.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace isru::harness {

using config::Json;

struct CampaignOptions {
  std::optional<int> trials;                // overrides every scenario's count
  std::optional<std::uint64_t> base_seed;   // overrides every scenario's base seed
  int threads = 1;
};

struct SummaryRow {
  std::string scenario;
  bool force_feedback = true;
  double delay_s = 0.0;
  int trials = 0;
  double fetch_rate = 0.0;
  double assembly_rate = 0.0;
  int safety_trips = 0;
  double mean_duration_s = 0.0;

  bool operator==(const SummaryRow&) const = default;
};

struct SummaryTable {
  std::vector<SummaryRow> rows;

  const SummaryRow& row(const std::string& scenario) const {
    for (const auto& r : rows)
      if (r.scenario == scenario) return r;
    throw BadConfig("summary: no scenario '" + scenario + "'");
  }

  bool operator==(const SummaryTable&) const = default;
};

struct CampaignResult {
  SummaryTable summary;
  std::vector<TrialRecord> records;  // scenario order, then trial index
};

/// One row from exactly the records of one scenario.
inline SummaryRow summarize(const ScenarioConfig& cfg, const std::vector<TrialRecord>& records) {
  SummaryRow r;
  r.scenario = cfg.name;
  r.force_feedback = cfg.force_feedback;
  r.delay_s = cfg.delay;
  r.trials = static_cast<int>(records.size());
  if (records.empty()) return r;
  int fetch = 0, assembly = 0;
  double duration = 0.0;
  for (const auto& t : records) {
    fetch += t.fetching_success;
    assembly += t.assembly_success;
    r.safety_trips += t.safety_tripped;
    duration += t.duration_s;
  }
  const double n = static_cast<double>(records.size());
  r.fetch_rate = fetch / n;
  r.assembly_rate = assembly / n;
  r.mean_duration_s = duration / n;
  return r;
}

using RecordSink = std::function<void(const TrialRecord&)>;

/// Runs every scenario in order. Trials of one scenario may run on several
/// threads; the sink still sees them in trial order. Config errors surface
/// before any trial runs.
inline CampaignResult run_campaign(std::vector<ScenarioConfig> scenarios, const CampaignOptions& opts = {},
                                   const RecordSink& sink = {}) {
  if (scenarios.empty()) throw BadConfig("campaign: no scenarios");
  for (auto& s : scenarios) {
    if (opts.trials) s.trials = *opts.trials;
    if (opts.base_seed) s.base_seed = *opts.base_seed;
    s.validate();
    Session probe(s, s.base_seed);  // loads and checks the referenced model files
  }
  CampaignResult out;
  const int threads = std::max(1, opts.threads);
  for (const auto& s : scenarios) {
    const auto n = static_cast<std::size_t>(s.trials);
    std::vector<std::optional<TrialRecord>> done(n);
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t emitted = 0;
    std::exception_ptr failure;

    auto worker = [&] {
      for (std::size_t i = next++; i < n; i = next++) {
        TrialRecord r;
        try {
          r = run_trial(s, i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          return;
        }
        std::lock_guard lock(mu);
        done[i] = std::move(r);
        while (emitted < n && done[emitted]) {
          if (sink) sink(*done[emitted]);
          ++emitted;
        }
      }
    };
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    std::vector<TrialRecord> records;
    for (auto& r : done) records.push_back(std::move(*r));
    out.summary.rows.push_back(summarize(s, records));
    out.records.insert(out.records.end(), records.begin(), records.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output

enum class TableFormat { Text, Csv, Json };

inline std::optional<TableFormat> table_format_from_string(const std::string& s) {
  if (s == "text") return TableFormat::Text;
  if (s == "csv") return TableFormat::Csv;
  if (s == "json") return TableFormat::Json;
  return std::nullopt;
}

inline constexpr const char* kCsvHeader =
    "scenario,force_feedback,delay_s,fetch_rate,assembly_rate,safety_trips,mean_duration_s";

namespace config_io {

inline Json summary_to_json(const SummaryTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"scenario", r.scenario},
                    {"force_feedback", r.force_feedback},
                    {"delay_s", r.delay_s},
                    {"trials", r.trials},
                    {"fetch_rate", r.fetch_rate},
                    {"assembly_rate", r.assembly_rate},
                    {"safety_trips", r.safety_trips},
                    {"mean_duration_s", r.mean_duration_s}});
  return {{"format_version", config::kFormatVersion}, {"kind", "summary"}, {"rows", std::move(rows)}};
}

inline SummaryTable parse_summary(const Json& j) {
  const config::Node root(j);
  config::check_version(root, "summary");
  SummaryTable t;
  const auto rows = root["rows"];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto n = rows[i];
    SummaryRow r;
    r.scenario = n["scenario"].string();
    r.force_feedback = n["force_feedback"].boolean();
    r.delay_s = n["delay_s"].non_negative();
    r.trials = static_cast<int>(n["trials"].integer());
    r.fetch_rate = n["fetch_rate"].non_negative();
    r.assembly_rate = n["assembly_rate"].non_negative();
    if (r.fetch_rate > 1.0) n["fetch_rate"].fail("must be <= 1");
    if (r.assembly_rate > 1.0) n["assembly_rate"].fail("must be <= 1");
    r.safety_trips = static_cast<int>(n["safety_trips"].integer());
    r.mean_duration_s = n["mean_duration_s"].non_negative();
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace config_io

inline std::string emit_table(const SummaryTable& t, TableFormat f) {
  std::ostringstream os;
  switch (f) {
    case TableFormat::Json:
      os << config_io::summary_to_json(t).dump(2) << "\n";
      break;
    case TableFormat::Csv: {
      // Round-trip precision so the CSV is as lossless as the JSON.
      os << kCsvHeader << "\n";
      os.precision(17);
      for (const auto& r : t.rows)
        os << r.scenario << ',' << (r.force_feedback ? "true" : "false") << ',' << r.delay_s << ',' << r.fetch_rate
           << ',' << r.assembly_rate << ',' << r.safety_trips << ',' << r.mean_duration_s << "\n";
      break;
    }
    case TableFormat::Text: {
      std::vector<std::vector<std::string>> cells{
          {"Scenario", "Force feedback", "Delay d", "Trials", "Fetching", "Assembly", "Safety trips", "Mean duration"}};
      auto fmt = [](const char* spec, double v) {
        char buf[64];
        std::snprintf(buf, sizeof buf, spec, v);
        return std::string(buf);
      };
      for (const auto& r : t.rows)
        cells.push_back({r.scenario, r.force_feedback ? "yes" : "no", fmt("%.1f s", r.delay_s),
                         std::to_string(r.trials), fmt("%.0f%%", 100.0 * r.fetch_rate),
                         fmt("%.0f%%", 100.0 * r.assembly_rate), std::to_string(r.safety_trips),
                         fmt("%.1f s", r.mean_duration_s)});
      std::vector<std::size_t> width(cells.front().size(), 0);
      for (const auto& row : cells)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
      for (const auto& row : cells) {
        for (std::size_t c = 0; c < row.size(); ++c) {
          if (c) os << "  ";
          // First column left-aligned, numbers right-aligned.
          if (c == 0) os << row[c] << std::string(width[c] - row[c].size(), ' ');
          else os << std::string(width[c] - row[c].size(), ' ') << row[c];
        }
        os << "\n";
      }
      break;
    }
  }
  return os.str();
}

/// One JSON object per line.
inline void write_record(std::ostream& os, const TrialRecord& r) {
  os << config::trial_to_json(r).dump() << "\n";
  if (!os) throw IoError("records: write failed");
}

inline std::vector<TrialRecord> read_records(std::istream& is) {
  std::vector<TrialRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(config::parse_trial(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw BadConfig("records line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace isru::harness
