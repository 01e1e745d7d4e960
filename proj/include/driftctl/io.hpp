#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "driftctl/belief.hpp"
#include "driftctl/common.hpp"
#include "driftctl/controller.hpp"
#include "driftctl/harness.hpp"
#include "driftctl/monitors.hpp"

// Persistence: audit logs (line-delimited, lossless round trip), CSV exports
// for steps, metrics, Pareto points and sweeps, and the calibration artifact
// bundle. All numeric output uses %.17g so doubles survive a round trip.
namespace driftctl::io {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline double parse_double(const std::string& tok, long line_no) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw ValidationError("audit log line " + std::to_string(line_no) + ": bad number '" + tok +
                          "'");
  return v;
}

inline long parse_long(const std::string& tok, long line_no) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  long v = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw ValidationError("audit log line " + std::to_string(line_no) + ": bad integer '" + tok +
                          "'");
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Audit log. First line is a header carrying what metric recomputation needs;
// then one flat record per step in this field order:
//   t action k new_labels budget_after fallback cert_n cert_r_hat cert_radius
//   cert_upper cert_safe cost risk_oracle exec_heavy z[0..zdim-1] b[0..3]
//   alpha drift_active group accepted served_loss alarm
// exec_heavy is an action index or -1 when no scheduled heavy ran; booleans
// are 0/1; NaN serializes as "nan".

struct LogFile {
  long window_len = 256;
  double tau = 0.2;
  std::vector<controller::AuditLogEntry> log;
  std::vector<harness::StepRecord> records;
};

inline void write_audit_log(std::ostream& os, const std::vector<controller::AuditLogEntry>& log,
                            const std::vector<harness::StepRecord>& records, long window_len,
                            double tau) {
  require(log.size() == records.size(), "write_audit_log: log and records length mismatch");
  std::size_t zdim = log.empty() ? monitors::kEvidenceDim : log.front().z_std.size();
  os << "# driftctl-log v1 window=" << window_len << " tau=" << fmt(tau) << " zdim=" << zdim
     << '\n';
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto& e = log[i];
    const auto& r = records[i];
    require(e.z_std.size() == zdim, "write_audit_log: inconsistent evidence dimension");
    os << e.t << ' ' << static_cast<int>(e.action) << ' ' << e.k << ' ' << e.new_labels << ' '
       << e.budget_after << ' ' << (e.fallback_active ? 1 : 0) << ' ' << e.cert_n << ' '
       << fmt(e.cert_r_hat) << ' ' << fmt(e.cert_radius) << ' ' << fmt(e.cert_upper) << ' '
       << (e.cert_safe ? 1 : 0) << ' ' << fmt(e.cost) << ' ' << fmt(e.risk_oracle) << ' '
       << (e.executed_heavy ? static_cast<int>(*e.executed_heavy) : -1);
    for (double z : e.z_std) os << ' ' << fmt(z);
    for (double b : e.belief) os << ' ' << fmt(b);
    os << ' ' << fmt(r.alpha) << ' ' << (r.drift_active ? 1 : 0) << ' ' << r.group << ' '
       << (r.accepted ? 1 : 0) << ' ' << fmt(r.served_loss) << ' ' << (r.alarm ? 1 : 0) << '\n';
  }
  if (!os) throw IoError("write_audit_log: write failed");
}

inline LogFile read_audit_log(std::istream& is) {
  LogFile out;
  std::string line;
  if (!std::getline(is, line)) throw ValidationError("audit log: empty input");
  long zdim = monitors::kEvidenceDim;
  {
    std::istringstream hs(line);
    std::string hash, magic, version, tok;
    if (!(hs >> hash >> magic >> version) || hash != "#" || magic != "driftctl-log" ||
        version != "v1")
      throw ValidationError("audit log: bad header");
    while (hs >> tok) {
      auto eq = tok.find('=');
      if (eq == std::string::npos) throw ValidationError("audit log: bad header field " + tok);
      std::string key = tok.substr(0, eq);
      std::string val = tok.substr(eq + 1);
      if (key == "window")
        out.window_len = detail::parse_long(val, 1);
      else if (key == "tau")
        out.tau = detail::parse_double(val, 1);
      else if (key == "zdim")
        zdim = detail::parse_long(val, 1);
      else
        throw ValidationError("audit log: unknown header field " + key);
    }
  }
  require(zdim >= 0, "audit log: negative evidence dimension");
  long line_no = 1;
  long prev_t = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string tok;
    while (ls >> tok) toks.push_back(tok);
    const std::size_t want = 14 + static_cast<std::size_t>(zdim) + 4 + 6;
    if (toks.size() != want)
      throw ValidationError("audit log line " + std::to_string(line_no) + ": expected " +
                            std::to_string(want) + " fields, got " + std::to_string(toks.size()));
    std::size_t i = 0;
    auto next_l = [&] { return detail::parse_long(toks[i++], line_no); };
    auto next_d = [&] { return detail::parse_double(toks[i++], line_no); };

    controller::AuditLogEntry e;
    harness::StepRecord r;
    e.t = next_l();
    long action = next_l();
    require(action >= 0 && action < controller::kNumActions, "audit log: action out of range");
    e.action = static_cast<controller::Action>(action);
    e.k = static_cast<int>(next_l());
    e.new_labels = next_l();
    e.budget_after = next_l();
    e.fallback_active = next_l() != 0;
    e.cert_n = next_l();
    e.cert_r_hat = next_d();
    e.cert_radius = next_d();
    e.cert_upper = next_d();
    e.cert_safe = next_l() != 0;
    e.cost = next_d();
    e.risk_oracle = next_d();
    long heavy = next_l();
    if (heavy >= 0) {
      require(heavy < controller::kNumActions, "audit log: heavy action out of range");
      e.executed_heavy = static_cast<controller::Action>(heavy);
    }
    e.z_std.clear();
    for (long j = 0; j < zdim; ++j) e.z_std.push_back(next_d());
    for (int j = 0; j < belief::kNumDriftTypes; ++j)
      e.belief[static_cast<std::size_t>(j)] = next_d();
    r.t = e.t;
    r.alpha = next_d();
    r.drift_active = next_l() != 0;
    r.group = static_cast<int>(next_l());
    r.accepted = next_l() != 0;
    r.served_loss = next_d();
    r.alarm = next_l() != 0;

    require(e.t > prev_t, "audit log: steps must be strictly increasing");
    prev_t = e.t;
    out.log.push_back(std::move(e));
    out.records.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV exports. Undefined values serialize as the NA sentinel, never as 0.

inline constexpr const char* kStepCsvHeader = "t,action,cost,k,upper,safe,risk_oracle";

inline std::string na_or(double v) { return std::isnan(v) ? "NA" : fmt(v); }

inline void write_step_csv(std::ostream& os, const std::vector<controller::AuditLogEntry>& log) {
  os << kStepCsvHeader << '\n';
  for (const auto& e : log) {
    os << e.t << ',' << controller::kActionNames[static_cast<std::size_t>(e.action)] << ','
       << fmt(e.cost) << ',' << e.k << ',' << fmt(e.cert_upper) << ',' << (e.cert_safe ? 1 : 0)
       << ',' << na_or(e.risk_oracle) << '\n';
  }
  if (!os) throw IoError("write_step_csv: write failed");
}

inline void write_metrics_csv(std::ostream& os, const harness::MetricsReport& m) {
  auto opt_l = [](const std::optional<long>& v) {
    return v ? std::to_string(*v) : std::string("NA");
  };
  auto opt_d = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("NA"); };
  os << "metric,value\n";
  os << "C_tot," << fmt(m.total_cost) << '\n';
  os << "V," << m.violations << '\n';
  os << "T_det," << opt_d(m.mean_detection_delay) << '\n';
  os << "T_rec," << opt_d(m.mean_recovery_time) << '\n';
  os << "worst_group," << opt_d(m.worst_group) << '\n';
  os << "FIR," << opt_d(m.fir) << '\n';
  os << "heavy_FIR," << opt_d(m.heavy_fir) << '\n';
  os << "heavy_actions," << m.heavy_count << '\n';
  os << "zero_coverage_steps," << m.zero_coverage_steps << '\n';
  os << "events," << m.event_onsets.size() << '\n';
  for (std::size_t e = 0; e < m.event_onsets.size(); ++e) {
    os << "event_" << e + 1 << "_onset," << m.event_onsets[e] << '\n';
    os << "event_" << e + 1 << "_T_det," << opt_l(m.detection_delays[e]) << '\n';
    os << "event_" << e + 1 << "_T_rec," << opt_l(m.recovery_times[e]) << '\n';
  }
  if (!os) throw IoError("write_metrics_csv: write failed");
}

struct ParetoPoint {
  std::string policy;
  double total_cost = 0.0;
  long violations = 0;
};

inline void write_pareto_csv(std::ostream& os, std::span<const ParetoPoint> points) {
  os << "policy,C_tot,V\n";
  for (const auto& p : points)
    os << p.policy << ',' << fmt(p.total_cost) << ',' << p.violations << '\n';
  if (!os) throw IoError("write_pareto_csv: write failed");
}

inline void write_sweep_csv(std::ostream& os, std::span<const harness::SweepRow> rows) {
  os << "axis,value,metric,mean,stddev,replicas\n";
  for (const auto& row : rows) {
    for (int j = 0; j < harness::kSweepMetrics; ++j) {
      os << harness::kSweepAxisNames[static_cast<std::size_t>(row.axis)] << ',' << fmt(row.value)
         << ',' << harness::kSweepMetricNames[static_cast<std::size_t>(j)] << ','
         << na_or(row.mean[static_cast<std::size_t>(j)]) << ','
         << na_or(row.stddev[static_cast<std::size_t>(j)]) << ',' << row.replicas << '\n';
    }
  }
  if (!os) throw IoError("write_sweep_csv: write failed");
}

// ---------------------------------------------------------------------------
// Calibration artifacts: gain table plus fitted belief parameters. The launch
// model and monitor references are rebuilt deterministically from the config,
// so they are not serialized.

inline void write_artifacts(std::ostream& os, const harness::RuntimeArtifacts& art) {
  os << "# driftctl-artifacts v1\n";
  for (int d = 0; d < belief::kNumDriftTypes; ++d) {
    os << "gain";
    for (int a = 0; a < controller::kNumActions; ++a) os << ' ' << fmt(art.gains.values(d, a));
    os << '\n';
  }
  os << "belief " << (art.belief_ready ? 1 : 0) << '\n';
  if (art.belief_ready) belief::save_model(os, art.emission, art.transitions);
  if (!os) throw IoError("write_artifacts: write failed");
}

// Fills the fitted components of an artifact bundle whose launch model and
// evidence engine were already rebuilt from the config.
inline void read_artifacts(std::istream& is, harness::RuntimeArtifacts& art) {
  std::string line;
  if (!std::getline(is, line) || line != "# driftctl-artifacts v1")
    throw ValidationError("artifacts: bad header");
  for (int d = 0; d < belief::kNumDriftTypes; ++d) {
    if (!std::getline(is, line)) throw ValidationError("artifacts: missing gain row");
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag != "gain") throw ValidationError("artifacts: expected gain row");
    std::string tok;
    for (int a = 0; a < controller::kNumActions; ++a) {
      if (!(ls >> tok)) throw ValidationError("artifacts: short gain row");
      art.gains.values(d, a) = detail::parse_double(tok, d + 2);
    }
  }
  if (!std::getline(is, line)) throw ValidationError("artifacts: missing belief flag");
  {
    std::istringstream ls(line);
    std::string tag;
    int flag = 0;
    if (!(ls >> tag >> flag) || tag != "belief")
      throw ValidationError("artifacts: bad belief flag");
    art.belief_ready = flag != 0;
  }
  if (art.belief_ready) {
    auto [emission, transitions] = belief::load_model(is);
    art.emission = emission;
    art.transitions = transitions;
  }
  controller::validate_gain_table(art.gains);
}

// ---------------------------------------------------------------------------
// File helpers with path context.

inline std::ofstream open_output(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open for writing: " + path);
  return f;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open for reading: " + path);
  return f;
}

}  // namespace driftctl::io
