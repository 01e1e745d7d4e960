#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "driftctl/belief.hpp"
#include "driftctl/common.hpp"
#include "driftctl/controller.hpp"
#include "driftctl/monitors.hpp"
#include "driftctl/riskcert.hpp"
#include "driftctl/simenv.hpp"

// Run orchestration: wires stream, monitors, belief filter and the
// certificate-gated controller into runnable policies, computes the
// operational metrics used to compare them, and drives sensitivity sweeps.
namespace driftctl::harness {

enum class PolicyKind : int {
  CertifiedController = 0,
  NoCertificate = 1,
  AlarmOnly = 2,
  AdaptAlways = 3,
  RetrainSchedule = 4,
  SelectiveOnly = 5,
};

inline constexpr int kNumPolicies = 6;

inline constexpr std::array<const char*, kNumPolicies> kPolicyNames = {
    "certified_controller", "no_certificate", "alarm_only",
    "adapt_always",         "retrain_schedule", "selective_only"};

inline std::optional<PolicyKind> parse_policy(std::string_view name) {
  for (int i = 0; i < kNumPolicies; ++i)
    if (name == kPolicyNames[static_cast<std::size_t>(i)]) return static_cast<PolicyKind>(i);
  return std::nullopt;
}

// Baseline policy parameters.
struct PolicyParams {
  double theta_alarm = 2.5;    // alarm_only: ||z||_2 trigger on standardized evidence
  double adapt_lr = 1e-4;      // adapt_always: entropy-minimization rate
  int adapt_steps = 1;         // adapt_always: gradient steps per stream step
  long retrain_period = 1200;  // retrain_schedule period
  double theta_sel = 0.6;      // confidence threshold for selective prediction
};

struct RunConfig {
  simenv::StreamConfig stream;
  controller::ControllerConfig ctrl;
  simenv::MonitorSettings monitors;
  simenv::RetrainConfig retrain;
  simenv::EpisodeConfig episodes;
  PolicyKind policy = PolicyKind::CertifiedController;
  PolicyParams params;
  int n_train = 512;   // launch training set
  int n_calib = 256;   // free pre-deployment labeled pool, seeds the audit window
  int tta_steps = 5;   // adaptation action inside the controller
  double tta_lr = 0.05;
  long safe_refresh_span = 100;  // consecutive safe steps before the safe checkpoint moves
  double monitor_noise = 0.0;    // sd of additive noise on standardized evidence
  int oracle_draws = 128;        // Monte Carlo draws for the per-step oracle risk
  std::uint64_t artifact_seed = 104729;  // launch model, references, belief episodes
};

// Desk-scale defaults: full runs finish in seconds while keeping every
// mechanism (detection, scheduling, budget exhaustion) observable. The
// type-level defaults in StreamConfig/ControllerConfig stay at their larger
// standalone values; everything here is overridable.
inline RunConfig default_run_config() {
  RunConfig rc;
  rc.stream.length = 4000;
  rc.stream.onset = 250;
  rc.stream.delay = 25;
  // A moderate shift (drifted risk ~0.19 against tau 0.20) keeps the
  // post-detection retrain able to absorb the damage within one window.
  rc.stream.cov_shift_norm = 1.8;
  rc.ctrl.label_budget = 400;
  rc.ctrl.cooldown_retrain = 200;
  rc.ctrl.cooldown_rollback = 100;
  rc.ctrl.k_max = 16;
  rc.ctrl.k_high = 8;
  rc.ctrl.k_low = 2;
  rc.ctrl.window_len = 256;
  rc.retrain.half_life = 64.0;
  return rc;
}

inline void validate_run_config(const RunConfig& rc) {
  simenv::validate_stream_config(rc.stream);
  controller::validate_config(rc.ctrl);
  require(rc.n_train >= rc.stream.classes, "run config: n_train too small");
  require(rc.n_calib >= 1, "run config: calibration pool must be nonempty");
  require(rc.stream.delay <= rc.n_calib,
          "run config: delay beyond the calibration pool empties the audit window");
  require(rc.tta_steps >= 0 && rc.tta_lr >= 0.0, "run config: bad adaptation settings");
  require(rc.params.theta_alarm >= 0.0, "run config: negative alarm threshold");
  require(rc.params.theta_sel >= 0.0 && rc.params.theta_sel <= 1.0,
          "run config: selective threshold out of range");
  require(rc.params.adapt_steps >= 0 && rc.params.adapt_lr >= 0.0,
          "run config: bad adapt_always settings");
  require(rc.params.retrain_period >= 1, "run config: retrain period must be positive");
  require(rc.safe_refresh_span >= 0, "run config: negative safe refresh span");
  require(rc.monitor_noise >= 0.0, "run config: negative monitor noise");
  require(rc.oracle_draws >= 0, "run config: negative oracle draw count");
}

// Everything trained before deployment and then held fixed across a run:
// launch model, frozen monitor references, belief parameters, gain table.
struct RuntimeArtifacts {
  simenv::SurrogateModel launch;
  simenv::EvidenceEngine engine;
  belief::EmissionModel emission;
  belief::TransitionMatrix transitions = belief::TransitionMatrix::Identity();
  controller::GainTable gains;
  bool belief_ready = false;
};

// fit_belief=false skips the episode generation and emission fit; runs then
// keep the prior belief, which is all certificate-only experiments need.
inline RuntimeArtifacts make_runtime_artifacts(const RunConfig& rc, bool fit_belief = true) {
  validate_run_config(rc);
  RuntimeArtifacts art;
  simenv::FitConfig fit;
  art.launch = simenv::train_launch_model(rc.stream, rc.n_train, fit, rc.artifact_seed);
  art.engine = simenv::make_evidence_engine(rc.stream, art.launch, rc.monitors, rc.artifact_seed);
  art.gains = controller::default_gain_table();
  if (fit_belief) {
    Rng rng = make_rng(rc.artifact_seed, 0x45504953u);
    auto data = simenv::generate_episodes(rc.episodes, rc.stream, art.engine, art.launch, rng);
    art.emission = belief::fit_emission(data);
    art.transitions = belief::fit_transitions(data);
    art.belief_ready = true;
  }
  return art;
}

// Per-step facts the audit log does not carry; together they are sufficient
// to recompute every metric offline.
struct StepRecord {
  long t = 0;
  double alpha = 0.0;
  bool drift_active = false;
  int group = 0;
  bool accepted = true;
  double served_loss = 0.0;
  bool alarm = false;
};

// ---------------------------------------------------------------------------
// Metric operations. The risk trace is 1-indexed by step (trace[t-1]); NaN
// marks steps where abstention left the trailing window empty.

inline std::optional<long> detection_delay(std::span<const unsigned char> alarms, long t0) {
  require(t0 >= 1 && t0 <= static_cast<long>(alarms.size()), "detection_delay: onset out of range");
  for (long t = t0; t <= static_cast<long>(alarms.size()); ++t)
    if (alarms[static_cast<std::size_t>(t - 1)]) return t - t0;
  return std::nullopt;
}

inline std::optional<long> recovery_time(std::span<const double> trace, long t0, double tau) {
  require(t0 >= 1 && t0 <= static_cast<long>(trace.size()), "recovery_time: onset out of range");
  for (long t = t0; t <= static_cast<long>(trace.size()); ++t)
    if (trace[static_cast<std::size_t>(t - 1)] <= tau) return t - t0;
  return std::nullopt;
}

// Strictly above the threshold counts; NaN (undefined) steps do not.
inline long violations(std::span<const double> trace, double tau) {
  long count = 0;
  for (double r : trace) count += r > tau ? 1 : 0;
  return count;
}

// Input: for each step, the windowed accuracies of the groups that had
// samples there (empty entries are skipped). Output: the minimum over steps
// of the per-step worst group.
inline double worst_group_accuracy(std::span<const std::vector<double>> per_step) {
  double worst = std::numeric_limits<double>::infinity();
  bool seen = false;
  for (const auto& groups : per_step) {
    for (double acc : groups) {
      worst = std::min(worst, acc);
      seen = true;
    }
  }
  require(seen, "worst_group_accuracy: no group with samples");
  return worst;
}

// Fraction of already-safe steps (trace <= tau) on which the policy
// intervened; heavy_only restricts interventions to retrain/rollback.
inline std::optional<double> fir(std::span<const controller::Action> actions,
                                 std::span<const double> trace, double tau,
                                 bool heavy_only = false) {
  require(actions.size() == trace.size(), "fir: sequence length mismatch");
  long safe_steps = 0;
  long interventions = 0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (!(trace[i] <= tau)) continue;
    ++safe_steps;
    bool hit = heavy_only ? (actions[i] == controller::Action::Retrain ||
                             actions[i] == controller::Action::Rollback)
                          : actions[i] != controller::Action::Noop;
    interventions += hit ? 1 : 0;
  }
  if (safe_steps == 0) return std::nullopt;
  return static_cast<double>(interventions) / static_cast<double>(safe_steps);
}

// Trailing accepted-only mean of served losses: the selective deployed risk.
// Policies that never abstain accept every step, so this reduces to the plain
// windowed risk for them. A trailing-window statistic needs a full window, so
// the trace is NaN during the first window_len - 1 warmup steps; a handful of
// early losses would otherwise dominate a nearly empty window.
inline std::vector<double> build_risk_trace(std::span<const StepRecord> records, long window_len) {
  require(window_len >= 1, "build_risk_trace: window must be positive");
  const long T = static_cast<long>(records.size());
  std::vector<double> cum_loss(static_cast<std::size_t>(T) + 1, 0.0);
  std::vector<long> cum_cnt(static_cast<std::size_t>(T) + 1, 0);
  for (long t = 1; t <= T; ++t) {
    const auto& r = records[static_cast<std::size_t>(t - 1)];
    cum_loss[static_cast<std::size_t>(t)] =
        cum_loss[static_cast<std::size_t>(t - 1)] + (r.accepted ? r.served_loss : 0.0);
    cum_cnt[static_cast<std::size_t>(t)] =
        cum_cnt[static_cast<std::size_t>(t - 1)] + (r.accepted ? 1 : 0);
  }
  std::vector<double> trace(static_cast<std::size_t>(T),
                            std::numeric_limits<double>::quiet_NaN());
  for (long t = window_len; t <= T; ++t) {
    long lo = t - window_len;
    long cnt = cum_cnt[static_cast<std::size_t>(t)] - cum_cnt[static_cast<std::size_t>(lo)];
    if (cnt == 0) continue;
    double loss = cum_loss[static_cast<std::size_t>(t)] - cum_loss[static_cast<std::size_t>(lo)];
    trace[static_cast<std::size_t>(t - 1)] = loss / static_cast<double>(cnt);
  }
  return trace;
}

struct MetricsReport {
  double total_cost = 0.0;
  long violations = 0;
  std::vector<long> event_onsets;  // first step of each maximal drift-active span
  std::vector<std::optional<long>> detection_delays;  // per event
  std::vector<std::optional<long>> recovery_times;    // per event, counted from onset
  std::optional<double> mean_detection_delay;  // over events that alarmed
  std::optional<double> mean_recovery_time;    // never-recovered events cap at the horizon
  std::optional<double> worst_group;           // over drift-active steps, else all steps
  std::optional<double> fir;
  std::optional<double> heavy_fir;
  long heavy_count = 0;          // executed retrains and rollbacks
  long zero_coverage_steps = 0;  // post-warmup steps whose window had no accepted predictions
  std::vector<double> risk_trace;
};

inline MetricsReport compute_metrics(const std::vector<controller::AuditLogEntry>& log,
                                     const std::vector<StepRecord>& records, long window_len,
                                     double tau) {
  require(log.size() == records.size(), "compute_metrics: log and records length mismatch");
  const long T = static_cast<long>(records.size());
  MetricsReport m;
  m.risk_trace = build_risk_trace(records, window_len);
  m.violations = violations(m.risk_trace, tau);
  for (const auto& e : log) m.total_cost += e.cost;
  for (std::size_t i = static_cast<std::size_t>(std::min<long>(window_len - 1, T));
       i < m.risk_trace.size(); ++i)
    m.zero_coverage_steps += std::isnan(m.risk_trace[i]) ? 1 : 0;

  // Effective per-step action: a heavy executed from the schedule counts as
  // the step's intervention even though the selected action may differ.
  std::vector<controller::Action> effective;
  effective.reserve(log.size());
  for (const auto& e : log) {
    effective.push_back(e.executed_heavy ? *e.executed_heavy : e.action);
    bool heavy = (e.executed_heavy.has_value()) ||
                 e.action == controller::Action::Retrain ||
                 e.action == controller::Action::Rollback;
    m.heavy_count += heavy ? 1 : 0;
  }
  m.fir = fir(effective, m.risk_trace, tau);
  m.heavy_fir = fir(effective, m.risk_trace, tau, /*heavy_only=*/true);

  std::vector<unsigned char> alarms;
  alarms.reserve(records.size());
  for (const auto& r : records) alarms.push_back(r.alarm ? 1 : 0);

  for (long t = 1; t <= T; ++t) {
    const auto& r = records[static_cast<std::size_t>(t - 1)];
    bool prev = t > 1 && records[static_cast<std::size_t>(t - 2)].drift_active;
    if (r.drift_active && !prev) m.event_onsets.push_back(t);
  }
  for (std::size_t e = 0; e < m.event_onsets.size(); ++e) {
    long t0 = m.event_onsets[e];
    long next = e + 1 < m.event_onsets.size() ? m.event_onsets[e + 1] : T + 1;
    m.detection_delays.push_back(detection_delay(alarms, t0));
    // Recovery is counted from onset, anchored at the first threshold breach;
    // an event whose trace never breaches recovers instantly.
    std::optional<long> breach;
    for (long t = t0; t < next; ++t) {
      if (m.risk_trace[static_cast<std::size_t>(t - 1)] > tau) {
        breach = t;
        break;
      }
    }
    if (!breach) {
      m.recovery_times.push_back(0);
    } else {
      auto rec = recovery_time(m.risk_trace, *breach, tau);
      if (rec)
        m.recovery_times.push_back(*breach - t0 + *rec);
      else
        m.recovery_times.push_back(std::nullopt);
    }
  }
  {
    double det_sum = 0.0;
    long det_cnt = 0;
    for (const auto& v : m.detection_delays)
      if (v) {
        det_sum += static_cast<double>(*v);
        ++det_cnt;
      }
    if (det_cnt > 0) m.mean_detection_delay = det_sum / static_cast<double>(det_cnt);
    if (!m.event_onsets.empty()) {
      double rec_sum = 0.0;
      for (std::size_t e = 0; e < m.recovery_times.size(); ++e) {
        const auto& v = m.recovery_times[e];
        rec_sum += v ? static_cast<double>(*v) : static_cast<double>(T - m.event_onsets[e]);
      }
      m.mean_recovery_time = rec_sum / static_cast<double>(m.recovery_times.size());
    }
  }

  // Windowed accepted accuracy per group, evaluated over drift-active steps
  // (all steps when the stream never drifts).
  int n_groups = 1;
  for (const auto& r : records) n_groups = std::max(n_groups, r.group + 1);
  require(n_groups <= 64, "compute_metrics: implausible group count");
  Mat cnt = Mat::Zero(T + 1, n_groups);
  Mat cor = Mat::Zero(T + 1, n_groups);
  for (long t = 1; t <= T; ++t) {
    const auto& r = records[static_cast<std::size_t>(t - 1)];
    cnt.row(t) = cnt.row(t - 1);
    cor.row(t) = cor.row(t - 1);
    if (r.accepted) {
      cnt(t, r.group) += 1.0;
      cor(t, r.group) += r.served_loss == 0.0 ? 1.0 : 0.0;
    }
  }
  bool any_active = false;
  for (const auto& r : records) any_active = any_active || r.drift_active;
  std::vector<std::vector<double>> per_step;
  for (long t = 1; t <= T; ++t) {
    if (any_active && !records[static_cast<std::size_t>(t - 1)].drift_active) continue;
    long lo = std::max<long>(0, t - window_len);
    std::vector<double> groups;
    for (int g = 0; g < n_groups; ++g) {
      double c = cnt(t, g) - cnt(lo, g);
      if (c > 0.0) groups.push_back((cor(t, g) - cor(lo, g)) / c);
    }
    per_step.push_back(std::move(groups));
  }
  bool has_samples = false;
  for (const auto& g : per_step) has_samples = has_samples || !g.empty();
  if (has_samples) m.worst_group = worst_group_accuracy(per_step);
  return m;
}

struct RunResult {
  std::vector<controller::AuditLogEntry> log;
  std::vector<StepRecord> records;
  MetricsReport metrics;
};

// ---------------------------------------------------------------------------
// The deployment loop.

namespace detail {

inline void fill_entry(controller::AuditLogEntry& e, long t, const Vec& z,
                       const belief::Belief& b, const riskcert::Certificate& cert,
                       controller::Action action, double cost, int k, long new_labels,
                       long budget_after) {
  e.t = t;
  e.z_std.assign(z.data(), z.data() + z.size());
  for (int i = 0; i < belief::kNumDriftTypes; ++i) e.belief[static_cast<std::size_t>(i)] = b(i);
  e.cert_n = cert.n;
  e.cert_r_hat = cert.r_hat;
  e.cert_radius = cert.radius;
  e.cert_upper = cert.upper;
  e.cert_safe = cert.safe;
  e.action = action;
  e.cost = cost;
  e.k = k;
  e.new_labels = new_labels;
  e.budget_after = budget_after;
  e.fallback_active = false;
  e.executed_heavy = std::nullopt;
}

}  // namespace detail

inline RunResult run_stream(const RunConfig& rc, const RuntimeArtifacts& art) {
  validate_run_config(rc);
  controller::validate_gain_table(art.gains);
  const long T = rc.stream.length;
  const long N = rc.ctrl.window_len;
  const long d = rc.stream.delay;
  const int n_win = rc.monitors.recent_window;
  const long calib_lo = -static_cast<long>(rc.n_calib - 1);
  const auto cert_cfg = controller::make_cert_config(rc.ctrl);

  auto stream = simenv::generate_stream(rc.stream);

  // Free pre-deployment calibration pool at indices calib_lo..0. It seeds the
  // audit window, so the certificate is non-vacuous from step 1 and there is
  // no cold-start fallback; its labels cost no budget.
  std::vector<simenv::SyntheticExample> calib;
  {
    Rng crng = make_rng(rc.stream.seed, 0x43414c42u);
    for (int j = 0; j < rc.n_calib; ++j) {
      auto ex = simenv::sample_nominal(0, rc.stream, crng);
      ex.t = calib_lo + j;
      ex.arrival = 0;
      calib.push_back(std::move(ex));
    }
  }
  auto example_at = [&](long i) -> const simenv::SyntheticExample& {
    return i <= 0 ? calib[static_cast<std::size_t>(i - calib_lo)]
                  : stream[static_cast<std::size_t>(i - 1)];
  };
  auto slot = [&](long i) { return static_cast<std::size_t>(i - calib_lo); };
  std::vector<char> audited(static_cast<std::size_t>(T - calib_lo + 1), 0);
  for (long i = calib_lo; i <= 0; ++i) audited[slot(i)] = 1;

  simenv::SurrogateModel model = art.launch;
  auto state = controller::init_state(rc.ctrl);
  Rng audit_rng = make_rng(rc.stream.seed, 0x41554454u);
  Rng noise_rng = make_rng(rc.stream.seed, 0x4e4f4953u);
  Rng retrain_rng = make_rng(rc.stream.seed, 0x5254524eu);
  belief::Belief bel = belief::initial_belief();
  long safe_streak = 0;
  long last_sched_retrain = controller::kNeverExecuted;

  auto window_bounds = [&](long t) {
    long hi = t - d;
    long lo = std::max(hi - N + 1, calib_lo);
    return std::pair<long, long>(lo, hi);
  };
  // Losses of audited examples are re-evaluated under the current model, so
  // the certificate always reflects what is deployed right now.
  auto collect_pool = [&](long t) {
    std::vector<riskcert::AuditSample> out;
    auto [lo, hi] = window_bounds(t);
    for (long i = lo; i <= hi; ++i) {
      if (!audited[slot(i)]) continue;
      const auto& ex = example_at(i);
      out.push_back({i, simenv::loss01(model, ex.x, ex.y)});
    }
    return out;
  };
  auto collect_labeled_window = [&](long t) {
    std::vector<simenv::LabeledExample> out;
    auto [lo, hi] = window_bounds(t);
    for (long i = lo; i <= hi; ++i) {
      if (!audited[slot(i)]) continue;
      const auto& ex = example_at(i);
      out.push_back({i, ex.x, ex.y, ex.group});
    }
    return out;
  };
  auto collect_labeled_all = [&](long t) {
    std::vector<simenv::LabeledExample> out;
    for (long i = calib_lo; i <= t - d; ++i) {
      if (!audited[slot(i)]) continue;
      const auto& ex = example_at(i);
      out.push_back({i, ex.x, ex.y, ex.group});
    }
    return out;
  };

  RunResult result;
  result.log.reserve(static_cast<std::size_t>(T));
  result.records.reserve(static_cast<std::size_t>(T));

  for (long t = 1; t <= T; ++t) {
    // Scheduled heavy actions execute at the top of the step.
    std::optional<controller::Action> heavy;
    if (rc.policy == PolicyKind::CertifiedController) {
      heavy = controller::try_execute_scheduled(state, t, rc.ctrl);
      if (heavy == controller::Action::Retrain) {
        auto labeled = collect_labeled_all(t);
        simenv::act_retrain(model, labeled, t, rc.retrain, retrain_rng);
      } else if (heavy == controller::Action::Rollback) {
        simenv::act_rollback(model);
      }
    }

    // Standardized evidence over the most recent full window.
    Vec z = Vec::Zero(monitors::kEvidenceDim);
    if (t >= n_win) {
      Mat rx(n_win, rc.stream.dim);
      Mat rp(n_win, rc.stream.classes);
      std::vector<int> rg;
      for (int i = 0; i < n_win; ++i) {
        const auto& ex = stream[static_cast<std::size_t>(t - n_win + i)];
        rx.row(i) = ex.x.transpose();
        rp.row(i) = simenv::model_predict(model, ex.x).transpose();
        rg.push_back(ex.group);
      }
      std::vector<monitors::LabeledPrediction> rl;
      long lag_hi = t - d;
      for (long i = std::max<long>(lag_hi - n_win + 1, calib_lo); i <= lag_hi; ++i) {
        if (!audited[slot(i)]) continue;
        const auto& ex = example_at(i);
        Vec p = simenv::model_predict(model, ex.x);
        rl.push_back({p.maxCoeff(), simenv::model_argmax(model, ex.x) == ex.y});
      }
      auto ev = art.engine.compute(t, rx, rp, rg, rl);
      for (int j = 0; j < monitors::kEvidenceDim; ++j)
        z(j) = ev.standardized[static_cast<std::size_t>(j)];
      if (rc.monitor_noise > 0.0) {
        for (int j = 0; j < monitors::kEvidenceDim; ++j)
          if (rc.monitors.mask.enabled[static_cast<std::size_t>(j)])
            z(j) += rc.monitor_noise * normal01(noise_rng);
      }
    }

    if (art.belief_ready && t >= n_win)
      bel = belief::update(bel, z, art.transitions, art.emission).belief;

    auto query = [&](int k) {
      controller::QueryOutcome o;
      auto [lo, hi] = window_bounds(t);
      for (int j = 0; j < k; ++j) {
        long idx = lo + uniform_below(audit_rng, hi - lo + 1);
        if (!audited[slot(idx)]) {
          audited[slot(idx)] = 1;
          if (idx >= 1) ++o.new_labels;  // calibration labels are free
        }
      }
      o.audited = collect_pool(t);
      return o;
    };

    controller::AuditLogEntry entry;
    controller::Action action = controller::Action::Noop;

    switch (rc.policy) {
      case PolicyKind::CertifiedController: {
        auto before = collect_pool(t);
        // Rollback repairs a model that recent updates broke; it cannot fix
        // an environment that moved. Only prefer it over retraining when the
        // model has drifted from its checkpoint while the belief still puts
        // most mass on the nominal regime.
        bool rb_useful = !simenv::model_equals_safe(model) && art.belief_ready && bel(0) >= 0.5;
        auto so = controller::controller_step(z, bel, before, query, heavy, t, state, rc.ctrl,
                                              art.gains, rb_useful);
        entry = so.entry;
        action = so.decision.action;
        break;
      }
      case PolicyKind::NoCertificate: {
        // Same controller and audit flow, but the gate sees only the point
        // estimate: never unsafe, never fallback. The real certificate is
        // still logged.
        auto before = collect_pool(t);
        auto pre = riskcert::compute_certificate(before, t, cert_cfg);
        double z_max = z.size() > 0 ? z.maxCoeff() : 0.0;
        int k = controller::query_size(pre, z_max, rc.ctrl, state.remaining_budget);
        auto out = query(k);
        state.remaining_budget -= out.new_labels;
        auto cert = riskcert::compute_certificate(out.audited, t, cert_cfg);
        auto gate = cert;
        gate.radius = 0.0;
        gate.upper = cert.r_hat;
        gate.safe = true;
        auto dec = controller::select_action(bel, gate, k, state, t, rc.ctrl, art.gains, true);
        action = dec.action;
        detail::fill_entry(entry, t, z, bel, cert, action,
                           controller::action_cost(action, k, rc.ctrl.label_unit_cost), k,
                           out.new_labels, state.remaining_budget);
        break;
      }
      default: {
        // Passive baselines audit at the idle rate so their certificates stay
        // comparable, but never pay action cost for labels.
        int k = static_cast<int>(std::min<long>(rc.ctrl.k_low, state.remaining_budget));
        auto out = query(k);
        state.remaining_budget -= out.new_labels;
        auto cert = riskcert::compute_certificate(out.audited, t, cert_cfg);
        if (rc.policy == PolicyKind::AdaptAlways) {
          action = controller::Action::Tta;
        } else if (rc.policy == PolicyKind::RetrainSchedule &&
                   t % rc.params.retrain_period == 0 &&
                   t - last_sched_retrain >= rc.ctrl.cooldown_retrain) {
          action = controller::Action::Retrain;
          last_sched_retrain = t;
        }
        detail::fill_entry(entry, t, z, bel, cert, action,
                           controller::action_cost(action, k, rc.ctrl.label_unit_cost), k,
                           out.new_labels, state.remaining_budget);
        break;
      }
    }

    // Serve the current example under the post-heavy, pre-light model.
    const auto& ex_t = stream[static_cast<std::size_t>(t - 1)];
    Vec probs = simenv::model_predict(model, ex_t.x);
    bool accepted = true;
    if (rc.policy == PolicyKind::SelectiveOnly || action == controller::Action::Abstain)
      accepted = simenv::abstain_rule(probs, rc.params.theta_sel);
    double served_loss = simenv::loss01(model, ex_t.x, ex_t.y);

    if (rc.oracle_draws > 0) {
      Rng orng = make_rng(rc.stream.seed ^ 0x4f52434cu, static_cast<std::uint64_t>(t));
      double s = 0.0;
      for (int i = 0; i < rc.oracle_draws; ++i) {
        auto e = simenv::sample_example(t, rc.stream, orng);
        s += simenv::loss01(model, e.x, e.y);
      }
      entry.risk_oracle = s / static_cast<double>(rc.oracle_draws);
    }

    // Light action effects apply after serving.
    if (action == controller::Action::Recalibrate) {
      auto labeled = collect_labeled_window(t);
      simenv::act_recalibrate(model, labeled);
    } else if (action == controller::Action::Tta) {
      long lo = std::max<long>(1, t - n_win + 1);
      Mat inputs(t - lo + 1, rc.stream.dim);
      for (long i = lo; i <= t; ++i)
        inputs.row(i - lo) = stream[static_cast<std::size_t>(i - 1)].x.transpose();
      if (rc.policy == PolicyKind::AdaptAlways)
        simenv::act_tta(model, inputs, rc.params.adapt_steps, rc.params.adapt_lr);
      else
        simenv::act_tta(model, inputs, rc.tta_steps, rc.tta_lr);
    } else if (action == controller::Action::Retrain) {
      // Only retrain_schedule selects Retrain directly; the certified
      // controller always goes through the schedule executed above.
      auto labeled = collect_labeled_all(t);
      simenv::act_retrain(model, labeled, t, rc.retrain, retrain_rng);
    }

    if (rc.policy == PolicyKind::CertifiedController) {
      safe_streak = entry.cert_safe ? safe_streak + 1 : 0;
      if (rc.safe_refresh_span > 0 && safe_streak >= rc.safe_refresh_span) {
        simenv::mark_safe_checkpoint(model);
        safe_streak = 0;
      }
    }

    bool alarm = false;
    if (rc.policy == PolicyKind::CertifiedController)
      alarm = state.fallback_active;
    else if (rc.policy == PolicyKind::AlarmOnly)
      alarm = z.norm() > rc.params.theta_alarm;

    StepRecord rec;
    rec.t = t;
    rec.alpha =
        rc.stream.drift_type == belief::DriftType::None ? 0.0 : simenv::alpha_at(t, rc.stream);
    rec.drift_active = rc.stream.drift_type != belief::DriftType::None && rec.alpha >= 0.5;
    rec.group = ex_t.group;
    rec.accepted = accepted;
    rec.served_loss = served_loss;
    rec.alarm = alarm;
    result.records.push_back(rec);
    result.log.push_back(entry);
  }

  result.metrics = compute_metrics(result.log, result.records, N, rc.ctrl.tau);
  return result;
}

// ---------------------------------------------------------------------------
// Sensitivity sweeps.

enum class SweepAxis : int { Delay = 0, Budget = 1, LabelCost = 2, MonitorNoise = 3, Pattern = 4 };

inline constexpr int kNumSweepAxes = 5;

inline constexpr std::array<const char*, kNumSweepAxes> kSweepAxisNames = {
    "delay", "budget", "label_cost", "monitor_noise", "pattern"};

inline std::optional<SweepAxis> parse_axis(std::string_view name) {
  for (int i = 0; i < kNumSweepAxes; ++i)
    if (name == kSweepAxisNames[static_cast<std::size_t>(i)]) return static_cast<SweepAxis>(i);
  return std::nullopt;
}

inline constexpr int kSweepMetrics = 6;

inline constexpr std::array<const char*, kSweepMetrics> kSweepMetricNames = {
    "C_tot", "V", "T_det", "T_rec", "FIR", "worst_group"};

inline RunConfig apply_axis(RunConfig rc, SweepAxis axis, double value) {
  switch (axis) {
    case SweepAxis::Delay:
      rc.stream.delay = std::lround(value);
      break;
    case SweepAxis::Budget:
      rc.ctrl.label_budget = std::lround(value);
      break;
    case SweepAxis::LabelCost:
      rc.ctrl.label_unit_cost = value;
      break;
    case SweepAxis::MonitorNoise:
      rc.monitor_noise = value;
      break;
    case SweepAxis::Pattern: {
      long p = std::lround(value);
      require(p >= 0 && p < static_cast<long>(simenv::kDriftPatternNames.size()),
              "apply_axis: pattern index out of range");
      rc.stream.pattern = static_cast<simenv::DriftPattern>(p);
      break;
    }
  }
  return rc;
}

// Scalar summaries used in sweep tables. Event metrics without a defined
// value cap at the remaining horizon so means stay comparable; NaN marks a
// metric that does not apply to the run at all.
inline std::array<double, kSweepMetrics> sweep_metrics(const MetricsReport& m, long horizon) {
  std::array<double, kSweepMetrics> out;
  out.fill(std::numeric_limits<double>::quiet_NaN());
  out[0] = m.total_cost;
  out[1] = static_cast<double>(m.violations);
  if (!m.event_onsets.empty()) {
    double det = 0.0;
    double rec = 0.0;
    for (std::size_t e = 0; e < m.event_onsets.size(); ++e) {
      double cap = static_cast<double>(horizon - m.event_onsets[e]);
      det += m.detection_delays[e] ? static_cast<double>(*m.detection_delays[e]) : cap;
      rec += m.recovery_times[e] ? static_cast<double>(*m.recovery_times[e]) : cap;
    }
    out[2] = det / static_cast<double>(m.event_onsets.size());
    out[3] = rec / static_cast<double>(m.event_onsets.size());
  }
  if (m.fir) out[4] = *m.fir;
  if (m.worst_group) out[5] = *m.worst_group;
  return out;
}

// One replica of one sweep cell; fully determined by (base config, axis,
// value, cell and replica index), independent of execution order.
inline std::array<double, kSweepMetrics> run_replica(const RunConfig& base,
                                                     const RuntimeArtifacts& art, SweepAxis axis,
                                                     double value, int cell, int rep) {
  RunConfig rc = apply_axis(base, axis, value);
  rc.stream.seed = splitmix64(base.stream.seed ^
                              (0x53575031ull + 1000003ull * static_cast<std::uint64_t>(cell) +
                               static_cast<std::uint64_t>(rep)));
  auto result = run_stream(rc, art);
  return sweep_metrics(result.metrics, rc.stream.length);
}

struct SweepRow {
  SweepAxis axis = SweepAxis::Delay;
  double value = 0.0;
  int replicas = 0;
  std::array<double, kSweepMetrics> mean{};
  std::array<double, kSweepMetrics> stddev{};
};

inline std::vector<SweepRow> run_sweep(const RunConfig& base, const RuntimeArtifacts& art,
                                       SweepAxis axis, std::span<const double> values,
                                       int replicas) {
  require(!values.empty(), "run_sweep: empty grid");
  require(replicas >= 1, "run_sweep: need at least one replica");
  std::vector<SweepRow> rows;
  for (int ci = 0; ci < static_cast<int>(values.size()); ++ci) {
    Mat acc(replicas, kSweepMetrics);
    for (int r = 0; r < replicas; ++r) {
      auto vals = run_replica(base, art, axis, values[static_cast<std::size_t>(ci)], ci, r);
      for (int j = 0; j < kSweepMetrics; ++j) acc(r, j) = vals[static_cast<std::size_t>(j)];
    }
    SweepRow row;
    row.axis = axis;
    row.value = values[static_cast<std::size_t>(ci)];
    row.replicas = replicas;
    for (int j = 0; j < kSweepMetrics; ++j) {
      double sum = 0.0;
      long cnt = 0;
      for (int r = 0; r < replicas; ++r)
        if (!std::isnan(acc(r, j))) {
          sum += acc(r, j);
          ++cnt;
        }
      if (cnt == 0) {
        row.mean[static_cast<std::size_t>(j)] = std::numeric_limits<double>::quiet_NaN();
        row.stddev[static_cast<std::size_t>(j)] = 0.0;
        continue;
      }
      double mu = sum / static_cast<double>(cnt);
      double ss = 0.0;
      for (int r = 0; r < replicas; ++r)
        if (!std::isnan(acc(r, j))) ss += (acc(r, j) - mu) * (acc(r, j) - mu);
      row.mean[static_cast<std::size_t>(j)] = mu;
      row.stddev[static_cast<std::size_t>(j)] =
          cnt > 1 ? std::sqrt(ss / static_cast<double>(cnt - 1)) : 0.0;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace driftctl::harness
