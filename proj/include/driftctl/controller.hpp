// Receding-horizon action controller. Maps (evidence, belief, certificate) to
// a feasible action under a label budget and heavy-action cooldowns. The
// certificate gate is hard: an unsafe certificate forces abstention and
// schedules an escalation; the utility argmax only ever runs on the safe
// branch.
#pragma once

#include "driftctl/belief.hpp"
#include "driftctl/common.hpp"
#include "driftctl/riskcert.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace driftctl::controller {

enum class Action : int {
  Noop = 0,
  Recalibrate = 1,
  Tta = 2,
  QueryLabels = 3,
  Retrain = 4,
  Rollback = 5,
  Abstain = 6,
};

inline constexpr int kNumActions = 7;

inline constexpr std::array<const char*, kNumActions> kActionNames = {
    "noop", "recalibrate", "tta", "query_labels", "retrain", "rollback", "abstain"};

inline constexpr double kLabelUnitCost = 0.05;

// Base operational costs; query_labels scales linearly in the step's k.
inline double action_cost(Action a, int k = 0, double label_unit_cost = kLabelUnitCost) {
  require(k >= 0, "action_cost: negative query size");
  require(label_unit_cost >= 0.0, "action_cost: negative label cost");
  switch (a) {
    case Action::Noop: return 0.0;
    case Action::Recalibrate: return 0.2;
    case Action::Tta: return 1.0;
    case Action::QueryLabels: return label_unit_cost * static_cast<double>(k);
    case Action::Retrain: return 12.0;
    case Action::Rollback: return 1.5;
    case Action::Abstain: return 0.3;
  }
  throw ValidationError("action_cost: unknown action");
}

struct GainTable {
  // Rows follow belief::DriftType order, columns follow Action order.
  Eigen::Matrix<double, belief::kNumDriftTypes, kNumActions> values;
};

inline GainTable default_gain_table() {
  GainTable g;
  g.values << 0.0, 0.10, 0.05, 0.08, 0.12, 0.10, 0.15,  // none
      0.0, 0.35, 0.70, 0.25, 0.85, 0.40, 0.55,          // covariate
      0.0, 0.20, 0.30, 0.75, 1.05, 0.60, 0.65,          // concept
      0.0, 0.25, 0.35, 0.85, 0.95, 0.55, 0.80;          // subgroup
  return g;
}

inline void validate_gain_table(const GainTable& g) {
  for (int d = 0; d < belief::kNumDriftTypes; ++d) {
    require(g.values(d, 0) == 0.0, "gain table: no-op column must be zero");
    for (int a = 0; a < kNumActions; ++a)
      require(std::isfinite(g.values(d, a)), "gain table: non-finite entry");
  }
}

struct ControllerConfig {
  double lambda = 1.0;    // cost tradeoff
  double gamma = 50.0;    // violation weight
  double tau = 0.20;
  double delta = 0.05;
  double sigma_u = 0.10;  // gain units -> certificate units
  long label_budget = 3000;
  long cooldown_retrain = 800;
  long cooldown_rollback = 400;
  int k_max = 64;
  int k_high = 32;
  int k_low = 8;
  double m_low = 0.02;    // safety-margin threshold
  double zeta = 2.0;      // standardized-evidence threshold
  double kappa_min = 0.5;
  double label_unit_cost = kLabelUnitCost;
  // Heavy actions are scheduled only when the risk point estimate itself
  // exceeds heavy_r_frac * tau and rests on at least heavy_n_min audited
  // labels. An unsafe certificate with a healthy or poorly supported point
  // estimate signals audit starvation, which no retrain or rollback can fix.
  double heavy_r_frac = 0.55;
  long heavy_n_min = 160;
  // Certificate sampling settings forwarded to riskcert.
  riskcert::SamplingMode sampling_mode = riskcert::SamplingMode::WithoutReplacement;
  long window_len = 1024;
};

inline void validate_config(const ControllerConfig& cfg) {
  require(cfg.lambda >= 0.0 && cfg.gamma >= 0.0, "controller config: weights must be nonnegative");
  require(cfg.tau > 0.0 && cfg.tau < 1.0, "controller config: tau must lie in (0,1)");
  require(cfg.delta > 0.0 && cfg.delta < 1.0, "controller config: delta must lie in (0,1)");
  require(cfg.sigma_u >= 0.0, "controller config: sigma_u must be nonnegative");
  require(cfg.label_budget >= 0, "controller config: negative label budget");
  require(cfg.cooldown_retrain >= 0 && cfg.cooldown_rollback >= 0,
          "controller config: negative cooldown");
  require(cfg.k_max >= cfg.k_high && cfg.k_high >= cfg.k_low && cfg.k_low >= 0,
          "controller config: query sizes must satisfy k_max >= k_high >= k_low >= 0");
  require(cfg.m_low >= 0.0, "controller config: negative margin threshold");
  require(cfg.kappa_min > 0.0, "controller config: kappa_min must be positive");
  require(cfg.label_unit_cost >= 0.0, "controller config: negative label cost");
  require(cfg.heavy_r_frac >= 0.0 && cfg.heavy_r_frac <= 1.0,
          "controller config: heavy_r_frac must lie in [0,1]");
  require(cfg.heavy_n_min >= 1, "controller config: heavy_n_min must be positive");
  require(cfg.window_len >= 1, "controller config: window_len must be positive");
}

inline riskcert::CertConfig make_cert_config(const ControllerConfig& cfg) {
  riskcert::CertConfig cc;
  cc.tau = cfg.tau;
  cc.delta = cfg.delta;
  cc.sampling_mode = cfg.sampling_mode;
  cc.window_len = cfg.window_len;
  cc.kappa_min = cfg.kappa_min;
  return cc;
}

enum class HeavyKind : int { None = 0, Retrain = 1, Rollback = 2 };

inline constexpr long kNeverExecuted = std::numeric_limits<long>::min() / 4;

struct ControllerState {
  long remaining_budget = 0;
  long t_last_retrain = kNeverExecuted;
  long t_last_rollback = kNeverExecuted;
  bool fallback_active = false;
  HeavyKind scheduled_heavy = HeavyKind::None;
};

inline ControllerState init_state(const ControllerConfig& cfg) {
  validate_config(cfg);
  ControllerState s;
  s.remaining_budget = cfg.label_budget;
  return s;
}

inline std::array<bool, kNumActions> feasible_actions(const ControllerState& state, long t,
                                                      const ControllerConfig& cfg) {
  require(t >= 1, "feasible_actions: t must be positive");
  std::array<bool, kNumActions> feas;
  feas.fill(true);
  feas[static_cast<std::size_t>(Action::QueryLabels)] = state.remaining_budget > 0;
  feas[static_cast<std::size_t>(Action::Retrain)] = t - state.t_last_retrain >= cfg.cooldown_retrain;
  feas[static_cast<std::size_t>(Action::Rollback)] =
      t - state.t_last_rollback >= cfg.cooldown_rollback;
  return feas;
}

inline double expected_gain(const belief::Belief& b, Action a, const GainTable& g) {
  belief::validate_belief(b);
  double acc = 0.0;
  for (int d = 0; d < belief::kNumDriftTypes; ++d)
    acc += b(d) * g.values(d, static_cast<int>(a));
  return acc;
}

// Hinge on the conservatively predicted post-action certificate
// U_hat = cert_upper - sigma_u * gain.
inline double violation_penalty(double cert_upper, double gain, const ControllerConfig& cfg) {
  require(cert_upper >= 0.0 && cert_upper <= 1.0, "violation_penalty: upper must lie in [0,1]");
  double predicted = cert_upper - cfg.sigma_u * gain;
  return std::max(0.0, predicted - cfg.tau);
}

inline double utility(const belief::Belief& b, Action a, double cert_upper,
                      const ControllerConfig& cfg, const GainTable& g, int k = 0) {
  double gain = expected_gain(b, a, g);
  return gain - cfg.lambda * action_cost(a, k, cfg.label_unit_cost) -
         cfg.gamma * violation_penalty(cert_upper, gain, cfg);
}

// Piecewise audit-query sizing: escalate on an unsafe certificate, probe
// harder when the safety margin is thin or evidence is loud, else idle rate.
inline int query_size(const riskcert::Certificate& cert, double z_std_max,
                      const ControllerConfig& cfg, long remaining_budget) {
  int k;
  if (!cert.safe) {
    k = cfg.k_max;
  } else {
    double safety_margin = cfg.tau - cert.upper;
    k = (safety_margin <= cfg.m_low || z_std_max >= cfg.zeta) ? cfg.k_high : cfg.k_low;
  }
  long clamped = std::min<long>(k, std::max<long>(remaining_budget, 0));
  return static_cast<int>(clamped);
}

struct Decision {
  Action action = Action::Noop;
  int k = 0;
  std::array<double, kNumActions> utility_trace{};  // NaN where not evaluated

  Decision() { utility_trace.fill(std::numeric_limits<double>::quiet_NaN()); }
};

// The hard certificate gate plus the safe-branch utility argmax. On an unsafe
// certificate: abstain and, when the point estimate is genuinely elevated
// (not a wide-radius starvation state) and the certificate is non-vacuous,
// schedule rollback when feasible and useful, else retrain when feasible.
// Ties on the safe branch break by enum order.
inline Decision select_action(const belief::Belief& b, const riskcert::Certificate& cert, int k,
                              ControllerState& state, long t, const ControllerConfig& cfg,
                              const GainTable& g, bool rollback_useful = true) {
  belief::validate_belief(b);
  require(t >= 1, "select_action: t must be positive");
  Decision decision;
  decision.k = k;
  auto feas = feasible_actions(state, t, cfg);

  if (!cert.safe) {
    state.fallback_active = true;
    decision.action = Action::Abstain;
    if (state.scheduled_heavy == HeavyKind::None && cert.n >= cfg.heavy_n_min &&
        cert.r_hat > cfg.heavy_r_frac * cfg.tau) {
      if (feas[static_cast<std::size_t>(Action::Rollback)] && rollback_useful) {
        state.scheduled_heavy = HeavyKind::Rollback;
      } else if (feas[static_cast<std::size_t>(Action::Retrain)]) {
        state.scheduled_heavy = HeavyKind::Retrain;
      }
    }
    return decision;
  }

  state.fallback_active = false;
  // Safety restored: a still-pending escalation is stale, drop it.
  state.scheduled_heavy = HeavyKind::None;

  constexpr std::array<Action, 4> kSafeBranch = {Action::Noop, Action::Recalibrate, Action::Tta,
                                                 Action::QueryLabels};
  Action best = Action::Noop;
  double best_u = -std::numeric_limits<double>::infinity();
  for (Action a : kSafeBranch) {
    if (!feas[static_cast<std::size_t>(a)]) continue;
    double u = utility(b, a, cert.upper, cfg, g, k);
    decision.utility_trace[static_cast<std::size_t>(a)] = u;
    if (u > best_u) {
      best_u = u;
      best = a;
    }
  }
  decision.action = best;
  return decision;
}

// Executes a pending heavy action if its cooldown allows, advancing the
// corresponding clock. Runs at the top of a step, before monitors; the caller
// applies the model effect and passes the returned action to controller_step
// for cost accounting.
inline std::optional<Action> try_execute_scheduled(ControllerState& state, long t,
                                                   const ControllerConfig& cfg) {
  require(t >= 1, "try_execute_scheduled: t must be positive");
  if (state.scheduled_heavy == HeavyKind::None) return std::nullopt;
  auto feas = feasible_actions(state, t, cfg);
  if (state.scheduled_heavy == HeavyKind::Rollback) {
    if (!feas[static_cast<std::size_t>(Action::Rollback)]) return std::nullopt;
    state.t_last_rollback = t;
    state.scheduled_heavy = HeavyKind::None;
    return Action::Rollback;
  }
  if (!feas[static_cast<std::size_t>(Action::Retrain)]) return std::nullopt;
  state.t_last_retrain = t;
  state.scheduled_heavy = HeavyKind::None;
  return Action::Retrain;
}

struct AuditLogEntry {
  long t = 0;
  std::vector<double> z_std;
  std::array<double, belief::kNumDriftTypes> belief{};
  long cert_n = 0;
  double cert_r_hat = 0.0;
  double cert_radius = 1.0;
  double cert_upper = 1.0;
  bool cert_safe = false;
  Action action = Action::Noop;
  double cost = 0.0;  // selected action plus any heavy executed this step
  int k = 0;
  long new_labels = 0;
  long budget_after = 0;
  bool fallback_active = false;
  std::optional<Action> executed_heavy;
  double risk_oracle = std::numeric_limits<double>::quiet_NaN();  // filled by the simulator
};

struct QueryOutcome {
  // Audited samples lying in the current certifiable window, after this
  // step's query has been absorbed.
  std::vector<riskcert::AuditSample> audited;
  long new_labels = 0;
};

using QueryCallback = std::function<QueryOutcome(int k)>;

struct StepOutcome {
  Decision decision;
  riskcert::Certificate certificate;
  AuditLogEntry entry;
};

// One full controller step: pre-query certificate, query sizing, label
// request (budget decremented by newly labeled indices only), final
// certificate, action selection, audit record.
inline StepOutcome controller_step(const Vec& z_std, const belief::Belief& b,
                                   std::span<const riskcert::AuditSample> audited_before,
                                   const QueryCallback& query,
                                   std::optional<Action> executed_heavy, long t,
                                   ControllerState& state, const ControllerConfig& cfg,
                                   const GainTable& g, bool rollback_useful = true) {
  require(t >= 1, "controller_step: t must be positive");
  require(static_cast<bool>(query), "controller_step: query callback required");
  validate_config(cfg);
  const auto cert_cfg = make_cert_config(cfg);

  riskcert::Certificate pre = riskcert::compute_certificate(audited_before, t, cert_cfg);
  double z_max = z_std.size() > 0 ? z_std.maxCoeff() : 0.0;
  int k = query_size(pre, z_max, cfg, state.remaining_budget);

  QueryOutcome outcome = query(k);
  require(outcome.new_labels >= 0 && outcome.new_labels <= k,
          "controller_step: query returned more new labels than requested");
  require(outcome.new_labels <= state.remaining_budget,
          "controller_step: label budget underflow");
  state.remaining_budget -= outcome.new_labels;

  riskcert::Certificate cert = riskcert::compute_certificate(outcome.audited, t, cert_cfg);
  Decision decision = select_action(b, cert, k, state, t, cfg, g, rollback_useful);

  StepOutcome out;
  out.decision = decision;
  out.certificate = cert;
  auto& e = out.entry;
  e.t = t;
  e.z_std.assign(z_std.data(), z_std.data() + z_std.size());
  for (int d = 0; d < belief::kNumDriftTypes; ++d) e.belief[static_cast<std::size_t>(d)] = b(d);
  e.cert_n = cert.n;
  e.cert_r_hat = cert.r_hat;
  e.cert_radius = cert.radius;
  e.cert_upper = cert.upper;
  e.cert_safe = cert.safe;
  e.action = decision.action;
  e.cost = action_cost(decision.action, decision.k, cfg.label_unit_cost) +
           (executed_heavy ? action_cost(*executed_heavy) : 0.0);
  e.k = decision.k;
  e.new_labels = outcome.new_labels;
  e.budget_after = state.remaining_budget;
  e.fallback_active = state.fallback_active;
  e.executed_heavy = executed_heavy;
  return out;
}

}  // namespace driftctl::controller
