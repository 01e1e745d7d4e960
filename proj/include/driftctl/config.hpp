#pragma once

#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "driftctl/common.hpp"
#include "driftctl/harness.hpp"
#include "driftctl/io.hpp"

// Flat key=value run configuration. '#' starts a comment, blank lines are
// skipped, later assignments win. dump_config emits every key with its
// current value and is the authoritative key list.
namespace driftctl::config {

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& key, const std::string& val) {
  const char* begin = val.c_str();
  char* end = nullptr;
  double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw ValidationError("config: bad numeric value for " + key + ": '" + val + "'");
  return v;
}

inline long to_long(const std::string& key, const std::string& val) {
  const char* begin = val.c_str();
  char* end = nullptr;
  long v = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw ValidationError("config: bad integer value for " + key + ": '" + val + "'");
  return v;
}

inline int to_int(const std::string& key, const std::string& val) {
  return static_cast<int>(to_long(key, val));
}

inline std::uint64_t to_u64(const std::string& key, const std::string& val) {
  const char* begin = val.c_str();
  char* end = nullptr;
  unsigned long long v = std::strtoull(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw ValidationError("config: bad unsigned value for " + key + ": '" + val + "'");
  return static_cast<std::uint64_t>(v);
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& val) {
  std::vector<int> out;
  std::string tok;
  std::istringstream ss(val);
  while (std::getline(ss, tok, ',')) out.push_back(to_int(key, trim(tok)));
  return out;
}

}  // namespace detail

inline simenv::DriftPattern parse_pattern(const std::string& val) {
  for (std::size_t i = 0; i < simenv::kDriftPatternNames.size(); ++i)
    if (val == simenv::kDriftPatternNames[i]) return static_cast<simenv::DriftPattern>(i);
  throw ValidationError("config: unknown drift pattern '" + val + "'");
}

inline belief::DriftType parse_drift_type(const std::string& val) {
  for (int i = 0; i < belief::kNumDriftTypes; ++i)
    if (val == belief::kDriftTypeNames[static_cast<std::size_t>(i)])
      return static_cast<belief::DriftType>(i);
  throw ValidationError("config: unknown drift type '" + val + "'");
}

// Applies one assignment onto the config; throws on unknown keys.
inline void apply_key(harness::RunConfig& rc, const std::string& key, const std::string& val) {
  using detail::to_double;
  using detail::to_int;
  using detail::to_long;
  using detail::to_u64;
  auto& s = rc.stream;
  auto& c = rc.ctrl;
  auto& mo = rc.monitors;

  if (key == "stream.length") s.length = to_long(key, val);
  else if (key == "stream.dim") s.dim = to_int(key, val);
  else if (key == "stream.classes") s.classes = to_int(key, val);
  else if (key == "stream.pattern") s.pattern = parse_pattern(val);
  else if (key == "stream.onset") s.onset = to_long(key, val);
  else if (key == "stream.ramp") s.ramp = to_double(key, val);
  else if (key == "stream.period") s.period = to_long(key, val);
  else if (key == "stream.delay") s.delay = to_long(key, val);
  else if (key == "stream.p_sub") s.p_sub = to_double(key, val);
  else if (key == "stream.drift_type") s.drift_type = parse_drift_type(val);
  else if (key == "stream.seed") s.seed = to_u64(key, val);
  else if (key == "stream.cluster_sep") s.cluster_sep = to_double(key, val);
  else if (key == "stream.cov_shift_norm") s.cov_shift_norm = to_double(key, val);
  else if (key == "stream.sub_shift_norm") s.sub_shift_norm = to_double(key, val);
  else if (key == "stream.concept_perm")
    s.concept_perm = val == "default" ? std::vector<int>{} : detail::to_int_list(key, val);
  else if (key == "ctrl.lambda") c.lambda = to_double(key, val);
  else if (key == "ctrl.gamma") c.gamma = to_double(key, val);
  else if (key == "ctrl.tau") c.tau = to_double(key, val);
  else if (key == "ctrl.delta") c.delta = to_double(key, val);
  else if (key == "ctrl.sigma_u") c.sigma_u = to_double(key, val);
  else if (key == "ctrl.label_budget") c.label_budget = to_long(key, val);
  else if (key == "ctrl.cooldown_retrain") c.cooldown_retrain = to_long(key, val);
  else if (key == "ctrl.cooldown_rollback") c.cooldown_rollback = to_long(key, val);
  else if (key == "ctrl.k_max") c.k_max = to_int(key, val);
  else if (key == "ctrl.k_high") c.k_high = to_int(key, val);
  else if (key == "ctrl.k_low") c.k_low = to_int(key, val);
  else if (key == "ctrl.m_low") c.m_low = to_double(key, val);
  else if (key == "ctrl.zeta") c.zeta = to_double(key, val);
  else if (key == "ctrl.kappa_min") c.kappa_min = to_double(key, val);
  else if (key == "ctrl.label_unit_cost") c.label_unit_cost = to_double(key, val);
  else if (key == "ctrl.heavy_r_frac") c.heavy_r_frac = to_double(key, val);
  else if (key == "ctrl.heavy_n_min") c.heavy_n_min = to_long(key, val);
  else if (key == "ctrl.window_len") c.window_len = to_long(key, val);
  else if (key == "ctrl.sampling_mode") {
    if (val == "without_replacement")
      c.sampling_mode = riskcert::SamplingMode::WithoutReplacement;
    else if (val == "with_replacement")
      c.sampling_mode = riskcert::SamplingMode::WithReplacement;
    else
      throw ValidationError("config: unknown sampling mode '" + val + "'");
  } else if (key == "monitors.recent_window") mo.recent_window = to_int(key, val);
  else if (key == "monitors.ref_subsample") mo.ref_subsample = to_int(key, val);
  else if (key == "monitors.n_ref") mo.n_ref = to_int(key, val);
  else if (key == "monitors.ece_bins") mo.ece_bins = to_int(key, val);
  else if (key == "monitors.eps") mo.eps = to_double(key, val);
  else if (key == "monitors.disc_train_fraction") mo.disc_train_fraction = to_double(key, val);
  else if (key == "monitors.ref_reps") mo.ref_reps = to_int(key, val);
  else if (key == "monitors.mask") {
    if (val.size() != static_cast<std::size_t>(monitors::kEvidenceDim))
      throw ValidationError("config: monitors.mask needs one 0/1 per monitor");
    for (int j = 0; j < monitors::kEvidenceDim; ++j) {
      char ch = val[static_cast<std::size_t>(j)];
      if (ch != '0' && ch != '1')
        throw ValidationError("config: monitors.mask must contain only 0 and 1");
      mo.mask.enabled[static_cast<std::size_t>(j)] = ch == '1';
    }
  } else if (key == "retrain.half_life") rc.retrain.half_life = to_double(key, val);
  else if (key == "retrain.l2") rc.retrain.fit.l2 = to_double(key, val);
  else if (key == "retrain.iters") rc.retrain.fit.iters = to_int(key, val);
  else if (key == "retrain.lr") rc.retrain.fit.lr = to_double(key, val);
  else if (key == "episodes.count") rc.episodes.count = to_int(key, val);
  else if (key == "episodes.length") rc.episodes.length = to_int(key, val);
  else if (key == "episodes.audit_per_step") rc.episodes.audit_per_step = to_int(key, val);
  else if (key == "episodes.onset_lo_frac") rc.episodes.onset_lo_frac = to_double(key, val);
  else if (key == "episodes.onset_hi_frac") rc.episodes.onset_hi_frac = to_double(key, val);
  else if (key == "policy") {
    auto p = harness::parse_policy(val);
    if (!p) throw ValidationError("config: unknown policy '" + val + "'");
    rc.policy = *p;
  } else if (key == "policy.theta_alarm") rc.params.theta_alarm = to_double(key, val);
  else if (key == "policy.adapt_lr") rc.params.adapt_lr = to_double(key, val);
  else if (key == "policy.adapt_steps") rc.params.adapt_steps = to_int(key, val);
  else if (key == "policy.retrain_period") rc.params.retrain_period = to_long(key, val);
  else if (key == "policy.theta_sel") rc.params.theta_sel = to_double(key, val);
  else if (key == "run.n_train") rc.n_train = to_int(key, val);
  else if (key == "run.n_calib") rc.n_calib = to_int(key, val);
  else if (key == "run.tta_steps") rc.tta_steps = to_int(key, val);
  else if (key == "run.tta_lr") rc.tta_lr = to_double(key, val);
  else if (key == "run.safe_refresh_span") rc.safe_refresh_span = to_long(key, val);
  else if (key == "run.monitor_noise") rc.monitor_noise = to_double(key, val);
  else if (key == "run.oracle_draws") rc.oracle_draws = to_int(key, val);
  else if (key == "run.artifact_seed") rc.artifact_seed = to_u64(key, val);
  else
    throw ValidationError("config: unknown key '" + key + "'");
}

inline harness::RunConfig parse_config(std::istream& is,
                                       harness::RunConfig base = harness::default_run_config()) {
  std::string line;
  long line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::string body = detail::trim(line);
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(line_no) + ": expected key=value");
    std::string key = detail::trim(body.substr(0, eq));
    std::string val = detail::trim(body.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ValidationError("config line " + std::to_string(line_no) + ": empty key or value");
    apply_key(base, key, val);
  }
  return base;
}

inline void dump_config(std::ostream& os, const harness::RunConfig& rc) {
  const auto& s = rc.stream;
  const auto& c = rc.ctrl;
  const auto& mo = rc.monitors;
  os << "# driftctl run configuration (all keys with their current values)\n";
  os << "stream.length = " << s.length << '\n';
  os << "stream.dim = " << s.dim << '\n';
  os << "stream.classes = " << s.classes << '\n';
  os << "stream.pattern = " << simenv::kDriftPatternNames[static_cast<std::size_t>(s.pattern)]
     << '\n';
  os << "stream.onset = " << s.onset << '\n';
  os << "stream.ramp = " << io::fmt(s.ramp) << '\n';
  os << "stream.period = " << s.period << '\n';
  os << "stream.delay = " << s.delay << '\n';
  os << "stream.p_sub = " << io::fmt(s.p_sub) << '\n';
  os << "stream.drift_type = "
     << belief::kDriftTypeNames[static_cast<std::size_t>(s.drift_type)] << '\n';
  os << "stream.seed = " << s.seed << '\n';
  os << "stream.cluster_sep = " << io::fmt(s.cluster_sep) << '\n';
  os << "stream.cov_shift_norm = " << io::fmt(s.cov_shift_norm) << '\n';
  os << "stream.sub_shift_norm = " << io::fmt(s.sub_shift_norm) << '\n';
  os << "stream.concept_perm = ";
  if (s.concept_perm.empty()) {
    os << "default\n";
  } else {
    for (std::size_t i = 0; i < s.concept_perm.size(); ++i)
      os << (i ? "," : "") << s.concept_perm[i];
    os << '\n';
  }
  os << "ctrl.lambda = " << io::fmt(c.lambda) << '\n';
  os << "ctrl.gamma = " << io::fmt(c.gamma) << '\n';
  os << "ctrl.tau = " << io::fmt(c.tau) << '\n';
  os << "ctrl.delta = " << io::fmt(c.delta) << '\n';
  os << "ctrl.sigma_u = " << io::fmt(c.sigma_u) << '\n';
  os << "ctrl.label_budget = " << c.label_budget << '\n';
  os << "ctrl.cooldown_retrain = " << c.cooldown_retrain << '\n';
  os << "ctrl.cooldown_rollback = " << c.cooldown_rollback << '\n';
  os << "ctrl.k_max = " << c.k_max << '\n';
  os << "ctrl.k_high = " << c.k_high << '\n';
  os << "ctrl.k_low = " << c.k_low << '\n';
  os << "ctrl.m_low = " << io::fmt(c.m_low) << '\n';
  os << "ctrl.zeta = " << io::fmt(c.zeta) << '\n';
  os << "ctrl.kappa_min = " << io::fmt(c.kappa_min) << '\n';
  os << "ctrl.label_unit_cost = " << io::fmt(c.label_unit_cost) << '\n';
  os << "ctrl.heavy_r_frac = " << io::fmt(c.heavy_r_frac) << '\n';
  os << "ctrl.heavy_n_min = " << c.heavy_n_min << '\n';
  os << "ctrl.window_len = " << c.window_len << '\n';
  os << "ctrl.sampling_mode = "
     << (c.sampling_mode == riskcert::SamplingMode::WithoutReplacement ? "without_replacement"
                                                                       : "with_replacement")
     << '\n';
  os << "monitors.recent_window = " << mo.recent_window << '\n';
  os << "monitors.ref_subsample = " << mo.ref_subsample << '\n';
  os << "monitors.n_ref = " << mo.n_ref << '\n';
  os << "monitors.ece_bins = " << mo.ece_bins << '\n';
  os << "monitors.eps = " << io::fmt(mo.eps) << '\n';
  os << "monitors.disc_train_fraction = " << io::fmt(mo.disc_train_fraction) << '\n';
  os << "monitors.ref_reps = " << mo.ref_reps << '\n';
  os << "monitors.mask = ";
  for (int j = 0; j < monitors::kEvidenceDim; ++j)
    os << (mo.mask.enabled[static_cast<std::size_t>(j)] ? '1' : '0');
  os << '\n';
  os << "retrain.half_life = " << io::fmt(rc.retrain.half_life) << '\n';
  os << "retrain.l2 = " << io::fmt(rc.retrain.fit.l2) << '\n';
  os << "retrain.iters = " << rc.retrain.fit.iters << '\n';
  os << "retrain.lr = " << io::fmt(rc.retrain.fit.lr) << '\n';
  os << "episodes.count = " << rc.episodes.count << '\n';
  os << "episodes.length = " << rc.episodes.length << '\n';
  os << "episodes.audit_per_step = " << rc.episodes.audit_per_step << '\n';
  os << "episodes.onset_lo_frac = " << io::fmt(rc.episodes.onset_lo_frac) << '\n';
  os << "episodes.onset_hi_frac = " << io::fmt(rc.episodes.onset_hi_frac) << '\n';
  os << "policy = " << harness::kPolicyNames[static_cast<std::size_t>(rc.policy)] << '\n';
  os << "policy.theta_alarm = " << io::fmt(rc.params.theta_alarm) << '\n';
  os << "policy.adapt_lr = " << io::fmt(rc.params.adapt_lr) << '\n';
  os << "policy.adapt_steps = " << rc.params.adapt_steps << '\n';
  os << "policy.retrain_period = " << rc.params.retrain_period << '\n';
  os << "policy.theta_sel = " << io::fmt(rc.params.theta_sel) << '\n';
  os << "run.n_train = " << rc.n_train << '\n';
  os << "run.n_calib = " << rc.n_calib << '\n';
  os << "run.tta_steps = " << rc.tta_steps << '\n';
  os << "run.tta_lr = " << io::fmt(rc.tta_lr) << '\n';
  os << "run.safe_refresh_span = " << rc.safe_refresh_span << '\n';
  os << "run.monitor_noise = " << io::fmt(rc.monitor_noise) << '\n';
  os << "run.oracle_draws = " << rc.oracle_draws << '\n';
  os << "run.artifact_seed = " << rc.artifact_seed << '\n';
}

}  // namespace driftctl::config
