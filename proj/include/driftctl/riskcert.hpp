// Anytime-valid risk certificates for a deployed predictor.
//
// An audit at time t holds n labeled losses sampled uniformly from a window
// of recent examples. The certificate turns the sample mean into an upper
// confidence bound that stays valid simultaneously over all audit sizes and
// all time steps, so the caller may adapt n and stop at will. The sample-size
// union bound spends delta_n = 6*delta/(pi^2 n^2); the time dimension spends
// delta_t = 6*delta/(pi^2 t^2) on top, so a certificate at (t, n) effectively
// uses 36*delta/(pi^4 t^2 n^2). Sampling without replacement from a window of
// known length tightens the radius by the finite-population factor
// 1 - (n-1)/N.
#pragma once

#include "driftctl/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <unordered_set>

namespace driftctl::riskcert {

enum class SamplingMode { WithReplacement, WithoutReplacement };

struct CertConfig {
  double tau = 0.20;        // deployed-risk tolerance
  double delta = 0.05;      // total error budget across all steps and sizes
  SamplingMode sampling_mode = SamplingMode::WithoutReplacement;
  std::int64_t window_len = 256;  // window size N for the finite-population radius
  double kappa_min = 0.5;   // coverage floor for the selective bound
};

// One audited example: position in the stream and its observed loss in [0,1].
struct AuditSample {
  std::int64_t index = 0;
  double loss = 0.0;
};

struct SelectiveSample {
  std::int64_t index = 0;
  double loss = 0.0;
  bool accepted = false;
};

struct Certificate {
  std::int64_t t = 0;
  std::int64_t n = 0;
  double r_hat = 0.0;
  double radius = 1.0;
  double upper = 1.0;
  bool safe = false;
};

// Upper bound on masked risk, lower bound on coverage, and their ratio:
// an upper bound on the risk among accepted predictions.
struct SelectiveCertificate {
  std::int64_t t = 0;
  std::int64_t n = 0;
  double m_hat = 0.0;
  double kappa_hat = 0.0;
  double u_m = 1.0;
  double l_kappa = 0.0;
  double u_sel = 1.0;
};

inline void check_budget(double delta, const char* who) {
  require(delta > 0.0 && delta < 1.0, std::string(who) + ": delta budget must lie in (0,1)");
}

// Per-sample-size slice of the budget: 6*delta/(pi^2 n^2). Sums to delta over n >= 1.
inline double stitched_delta_n(std::int64_t n, double delta_budget) {
  require(n >= 1, "stitched_delta_n: n must be >= 1");
  check_budget(delta_budget, "stitched_delta_n");
  double nn = static_cast<double>(n);
  return 6.0 * delta_budget / (std::numbers::pi * std::numbers::pi * nn * nn);
}

// Per-time slice of the budget: same schedule over t.
inline double time_delta(std::int64_t t, double delta) {
  require(t >= 1, "time_delta: t must be >= 1");
  check_budget(delta, "time_delta");
  double tt = static_cast<double>(t);
  return 6.0 * delta / (std::numbers::pi * std::numbers::pi * tt * tt);
}

// Hoeffding radius at sample size n, uniform over all n via stitching:
// sqrt(ln(1/delta_n) / (2n)) with delta_n = stitched_delta_n(n, budget).
inline double hoeffding_radius(std::int64_t n, double delta_budget) {
  require(n >= 1, "hoeffding_radius: n must be >= 1");
  double dn = stitched_delta_n(n, delta_budget);
  return std::sqrt(std::log(1.0 / dn) / (2.0 * static_cast<double>(n)));
}

// Without-replacement variant: multiplies the squared radius by 1 - (n-1)/N.
// Coincides with the Hoeffding radius at n = 1 and is smaller for n >= 2.
inline double serfling_radius(std::int64_t n, std::int64_t window_len, double delta_budget) {
  require(n >= 1, "serfling_radius: n must be >= 1");
  require(window_len >= 1, "serfling_radius: window_len must be >= 1");
  require(n <= window_len, "serfling_radius: n cannot exceed window_len");
  double dn = stitched_delta_n(n, delta_budget);
  double fp = 1.0 - static_cast<double>(n - 1) / static_cast<double>(window_len);
  return std::sqrt(fp * std::log(1.0 / dn) / (2.0 * static_cast<double>(n)));
}

// Builds the certificate for audit samples collected at step t. The caller
// must have sampled uniformly from the window; with WithoutReplacement the
// indices must also be distinct and fit inside cfg.window_len. An empty audit
// yields the vacuous certificate (upper = 1, unsafe).
inline Certificate compute_certificate(std::span<const AuditSample> samples, std::int64_t t,
                                       const CertConfig& cfg) {
  require(t >= 1, "compute_certificate: t must be >= 1");
  check_budget(cfg.delta, "compute_certificate");
  require(cfg.tau >= 0.0 && cfg.tau <= 1.0, "compute_certificate: tau must lie in [0,1]");

  Certificate cert;
  cert.t = t;
  cert.n = static_cast<std::int64_t>(samples.size());
  if (cert.n == 0) {
    cert.r_hat = 0.0;
    cert.radius = 1.0;
    cert.upper = 1.0;
    cert.safe = false;
    return cert;
  }

  double sum = 0.0;
  for (const auto& s : samples) {
    require(s.loss >= 0.0 && s.loss <= 1.0, "compute_certificate: losses must lie in [0,1]");
    sum += s.loss;
  }
  cert.r_hat = sum / static_cast<double>(cert.n);

  double budget = time_delta(t, cfg.delta);
  if (cfg.sampling_mode == SamplingMode::WithoutReplacement) {
    require(cert.n <= cfg.window_len,
            "compute_certificate: more distinct samples than the window holds");
    std::unordered_set<std::int64_t> seen;
    seen.reserve(samples.size());
    for (const auto& s : samples) {
      require(seen.insert(s.index).second,
              "compute_certificate: duplicate index in without-replacement audit");
    }
    cert.radius = serfling_radius(cert.n, cfg.window_len, budget);
  } else {
    cert.radius = hoeffding_radius(cert.n, budget);
  }

  cert.upper = std::min(1.0, cert.r_hat + cert.radius);
  cert.safe = cert.upper <= cfg.tau;
  return cert;
}

// Boundary counts as safe: deployment is allowed when the bound equals tau.
inline bool is_safe(const Certificate& cert, double tau) { return cert.upper <= tau; }

// Bound on the risk over accepted predictions. The masked mean m_hat and the
// coverage kappa_hat each receive half the per-time budget 6*delta/(pi^2 t^2),
// i.e. 3*delta/(pi^2 t^2), stitched over n as usual. The ratio bound divides
// by max(l_kappa, kappa_min) so vanishing coverage cannot blow it up.
inline SelectiveCertificate selective_certificate(std::span<const SelectiveSample> samples,
                                                  std::int64_t t, const CertConfig& cfg) {
  require(t >= 1, "selective_certificate: t must be >= 1");
  check_budget(cfg.delta, "selective_certificate");
  require(cfg.kappa_min > 0.0 && cfg.kappa_min <= 1.0,
          "selective_certificate: kappa_min must lie in (0,1]");

  SelectiveCertificate sc;
  sc.t = t;
  sc.n = static_cast<std::int64_t>(samples.size());
  if (sc.n == 0) return sc;

  double masked = 0.0;
  double cov = 0.0;
  for (const auto& s : samples) {
    require(s.loss >= 0.0 && s.loss <= 1.0, "selective_certificate: losses must lie in [0,1]");
    if (s.accepted) {
      masked += s.loss;
      cov += 1.0;
    }
  }
  sc.m_hat = masked / static_cast<double>(sc.n);
  sc.kappa_hat = cov / static_cast<double>(sc.n);

  double half = 3.0 * cfg.delta /
                (std::numbers::pi * std::numbers::pi * static_cast<double>(t) * static_cast<double>(t));
  double rad = hoeffding_radius(sc.n, half);
  sc.u_m = std::min(1.0, sc.m_hat + rad);
  sc.l_kappa = std::max(0.0, sc.kappa_hat - rad);
  sc.u_sel = std::min(1.0, sc.u_m / std::max(sc.l_kappa, cfg.kappa_min));
  return sc;
}

}  // namespace driftctl::riskcert
