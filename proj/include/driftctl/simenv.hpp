// Deterministic synthetic streaming environment: Gaussian-cluster nominal
// data, three drift operators on mixture schedules, a linear softmax
// surrogate with temperature calibration and checkpoints, the effects of
// every controller action, the evidence pipeline shared by runtime and
// episode generation, and gain-table calibration.
#pragma once

#include "driftctl/belief.hpp"
#include "driftctl/common.hpp"
#include "driftctl/controller.hpp"
#include "driftctl/monitors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

namespace driftctl::simenv {

enum class DriftPattern : int { Sudden = 0, Gradual = 1, Recurring = 2 };

inline constexpr std::array<const char*, 3> kDriftPatternNames = {"sudden", "gradual",
                                                                  "recurring"};

struct StreamConfig {
  long length = 4000;  // T
  int dim = 16;        // feature dimension p
  int classes = 4;
  DriftPattern pattern = DriftPattern::Sudden;
  long onset = 700;   // t0
  double ramp = 0.1;  // rho, gradual steepness
  long period = 500;  // P, recurring period
  long delay = 50;    // label delay d
  double p_sub = 0.15;
  belief::DriftType drift_type = belief::DriftType::Covariate;
  std::uint64_t seed = 1;
  // Nominal geometry and drift magnitudes.
  double cluster_sep = 4.2;      // pairwise distance between class means
  double cov_shift_norm = 2.5;   // covariate offset |v|
  double sub_shift_norm = 4.0;   // subgroup offset |v|, stronger by design
  std::vector<int> concept_perm;  // empty means swap classes 0 and 1
};

inline std::vector<int> concept_permutation(const StreamConfig& cfg) {
  if (!cfg.concept_perm.empty()) return cfg.concept_perm;
  std::vector<int> perm(static_cast<std::size_t>(cfg.classes));
  for (int c = 0; c < cfg.classes; ++c) perm[static_cast<std::size_t>(c)] = c;
  perm[0] = 1;
  perm[1] = 0;
  return perm;
}

inline void validate_permutation(std::span<const int> perm, int classes) {
  require(static_cast<int>(perm.size()) == classes, "permutation: wrong length");
  std::vector<bool> seen(static_cast<std::size_t>(classes), false);
  int moved = 0;
  for (int c = 0; c < classes; ++c) {
    int to = perm[static_cast<std::size_t>(c)];
    require(to >= 0 && to < classes, "permutation: entry out of range");
    require(!seen[static_cast<std::size_t>(to)], "permutation: duplicate entry");
    seen[static_cast<std::size_t>(to)] = true;
    moved += to != c ? 1 : 0;
  }
  require(moved >= 2, "permutation: must move at least two classes");
}

inline void validate_stream_config(const StreamConfig& cfg) {
  require(cfg.length >= 1, "stream config: length must be positive");
  require(cfg.classes >= 2, "stream config: need at least two classes");
  require(cfg.dim >= cfg.classes, "stream config: dim must be at least the class count");
  // An onset beyond the horizon is legal: the drift simply never activates.
  if (cfg.pattern != DriftPattern::Recurring)
    require(cfg.onset >= 1, "stream config: onset out of range");
  require(cfg.period >= 2, "stream config: period must be at least 2");
  require(cfg.delay >= 0, "stream config: negative delay");
  require(cfg.p_sub > 0.0 && cfg.p_sub < 1.0, "stream config: p_sub must lie in (0,1)");
  require(cfg.cluster_sep > 0.0, "stream config: cluster separation must be positive");
  require(cfg.cov_shift_norm >= 0.0 && cfg.sub_shift_norm >= 0.0,
          "stream config: negative shift norm");
  validate_permutation(concept_permutation(cfg), cfg.classes);
}

// Class means: a centered regular simplex over the first `classes`
// coordinates, scaled so pairwise distances equal cluster_sep.
inline Vec cluster_mean(const StreamConfig& cfg, int cls) {
  require(cls >= 0 && cls < cfg.classes, "cluster_mean: class out of range");
  Vec m = Vec::Zero(cfg.dim);
  double scale = cfg.cluster_sep / std::sqrt(2.0);
  for (int j = 0; j < cfg.classes; ++j)
    m(j) = scale * ((j == cls ? 1.0 : 0.0) - 1.0 / static_cast<double>(cfg.classes));
  return m;
}

// Fixed covariate drift direction: from class-0 territory toward class 1, so
// a positive shift drags every cluster across decision boundaries.
inline Vec shift_direction(const StreamConfig& cfg) {
  Vec u = cluster_mean(cfg, 1) - cluster_mean(cfg, 0);
  return u / u.norm();
}

inline double alpha_at(long t, const StreamConfig& cfg) {
  switch (cfg.pattern) {
    case DriftPattern::Sudden:
      return t >= cfg.onset ? 1.0 : 0.0;
    case DriftPattern::Gradual:
      return 1.0 / (1.0 + std::exp(-cfg.ramp * static_cast<double>(t - cfg.onset)));
    case DriftPattern::Recurring:
      return 0.5 * (1.0 + std::sin(2.0 * std::numbers::pi * static_cast<double>(t) /
                                   static_cast<double>(cfg.period)));
  }
  throw ValidationError("alpha_at: unknown pattern");
}

inline Vec apply_covariate(const Vec& x, double alpha, const StreamConfig& cfg) {
  if (alpha == 0.0 || cfg.cov_shift_norm == 0.0) return x;
  return x + alpha * cfg.cov_shift_norm * shift_direction(cfg);
}

inline Vec apply_subgroup(const Vec& x, int group, double alpha, const StreamConfig& cfg) {
  require(group == 0 || group == 1, "apply_subgroup: group must be binary");
  if (group == 0 || alpha == 0.0 || cfg.sub_shift_norm == 0.0) return x;
  return x + alpha * cfg.sub_shift_norm * shift_direction(cfg);
}

inline int apply_concept(int y, double alpha, std::span<const int> perm, Rng& rng) {
  validate_permutation(perm, static_cast<int>(perm.size()));
  require(y >= 0 && y < static_cast<int>(perm.size()), "apply_concept: label out of range");
  require(alpha >= 0.0 && alpha <= 1.0, "apply_concept: alpha out of range");
  if (alpha > 0.0 && bernoulli(rng, alpha)) return perm[static_cast<std::size_t>(y)];
  return y;
}

struct SyntheticExample {
  long t = 0;
  Vec x;
  int y = 0;
  int group = 0;
  long arrival = 0;  // label observation time t + d
};

// One nominal draw with no drift applied; used for launch/training data.
inline SyntheticExample sample_nominal(long t, const StreamConfig& cfg, Rng& rng) {
  SyntheticExample ex;
  ex.t = t;
  ex.y = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(cfg.classes)));
  ex.group = bernoulli(rng, cfg.p_sub) ? 1 : 0;
  ex.x = cluster_mean(cfg, ex.y);
  for (int j = 0; j < cfg.dim; ++j) ex.x(j) += normal01(rng);
  ex.arrival = t + cfg.delay;
  return ex;
}

// Mixture-scheduled stream draw: covariate and subgroup drift shift features
// continuously with alpha; concept drift permutes the label with probability
// alpha.
inline SyntheticExample sample_example(long t, const StreamConfig& cfg, Rng& rng) {
  SyntheticExample ex = sample_nominal(t, cfg, rng);
  double alpha = alpha_at(t, cfg);
  switch (cfg.drift_type) {
    case belief::DriftType::None:
      break;
    case belief::DriftType::Covariate:
      ex.x = apply_covariate(ex.x, alpha, cfg);
      break;
    case belief::DriftType::Subgroup:
      ex.x = apply_subgroup(ex.x, ex.group, alpha, cfg);
      break;
    case belief::DriftType::Concept: {
      auto perm = concept_permutation(cfg);
      ex.y = apply_concept(ex.y, alpha, perm, rng);
      break;
    }
  }
  return ex;
}

// Full stream, derived per step from the config seed so the realization is
// independent of any other RNG consumption.
inline std::vector<SyntheticExample> generate_stream(const StreamConfig& cfg) {
  validate_stream_config(cfg);
  std::vector<SyntheticExample> out;
  out.reserve(static_cast<std::size_t>(cfg.length));
  for (long t = 1; t <= cfg.length; ++t) {
    Rng rng = make_rng(cfg.seed, 0x53545232u + static_cast<std::uint64_t>(t));
    out.push_back(sample_example(t, cfg, rng));
  }
  return out;
}

struct Checkpoint {
  Mat w;
  Vec b;
  double eta = 1.0;
};

struct SurrogateModel {
  Mat w;  // classes x dim
  Vec b;
  double eta = 1.0;  // calibration temperature
  std::vector<Checkpoint> checkpoints;
  std::size_t safe_index = 0;  // theta_safe
};

inline Vec model_logits(const SurrogateModel& m, const Vec& x) { return m.w * x + m.b; }

inline Vec model_predict(const SurrogateModel& m, const Vec& x) {
  require(m.eta > 0.0, "model_predict: temperature must be positive");
  return softmax(model_logits(m, x) / m.eta);
}

inline int model_argmax(const SurrogateModel& m, const Vec& x) {
  Vec logits = model_logits(m, x);
  int arg = 0;
  logits.maxCoeff(&arg);
  return arg;
}

inline double loss01(const SurrogateModel& m, const Vec& x, int y) {
  return model_argmax(m, x) == y ? 0.0 : 1.0;
}

inline bool abstain_rule(const Vec& probs, double threshold) {
  require(threshold >= 0.0 && threshold <= 1.0, "abstain_rule: threshold out of range");
  return probs.maxCoeff() >= threshold;  // true means predict
}

struct LabeledExample {
  long index = 0;
  Vec x;
  int y = 0;
  int group = 0;
};

// Weighted multinomial logistic fit by full-batch gradient descent from zero
// init; shared by launch training and retraining.
struct FitConfig {
  double l2 = 1e-3;
  int iters = 300;
  double lr = 0.5;
};

inline void fit_softmax_weighted(Mat& w, Vec& b, const Mat& x, std::span<const int> y,
                                 std::span<const double> sample_weight, const FitConfig& fit) {
  const auto n = x.rows();
  require(n >= 1, "fit_softmax: empty data");
  require(static_cast<std::size_t>(n) == y.size() && y.size() == sample_weight.size(),
          "fit_softmax: size mismatch");
  const auto classes = w.rows();
  double wsum = 0.0;
  for (double sw : sample_weight) {
    require(sw >= 0.0, "fit_softmax: negative sample weight");
    wsum += sw;
  }
  require(wsum > 0.0, "fit_softmax: zero total weight");

  w.setZero();
  b.setZero();
  Mat gw(classes, x.cols());
  Vec gb(classes);
  for (int it = 0; it < fit.iters; ++it) {
    gw.setZero();
    gb.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      Vec p = softmax(w * x.row(i).transpose() + b);
      double sw = sample_weight[static_cast<std::size_t>(i)] / wsum;
      for (Eigen::Index c = 0; c < classes; ++c) {
        double coeff = sw * (p(c) - (static_cast<int>(c) == y[static_cast<std::size_t>(i)]));
        gw.row(c) += coeff * x.row(i);
        gb(c) += coeff;
      }
    }
    gw += fit.l2 * w;
    w -= fit.lr * gw;
    b -= fit.lr * gb;
  }
}

inline SurrogateModel train_launch_model(const StreamConfig& cfg, int n_train,
                                         const FitConfig& fit, std::uint64_t seed) {
  validate_stream_config(cfg);
  require(n_train >= cfg.classes, "train_launch_model: too few training points");
  Rng rng = make_rng(seed, 0x4c41554eu);
  Mat x(n_train, cfg.dim);
  std::vector<int> y;
  std::vector<double> sw(static_cast<std::size_t>(n_train), 1.0);
  for (int i = 0; i < n_train; ++i) {
    auto ex = sample_nominal(0, cfg, rng);
    x.row(i) = ex.x.transpose();
    y.push_back(ex.y);
  }
  SurrogateModel model;
  model.w = Mat::Zero(cfg.classes, cfg.dim);
  model.b = Vec::Zero(cfg.classes);
  fit_softmax_weighted(model.w, model.b, x, y, sw, fit);
  model.checkpoints.push_back({model.w, model.b, model.eta});
  model.safe_index = 0;
  return model;
}

// Mean NLL of temperature-scaled predictions at a trial temperature.
inline double calibration_nll(const SurrogateModel& m, std::span<const LabeledExample> labeled,
                              double eta) {
  double acc = 0.0;
  for (const auto& ex : labeled) {
    Vec p = softmax(model_logits(m, ex.x) / eta);
    acc -= std::log(std::max(p(ex.y), 1e-300));
  }
  return acc / static_cast<double>(labeled.size());
}

struct ActionResult {
  bool applied = false;
};

// Temperature recalibration: 1-D NLL minimization by golden-section search
// over [0.05, 20]; logits untouched.
inline ActionResult act_recalibrate(SurrogateModel& m, std::span<const LabeledExample> labeled) {
  if (labeled.empty()) return {false};
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = 0.05, hi = 20.0;
  double x1 = hi - inv_phi * (hi - lo);
  double x2 = lo + inv_phi * (hi - lo);
  double f1 = calibration_nll(m, labeled, x1);
  double f2 = calibration_nll(m, labeled, x2);
  for (int it = 0; it < 80; ++it) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - inv_phi * (hi - lo);
      f1 = calibration_nll(m, labeled, x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + inv_phi * (hi - lo);
      f2 = calibration_nll(m, labeled, x2);
    }
  }
  m.eta = 0.5 * (lo + hi);
  return {true};
}

struct EntropyObjective {
  double mean_entropy = 0.0;
  Mat grad_w;
  Vec grad_b;
};

// Mean predictive entropy over a window and its gradient with respect to the
// weights (through the temperature-scaled softmax).
inline EntropyObjective entropy_objective(const SurrogateModel& m, const Mat& inputs) {
  const auto n = inputs.rows();
  require(n >= 1, "entropy_objective: empty window");
  EntropyObjective out;
  out.grad_w = Mat::Zero(m.w.rows(), m.w.cols());
  out.grad_b = Vec::Zero(m.b.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec x = inputs.row(i).transpose();
    Vec p = model_predict(m, x);
    double h = 0.0;
    for (Eigen::Index c = 0; c < p.size(); ++c)
      if (p(c) > 1e-300) h -= p(c) * std::log(p(c));
    out.mean_entropy += h;
    // dH/ds_c = -p_c (log p_c + H) for s = logits / eta
    for (Eigen::Index c = 0; c < p.size(); ++c) {
      double gs = p(c) > 1e-300 ? -p(c) * (std::log(p(c)) + h) : 0.0;
      double gz = gs / m.eta;
      out.grad_w.row(c) += gz * x.transpose();
      out.grad_b(c) += gz;
    }
  }
  out.mean_entropy /= static_cast<double>(n);
  out.grad_w /= static_cast<double>(n);
  out.grad_b /= static_cast<double>(n);
  return out;
}

// Test-time adaptation: a few entropy-minimization gradient steps on recent
// unlabeled inputs.
inline void act_tta(SurrogateModel& m, const Mat& recent_inputs, int steps = 5, double lr = 0.05) {
  require(steps >= 0, "act_tta: negative step count");
  require(lr >= 0.0, "act_tta: negative learning rate");
  for (int s = 0; s < steps; ++s) {
    auto obj = entropy_objective(m, recent_inputs);
    m.w -= lr * obj.grad_w;
    m.b -= lr * obj.grad_b;
  }
}

struct RetrainConfig {
  double half_life = 64.0;  // stream indices; recent labels dominate the refit
  FitConfig fit;
};

// Full refit on the labeled set with exponential recency weights, then a new
// checkpoint. Degenerate sets (fewer than two classes present) are a no-op.
inline ActionResult act_retrain(SurrogateModel& m, std::span<const LabeledExample> labeled,
                                long t_now, const RetrainConfig& cfg, Rng& rng) {
  (void)rng;  // full-batch fit from zero init is deterministic
  if (labeled.empty()) return {false};
  std::vector<int> present;
  for (const auto& ex : labeled)
    if (std::find(present.begin(), present.end(), ex.y) == present.end()) present.push_back(ex.y);
  if (present.size() < 2) return {false};

  Mat x(static_cast<Eigen::Index>(labeled.size()), m.w.cols());
  std::vector<int> y;
  std::vector<double> sw;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = labeled[i].x.transpose();
    y.push_back(labeled[i].y);
    double age = static_cast<double>(t_now - labeled[i].index);
    sw.push_back(std::exp2(-std::max(age, 0.0) / cfg.half_life));
  }
  fit_softmax_weighted(m.w, m.b, x, y, sw, cfg.fit);
  m.checkpoints.push_back({m.w, m.b, m.eta});
  return {true};
}

// Bitwise restore of the safe checkpoint (weights and temperature).
inline void act_rollback(SurrogateModel& m) {
  require(m.safe_index < m.checkpoints.size(), "act_rollback: no safe checkpoint");
  const Checkpoint& cp = m.checkpoints[m.safe_index];
  m.w = cp.w;
  m.b = cp.b;
  m.eta = cp.eta;
}

inline void mark_safe_checkpoint(SurrogateModel& m) {
  m.checkpoints.push_back({m.w, m.b, m.eta});
  m.safe_index = m.checkpoints.size() - 1;
}

inline bool model_equals_safe(const SurrogateModel& m) {
  require(m.safe_index < m.checkpoints.size(), "model_equals_safe: no safe checkpoint");
  const Checkpoint& cp = m.checkpoints[m.safe_index];
  return m.eta == cp.eta && (m.b.array() == cp.b.array()).all() &&
         (m.w.array() == cp.w.array()).all();
}

class DelayQueue {
 public:
  void push(long index, int label, long arrival) {
    require(pending_.find(index) == pending_.end(), "delay queue: duplicate index");
    pending_.emplace(index, std::pair<int, long>{label, arrival});
  }

  // Label visible at time t iff its arrival time has passed.
  std::optional<int> visible(long index, long t) const {
    auto it = pending_.find(index);
    if (it == pending_.end() || it->second.second > t) return std::nullopt;
    return it->second.first;
  }

  std::size_t size() const { return pending_.size(); }

 private:
  std::unordered_map<long, std::pair<int, long>> pending_;
};

// ---------------------------------------------------------------------------
// Evidence pipeline: turns (recent window, model, labeled audits) into the
// standardized evidence vector, with reference statistics frozen at launch.

struct MonitorSettings {
  int recent_window = 64;    // n
  int ref_subsample = 128;   // reference points entering MMD and the probe
  int n_ref = 512;           // reference embedding pool
  int ece_bins = 10;
  double eps = 1e-6;
  double disc_train_fraction = 0.5;
  int ref_reps = 32;  // pseudo-recent repetitions when fitting null stats
  monitors::MonitorMask mask;
};

struct EvidenceEngine {
  MonitorSettings settings;
  Mat ref_subsample;           // fixed rows for two-sample monitors
  std::vector<int> ref_groups;
  monitors::ReferenceStats stats;
  std::uint64_t seed = 0;  // base for per-step discriminator splits
  // Frozen-reference geometry, cached once: per-row squared norms and the
  // i<j pairwise squared distances. Recomputing these every step dominated
  // the evidence cost.
  Vec ref_sq;
  Eigen::ArrayXd ref_d2;

  void cache_reference_geometry() {
    const auto n = ref_subsample.rows();
    ref_sq = ref_subsample.rowwise().squaredNorm();
    ref_d2.resize(n * (n - 1) / 2);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j)
        ref_d2(k++) = (ref_subsample.row(i) - ref_subsample.row(j)).squaredNorm();
  }

  monitors::EvidenceVector compute(long t, const Mat& recent_x, const Mat& recent_probs,
                                   std::span<const int> recent_groups,
                                   std::span<const monitors::LabeledPrediction> labeled) const {
    monitors::EvidenceVector ev;
    const auto& mask = settings.mask.enabled;
    const auto m = recent_x.rows();
    const auto n = ref_subsample.rows();
    require(ref_d2.size() == n * (n - 1) / 2,
            "evidence engine: reference geometry cache missing");
    bool need_two_sample = mask[0] || mask[4];
    double sigma2 = 1.0;
    Eigen::ArrayXd rr_d2, cross_d2;
    if (need_two_sample) {
      // Squared distances via norms and inner products; tiny negative values
      // from cancellation are clamped.
      Vec rec_sq = recent_x.rowwise().squaredNorm();
      Mat cross = recent_x * ref_subsample.transpose();
      cross_d2.resize(m * n);
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          cross_d2(i * n + j) = std::max(0.0, rec_sq(i) + ref_sq(j) - 2.0 * cross(i, j));
      Mat gram = recent_x * recent_x.transpose();
      rr_d2.resize(m * (m - 1) / 2);
      Eigen::Index k = 0;
      for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = i + 1; j < m; ++j)
          rr_d2(k++) = std::max(0.0, rec_sq(i) + rec_sq(j) - 2.0 * gram(i, j));

      // Median of all pooled pairwise distances, matching median_bandwidth.
      std::vector<double> d2(static_cast<std::size_t>(rr_d2.size() + cross_d2.size() +
                                                      ref_d2.size()));
      double* out = d2.data();
      out = std::copy(rr_d2.data(), rr_d2.data() + rr_d2.size(), out);
      out = std::copy(cross_d2.data(), cross_d2.data() + cross_d2.size(), out);
      std::copy(ref_d2.data(), ref_d2.data() + ref_d2.size(), out);
      auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
      std::nth_element(d2.begin(), mid, d2.end());
      double med = *mid;
      if (d2.size() % 2 == 0) {
        auto lo = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2 - 1);
        std::nth_element(d2.begin(), lo, mid);
        med = 0.5 * (med + *lo);
      }
      sigma2 = med > 0.0 ? med : 1.0;
    }
    Eigen::ArrayXd e_rr, e_ref, e_cross;  // exp(-d2 / 2 sigma2), shared below
    if (need_two_sample) {
      double inv = -1.0 / (2.0 * sigma2);
      e_rr = (rr_d2 * inv).exp();
      e_ref = (ref_d2 * inv).exp();
      e_cross = (cross_d2 * inv).exp();
    }
    if (mask[0]) {
      double xx = 2.0 * e_rr.sum() / (static_cast<double>(m) * (m - 1));
      double yy = 2.0 * e_ref.sum() / (static_cast<double>(n) * (n - 1));
      double xy = 2.0 * e_cross.sum() / (static_cast<double>(m) * n);
      ev.raw[0] = xx + yy - xy;
    }
    if (mask[1])
      ev.raw[1] = monitors::discriminator_auc(recent_x, ref_subsample,
                                              settings.disc_train_fraction,
                                              seed ^ static_cast<std::uint64_t>(t))
                      .value;
    if (mask[2]) ev.raw[2] = monitors::entropy_shift(recent_probs, stats.mean_entropy_ref);
    if (mask[3]) {
      auto ece = monitors::streaming_ece(labeled, settings.ece_bins);
      ev.raw[3] = ece.degenerate ? 0.0 : ece.value - stats.ece_ref;
    }
    if (mask[4]) {
      // Same statistic as slice_max_mmd2, assembled from the kernel values
      // already computed for the full windows.
      auto rr_at = [&](Eigen::Index i, Eigen::Index j) {  // requires i < j
        return e_rr(i * m - i * (i + 1) / 2 + j - i - 1);
      };
      auto ref_at = [&](Eigen::Index i, Eigen::Index j) {
        return e_ref(i * n - i * (i + 1) / 2 + j - i - 1);
      };
      std::vector<int> groups(recent_groups.begin(), recent_groups.end());
      groups.insert(groups.end(), ref_groups.begin(), ref_groups.end());
      std::sort(groups.begin(), groups.end());
      groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
      bool any = false;
      double best = 0.0;
      std::vector<Eigen::Index> ri, fi;
      for (int g : groups) {
        ri.clear();
        fi.clear();
        for (Eigen::Index i = 0; i < m; ++i)
          if (recent_groups[static_cast<std::size_t>(i)] == g) ri.push_back(i);
        for (Eigen::Index j = 0; j < n; ++j)
          if (ref_groups[static_cast<std::size_t>(j)] == g) fi.push_back(j);
        const auto mg = static_cast<double>(ri.size());
        const auto ng = static_cast<double>(fi.size());
        if (ri.size() < 2 || fi.size() < 2) continue;
        double xx = 0.0, yy = 0.0, xy = 0.0;
        for (std::size_t a = 0; a < ri.size(); ++a)
          for (std::size_t b = a + 1; b < ri.size(); ++b) xx += rr_at(ri[a], ri[b]);
        for (std::size_t a = 0; a < fi.size(); ++a)
          for (std::size_t b = a + 1; b < fi.size(); ++b) yy += ref_at(fi[a], fi[b]);
        for (auto i : ri)
          for (auto j : fi) xy += e_cross(i * n + j);
        double v = 2.0 * xx / (mg * (mg - 1.0)) + 2.0 * yy / (ng * (ng - 1.0)) -
                   2.0 * xy / (mg * ng);
        best = any ? std::max(best, v) : v;
        any = true;
      }
      ev.raw[4] = any ? best : 0.0;
    }
    ev.standardized = monitors::standardize(ev.raw, stats, settings.eps);
    for (int j = 0; j < monitors::kEvidenceDim; ++j) {
      if (!mask[static_cast<std::size_t>(j)]) {
        ev.raw[static_cast<std::size_t>(j)] = 0.0;
        ev.standardized[static_cast<std::size_t>(j)] = 0.0;
      }
    }
    return ev;
  }
};

// Fits the null behavior of each monitor by replaying pseudo-recent nominal
// windows against the frozen reference, then freezes means and deviations.
inline EvidenceEngine make_evidence_engine(const StreamConfig& cfg, const SurrogateModel& model,
                                           const MonitorSettings& settings, std::uint64_t seed) {
  validate_stream_config(cfg);
  require(settings.recent_window >= 2, "evidence engine: recent window too small");
  require(settings.ref_subsample >= 2 && settings.n_ref >= settings.ref_subsample,
          "evidence engine: bad reference sizes");
  require(settings.ref_reps >= 2, "evidence engine: need at least two reference repetitions");

  EvidenceEngine eng;
  eng.settings = settings;
  eng.seed = splitmix64(seed ^ 0x45564944u);

  Rng rng = make_rng(seed, 0x52454653u);
  Mat ref_pool(settings.n_ref, cfg.dim);
  std::vector<int> pool_groups;
  double entropy_acc = 0.0;
  for (int i = 0; i < settings.n_ref; ++i) {
    auto ex = sample_nominal(0, cfg, rng);
    ref_pool.row(i) = ex.x.transpose();
    pool_groups.push_back(ex.group);
    entropy_acc += monitors::predictive_entropy(model_predict(model, ex.x));
  }
  eng.stats.mean_entropy_ref = entropy_acc / settings.n_ref;

  eng.ref_subsample = ref_pool.topRows(settings.ref_subsample);
  eng.ref_groups.assign(pool_groups.begin(), pool_groups.begin() + settings.ref_subsample);
  eng.cache_reference_geometry();

  // Launch calibration set fixes the reference ECE level.
  const int n_calib = std::max(64, settings.recent_window);
  std::vector<monitors::LabeledPrediction> calib;
  for (int i = 0; i < n_calib; ++i) {
    auto ex = sample_nominal(0, cfg, rng);
    Vec p = model_predict(model, ex.x);
    calib.push_back({p.maxCoeff(), model_argmax(model, ex.x) == ex.y});
  }
  eng.stats.ece_ref = monitors::streaming_ece(calib, settings.ece_bins).value;

  // Null monitor statistics over pseudo-recent windows.
  Mat raws(settings.ref_reps, monitors::kEvidenceDim);
  for (int rep = 0; rep < settings.ref_reps; ++rep) {
    Mat rx(settings.recent_window, cfg.dim);
    Mat rp(settings.recent_window, cfg.classes);
    std::vector<int> rg;
    std::vector<monitors::LabeledPrediction> rl;
    for (int i = 0; i < settings.recent_window; ++i) {
      auto ex = sample_nominal(0, cfg, rng);
      rx.row(i) = ex.x.transpose();
      Vec p = model_predict(model, ex.x);
      rp.row(i) = p.transpose();
      rg.push_back(ex.group);
      rl.push_back({p.maxCoeff(), model_argmax(model, ex.x) == ex.y});
    }
    // Temporarily standardize against zero stats; only raw values matter here.
    monitors::ReferenceStats zero;
    zero.mean_entropy_ref = eng.stats.mean_entropy_ref;
    zero.ece_ref = eng.stats.ece_ref;
    zero.sigma.fill(1.0);
    EvidenceEngine probe = eng;
    probe.stats = zero;
    auto ev = probe.compute(-static_cast<long>(rep) - 1, rx, rp, rg, rl);
    for (int j = 0; j < monitors::kEvidenceDim; ++j)
      raws(rep, j) = ev.raw[static_cast<std::size_t>(j)];
  }
  for (int j = 0; j < monitors::kEvidenceDim; ++j) {
    double mu = raws.col(j).mean();
    double var = (raws.col(j).array() - mu).square().sum() / settings.ref_reps;
    eng.stats.mu[static_cast<std::size_t>(j)] = mu;
    eng.stats.sigma[static_cast<std::size_t>(j)] = std::sqrt(var);
  }
  return eng;
}

// ---------------------------------------------------------------------------
// Episode generation for belief training.

struct EpisodeConfig {
  int count = 40;     // episodes; enough for a stable emission fit
  int length = 300;   // steps per episode
  int audit_per_step = 8;
  double onset_lo_frac = 0.25;
  double onset_hi_frac = 0.75;
};

// Balanced four-type episodes; the per-step label is the injected type while
// its schedule is active (alpha >= 0.5) and none otherwise. Evidence comes
// from the same pipeline the runtime uses, with the launch model held fixed.
inline belief::EpisodeDataset generate_episodes(const EpisodeConfig& ep_cfg,
                                                const StreamConfig& base_cfg,
                                                const EvidenceEngine& engine,
                                                const SurrogateModel& model, Rng& rng) {
  validate_stream_config(base_cfg);
  require(ep_cfg.count >= 1 && ep_cfg.length >= engine.settings.recent_window + 2,
          "generate_episodes: episode too short for the monitor window");
  belief::EpisodeDataset data;
  const int n_win = engine.settings.recent_window;
  for (int e = 0; e < ep_cfg.count; ++e) {
    auto type = static_cast<belief::DriftType>(e % belief::kNumDriftTypes);
    StreamConfig cfg = base_cfg;
    cfg.length = ep_cfg.length;
    cfg.drift_type = type;
    cfg.pattern = DriftPattern::Sudden;
    long lo = std::max<long>(1, static_cast<long>(ep_cfg.onset_lo_frac * ep_cfg.length));
    long hi = std::max(lo + 1, static_cast<long>(ep_cfg.onset_hi_frac * ep_cfg.length));
    cfg.onset = lo + static_cast<long>(uniform_below(rng, static_cast<std::uint64_t>(hi - lo)));
    cfg.seed = splitmix64(rng());

    auto stream = generate_stream(cfg);
    belief::Episode episode;
    Mat evidence(ep_cfg.length, monitors::kEvidenceDim);
    Eigen::Index out_row = 0;
    for (long t = n_win; t <= cfg.length; ++t) {
      Mat rx(n_win, cfg.dim);
      Mat rp(n_win, cfg.classes);
      std::vector<int> rg;
      for (int i = 0; i < n_win; ++i) {
        const auto& ex = stream[static_cast<std::size_t>(t - n_win + i)];
        rx.row(i) = ex.x.transpose();
        rp.row(i) = model_predict(model, ex.x).transpose();
        rg.push_back(ex.group);
      }
      // Pseudo-audit: labels for a recent lagged slice are free at training
      // time; mirrors the runtime labeled set's size and lag.
      std::vector<monitors::LabeledPrediction> rl;
      long lag_hi = t - cfg.delay;
      for (long i = std::max<long>(1, lag_hi - n_win + 1); i <= lag_hi; ++i) {
        if ((i % std::max(1, n_win / ep_cfg.audit_per_step)) != 0) continue;
        const auto& ex = stream[static_cast<std::size_t>(i - 1)];
        Vec p = model_predict(model, ex.x);
        rl.push_back({p.maxCoeff(), model_argmax(model, ex.x) == ex.y});
      }
      auto ev = engine.compute(t, rx, rp, rg, rl);
      for (int j = 0; j < monitors::kEvidenceDim; ++j)
        evidence(out_row, j) = ev.standardized[static_cast<std::size_t>(j)];
      double alpha = type == belief::DriftType::None ? 0.0 : alpha_at(t, cfg);
      episode.labels.push_back(alpha >= 0.5 ? type : belief::DriftType::None);
      ++out_row;
    }
    episode.evidence = evidence.topRows(out_row);
    data.push_back(std::move(episode));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Gain-table calibration by paired one-step counterfactuals.

struct GainCalibConfig {
  int episodes_per_cell = 4;
  long pre_steps = 120;   // drifted steps before the intervention
  long horizon = 50;      // H
  int eval_draws = 256;   // risk estimate at the horizon
  double sigma_r = 0.10;  // risk scale
  int recent_window = 64;
  RetrainConfig retrain;
  int tta_steps = 5;
  double tta_lr = 0.05;
};

// Expected risk reduction of each action over doing nothing, averaged over
// paired drift realizations and scaled by sigma_r. Both branches of a pair
// replay the identical stream.
inline controller::GainTable calibrate_gain_table(const StreamConfig& base_cfg,
                                                  const SurrogateModel& launch,
                                                  const GainCalibConfig& cal, Rng& rng) {
  validate_stream_config(base_cfg);
  require(cal.sigma_r > 0.0, "calibrate_gain_table: sigma_r must be positive");
  controller::GainTable table;
  table.values.setZero();

  for (int d = 0; d < belief::kNumDriftTypes; ++d) {
    auto type = static_cast<belief::DriftType>(d);
    Eigen::Matrix<double, 1, controller::kNumActions> acc;
    acc.setZero();
    for (int e = 0; e < cal.episodes_per_cell; ++e) {
      StreamConfig cfg = base_cfg;
      cfg.drift_type = type;
      cfg.pattern = DriftPattern::Sudden;
      cfg.onset = 1;  // fully drifted regime from the start
      cfg.length = cal.pre_steps;
      cfg.seed = splitmix64(rng());
      auto stream = generate_stream(cfg);

      // Calibration runs pre-deployment, so every pre-intervention label is
      // available; recency weighting inside retrain handles staleness.
      std::vector<LabeledExample> labeled;
      for (long i = 1; i <= cal.pre_steps; ++i) {
        const auto& ex = stream[static_cast<std::size_t>(i - 1)];
        labeled.push_back({i, ex.x, ex.y, ex.group});
      }
      Mat recent(std::min<Eigen::Index>(cal.recent_window, cal.pre_steps), cfg.dim);
      for (Eigen::Index i = 0; i < recent.rows(); ++i) {
        const auto& ex = stream[stream.size() - static_cast<std::size_t>(recent.rows() - i)];
        recent.row(i) = ex.x.transpose();
      }

      // Shared post-horizon evaluation draws: both branches of every pair see
      // the same realization.
      StreamConfig eval_cfg = cfg;
      eval_cfg.seed = splitmix64(cfg.seed ^ 0x45564c31u);
      eval_cfg.length = cal.eval_draws;
      auto eval_stream = generate_stream(eval_cfg);

      auto risk_of = [&](const SurrogateModel& m) {
        double acc_loss = 0.0;
        for (const auto& ex : eval_stream) acc_loss += loss01(m, ex.x, ex.y);
        return acc_loss / static_cast<double>(eval_stream.size());
      };

      double base_risk = risk_of(launch);
      for (int a = 1; a < controller::kNumActions; ++a) {
        SurrogateModel m = launch;
        Rng ar = make_rng(cfg.seed, 0x41435431u + static_cast<std::uint64_t>(a));
        switch (static_cast<controller::Action>(a)) {
          case controller::Action::Recalibrate:
            act_recalibrate(m, labeled);
            break;
          case controller::Action::Tta:
            act_tta(m, recent, cal.tta_steps, cal.tta_lr);
            break;
          case controller::Action::QueryLabels:
            break;  // labels alone do not move the model in one step
          case controller::Action::Retrain:
            act_retrain(m, labeled, cal.pre_steps, cal.retrain, ar);
            break;
          case controller::Action::Rollback:
            act_rollback(m);
            break;
          case controller::Action::Abstain:
            break;  // serving-side only
          default:
            break;
        }
        acc(a) += (base_risk - risk_of(m)) / cal.sigma_r;
      }
    }
    for (int a = 1; a < controller::kNumActions; ++a)
      table.values(d, a) = acc(a) / cal.episodes_per_cell;
  }
  return table;
}

}  // namespace driftctl::simenv
