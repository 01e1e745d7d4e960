// Label-free and label-light drift monitors over a recent window versus a
// frozen reference window, plus the standardization that turns their raw
// outputs into a comparable evidence vector.
//
// Evidence component order everywhere: mmd2, disc_auc, entropy_shift,
// ece_shift, slice_max_mmd2.
#pragma once

#include "driftctl/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace driftctl::monitors {

inline constexpr int kEvidenceDim = 5;

inline constexpr std::array<const char*, kEvidenceDim> kEvidenceNames = {
    "mmd2", "disc_auc", "entropy_shift", "ece_shift", "slice_max_mmd2"};

struct MonitorValue {
  double value = 0.0;
  bool degenerate = false;  // input too thin to be informative; value is a neutral default
};

struct EvidenceVector {
  std::array<double, kEvidenceDim> raw{};
  std::array<double, kEvidenceDim> standardized{};
};

// Null-behavior statistics fitted on the reference segment, used to
// standardize raw monitor outputs, plus the reference baselines the shift
// monitors compare against.
struct ReferenceStats {
  std::array<double, kEvidenceDim> mu{};
  std::array<double, kEvidenceDim> sigma{};
  double mean_entropy_ref = 0.0;
  double ece_ref = 0.0;
};

struct MonitorMask {
  std::array<bool, kEvidenceDim> enabled = {true, true, true, true, true};
};

// Median of pairwise squared Euclidean distances over distinct pairs of the
// pooled sample (even count: midpoint of the central pair). Degenerate inputs
// whose median distance is zero fall back to 1 so the kernel stays defined.
inline double median_bandwidth(const Mat& pooled) {
  const auto m = pooled.rows();
  require(m >= 2, "median_bandwidth: need at least two points");
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      d2.push_back((pooled.row(i) - pooled.row(j)).squaredNorm());
    }
  }
  auto mid = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2);
  std::nth_element(d2.begin(), mid, d2.end());
  double med = *mid;
  if (d2.size() % 2 == 0) {
    auto lo = d2.begin() + static_cast<std::ptrdiff_t>(d2.size() / 2 - 1);
    std::nth_element(d2.begin(), lo, mid);
    med = 0.5 * (med + *lo);
  }
  return med > 0.0 ? med : 1.0;
}

inline double rbf_kernel(const Eigen::Ref<const Eigen::RowVectorXd>& u,
                         const Eigen::Ref<const Eigen::RowVectorXd>& v, double sigma2) {
  return std::exp(-(u - v).squaredNorm() / (2.0 * sigma2));
}

// Unbiased MMD^2 with an RBF kernel: diagonal terms are excluded, so the
// estimate can be negative when the two windows agree.
inline double mmd2_unbiased(const Mat& recent, const Mat& reference, double sigma2) {
  const auto m = recent.rows();
  const auto n = reference.rows();
  require(m >= 2 && n >= 2, "mmd2_unbiased: need at least two points per window");
  require(sigma2 > 0.0, "mmd2_unbiased: bandwidth must be positive");
  require(recent.cols() == reference.cols(), "mmd2_unbiased: dimension mismatch");

  double xx = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) xx += rbf_kernel(recent.row(i), recent.row(j), sigma2);
  xx = 2.0 * xx / (static_cast<double>(m) * static_cast<double>(m - 1));

  double yy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      yy += rbf_kernel(reference.row(i), reference.row(j), sigma2);
  yy = 2.0 * yy / (static_cast<double>(n) * static_cast<double>(n - 1));

  double xy = 0.0;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) xy += rbf_kernel(recent.row(i), reference.row(j), sigma2);
  xy = 2.0 * xy / (static_cast<double>(m) * static_cast<double>(n));

  return xx + yy - xy;
}

// Rank AUC of positive scores against negative scores, ties get half credit.
inline double rank_auc(std::span<const double> pos, std::span<const double> neg) {
  require(!pos.empty() && !neg.empty(), "rank_auc: both score sets must be non-empty");
  double wins = 0.0;
  for (double p : pos) {
    for (double q : neg) {
      if (p > q)
        wins += 1.0;
      else if (p == q)
        wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// Held-out AUC of a linear logistic probe trained to tell the recent window
// (label 1) from the reference window (label 0). A window too small to leave
// one held-out point per class is reported as degenerate 0.5.
inline MonitorValue discriminator_auc(const Mat& recent, const Mat& reference,
                                      double train_fraction, std::uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0,
          "discriminator_auc: train_fraction must lie in (0,1)");
  require(recent.cols() == reference.cols(), "discriminator_auc: dimension mismatch");
  const auto m = recent.rows();
  const auto n = reference.rows();
  if (m < 2 || n < 2) return {0.5, true};

  Rng rng = make_rng(seed, 0x41554343);
  auto split = [&](Eigen::Index count) {
    std::vector<std::int64_t> idx;
    sample_without_replacement(rng, count, count, idx);
    auto tr = static_cast<std::int64_t>(std::llround(train_fraction * static_cast<double>(count)));
    tr = std::clamp<std::int64_t>(tr, 1, count - 1);
    return std::pair{std::vector<std::int64_t>(idx.begin(), idx.begin() + tr),
                     std::vector<std::int64_t>(idx.begin() + tr, idx.end())};
  };
  auto [pos_tr, pos_te] = split(m);
  auto [neg_tr, neg_te] = split(n);

  const auto p = recent.cols();
  const auto rows_tr = static_cast<Eigen::Index>(pos_tr.size() + neg_tr.size());
  Mat x(rows_tr, p);
  Vec y(rows_tr);
  Eigen::Index r = 0;
  for (auto i : pos_tr) { x.row(r) = recent.row(i); y(r++) = 1.0; }
  for (auto i : neg_tr) { x.row(r) = reference.row(i); y(r++) = 0.0; }

  // Standardize with training statistics so the fixed step size behaves.
  Eigen::RowVectorXd mu = x.colwise().mean();
  Eigen::RowVectorXd sd =
      ((x.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(rows_tr))
          .sqrt()
          .matrix();
  for (Eigen::Index j = 0; j < p; ++j) sd(j) = sd(j) > 1e-12 ? sd(j) : 1.0;
  Mat xs = (x.rowwise() - mu).array().rowwise() / sd.array();

  Vec w = Vec::Zero(p);
  double b = 0.0;
  const int iters = 96;
  const double lr = 0.5;
  const double l2 = 1e-4;
  for (int it = 0; it < iters; ++it) {
    Vec z = xs * w;
    z.array() += b;
    Vec prob = 1.0 / (1.0 + (-z.array()).exp());
    Vec err = prob - y;
    Vec gw = xs.transpose() * err / static_cast<double>(rows_tr) + l2 * w;
    double gb = err.mean();
    w -= lr * gw;
    b -= lr * gb;
  }

  auto score = [&](const Eigen::RowVectorXd& v) {
    return ((v - mu).array() / sd.array()).matrix() * w + Eigen::VectorXd::Constant(1, b);
  };
  std::vector<double> s_pos, s_neg;
  for (auto i : pos_te) s_pos.push_back(score(recent.row(i))(0));
  for (auto i : neg_te) s_neg.push_back(score(reference.row(i))(0));
  return {rank_auc(s_pos, s_neg), false};
}

// Shannon entropy of one predictive distribution (natural log, 0*log 0 = 0).
inline double predictive_entropy(const Vec& probs) {
  require(probs.size() > 0, "predictive_entropy: empty probability vector");
  double sum = 0.0;
  double h = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    double p = probs(i);
    require(p >= -1e-12, "predictive_entropy: negative probability");
    if (p > 0.0) h -= p * std::log(p);
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-9, "predictive_entropy: probabilities must sum to 1");
  return h;
}

// Mean predictive entropy over the recent window minus the reference mean.
inline double entropy_shift(const Mat& recent_probs, double ref_mean_entropy) {
  const auto m = recent_probs.rows();
  require(m >= 1, "entropy_shift: empty window");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) acc += predictive_entropy(recent_probs.row(i).transpose());
  return acc / static_cast<double>(m) - ref_mean_entropy;
}

struct LabeledPrediction {
  double confidence = 0.0;
  bool correct = false;
};

// Expected calibration error over equal-width confidence bins; the last bin
// is closed on the right so confidence 1.0 lands in it. Empty input is
// degenerate with value 0.
inline MonitorValue streaming_ece(std::span<const LabeledPrediction> preds, int bins) {
  require(bins >= 1, "streaming_ece: need at least one bin");
  if (preds.empty()) return {0.0, true};
  std::vector<double> cnt(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> conf(static_cast<std::size_t>(bins), 0.0);
  std::vector<double> acc(static_cast<std::size_t>(bins), 0.0);
  for (const auto& s : preds) {
    require(s.confidence >= 0.0 && s.confidence <= 1.0,
            "streaming_ece: confidence must lie in [0,1]");
    auto b = static_cast<std::size_t>(std::min<int>(
        bins - 1, static_cast<int>(s.confidence * static_cast<double>(bins))));
    cnt[b] += 1.0;
    conf[b] += s.confidence;
    acc[b] += s.correct ? 1.0 : 0.0;
  }
  const double total = static_cast<double>(preds.size());
  double ece = 0.0;
  for (std::size_t b = 0; b < cnt.size(); ++b) {
    if (cnt[b] > 0.0) ece += (cnt[b] / total) * std::abs(acc[b] / cnt[b] - conf[b] / cnt[b]);
  }
  return {ece, false};
}

// Largest per-group MMD^2 over groups with at least two points on each side.
// Flags degenerate when no group qualifies.
inline MonitorValue slice_max_mmd2(const Mat& recent, std::span<const int> recent_groups,
                                   const Mat& reference, std::span<const int> ref_groups,
                                   double sigma2) {
  require(static_cast<std::size_t>(recent.rows()) == recent_groups.size(),
          "slice_max_mmd2: recent tags mismatch");
  require(static_cast<std::size_t>(reference.rows()) == ref_groups.size(),
          "slice_max_mmd2: reference tags mismatch");
  std::vector<int> groups(recent_groups.begin(), recent_groups.end());
  groups.insert(groups.end(), ref_groups.begin(), ref_groups.end());
  std::sort(groups.begin(), groups.end());
  groups.erase(std::unique(groups.begin(), groups.end()), groups.end());

  auto rows_of = [](const Mat& src, std::span<const int> tags, int g) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < tags.size(); ++i)
      if (tags[i] == g) idx.push_back(static_cast<Eigen::Index>(i));
    Mat out(static_cast<Eigen::Index>(idx.size()), src.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = src.row(idx[i]);
    return out;
  };

  bool any = false;
  double best = 0.0;
  for (int g : groups) {
    Mat rg = rows_of(recent, recent_groups, g);
    Mat fg = rows_of(reference, ref_groups, g);
    if (rg.rows() < 2 || fg.rows() < 2) continue;
    double v = mmd2_unbiased(rg, fg, sigma2);
    best = any ? std::max(best, v) : v;
    any = true;
  }
  return {any ? best : 0.0, !any};
}

// Componentwise (raw - mu) / (sigma + eps); the epsilon keeps flat reference
// monitors from dividing by zero.
inline std::array<double, kEvidenceDim> standardize(const std::array<double, kEvidenceDim>& raw,
                                                    const ReferenceStats& stats, double eps) {
  require(eps >= 0.0, "standardize: eps must be non-negative");
  std::array<double, kEvidenceDim> out{};
  for (int j = 0; j < kEvidenceDim; ++j) {
    require(stats.sigma[static_cast<std::size_t>(j)] >= 0.0,
            "standardize: negative reference sigma");
    out[static_cast<std::size_t>(j)] =
        (raw[static_cast<std::size_t>(j)] - stats.mu[static_cast<std::size_t>(j)]) /
        (stats.sigma[static_cast<std::size_t>(j)] + eps);
  }
  return out;
}

}  // namespace driftctl::monitors
