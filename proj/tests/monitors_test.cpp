#include "driftctl/monitors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

namespace dm = driftctl::monitors;
using driftctl::Mat;
using driftctl::Vec;

namespace {

constexpr double kTightTol = 1e-9;
constexpr double kFpTol = 1e-12;

Mat column(std::initializer_list<double> vals) {
  Mat m(static_cast<Eigen::Index>(vals.size()), 1);
  Eigen::Index i = 0;
  for (double v : vals) m(i++, 0) = v;
  return m;
}

Mat gaussian_rows(driftctl::Rng& rng, Eigen::Index rows, Eigen::Index cols, double shift = 0.0) {
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = driftctl::normal01(rng) + shift;
  return m;
}

}  // namespace

TEST(MedianBandwidth, SinglePairForcesMedian) {
  EXPECT_DOUBLE_EQ(dm::median_bandwidth(column({0.0, 2.0})), 4.0);
}

TEST(MedianBandwidth, HandEnumeratedTriple) {
  // distances^2 {1, 9, 4}, median 4
  EXPECT_DOUBLE_EQ(dm::median_bandwidth(column({0.0, 1.0, 3.0})), 4.0);
}

TEST(MedianBandwidth, EvenCountAveragesCentralPair) {
  // distances^2 sorted {1, 1, 4, 4, 9, 16}
  EXPECT_DOUBLE_EQ(dm::median_bandwidth(column({0.0, 1.0, 2.0, 4.0})), 4.0);
}

TEST(MedianBandwidth, AllIdenticalFallsBackToOne) {
  EXPECT_DOUBLE_EQ(dm::median_bandwidth(column({3.0, 3.0, 3.0})), 1.0);
}

TEST(MedianBandwidth, RejectsSinglePoint) {
  EXPECT_THROW(dm::median_bandwidth(column({1.0})), driftctl::ValidationError);
}

TEST(Mmd2Unbiased, IdenticalConstantWindowsGiveZero) {
  Mat a = column({2.5, 2.5});
  EXPECT_DOUBLE_EQ(dm::mmd2_unbiased(a, a, 1.0), 0.0);
}

TEST(Mmd2Unbiased, HandEvaluatedToyValue) {
  // 2 - 2 e^{-1/2}
  double got = dm::mmd2_unbiased(column({0.0, 0.0}), column({1.0, 1.0}), 1.0);
  EXPECT_NEAR(got, 0.786938680574733, kTightTol);
}

TEST(Mmd2Unbiased, IdenticalNonConstantWindowsNonPositive) {
  Mat a = column({0.0, 1.0});
  // Same sample on both sides: estimate is k(0,1) - 1 < 0.
  double got = dm::mmd2_unbiased(a, a, 1.0);
  EXPECT_NEAR(got, std::exp(-0.5) - 1.0, kFpTol);
  EXPECT_LT(got, 0.0);
}

TEST(Mmd2Unbiased, SymmetricUnderSwap) {
  driftctl::Rng rng = driftctl::make_rng(7, 0);
  Mat a = gaussian_rows(rng, 8, 3);
  Mat b = gaussian_rows(rng, 7, 3, 0.5);
  EXPECT_NEAR(dm::mmd2_unbiased(a, b, 2.0), dm::mmd2_unbiased(b, a, 2.0), kFpTol);
}

TEST(Mmd2Unbiased, NullMeanNearZero) {
  driftctl::Rng rng = driftctl::make_rng(11, 0);
  const int reps = 500;
  std::vector<double> vals(reps);
  for (int r = 0; r < reps; ++r) {
    Mat a = gaussian_rows(rng, 32, 1);
    Mat b = gaussian_rows(rng, 32, 1);
    vals[static_cast<std::size_t>(r)] = dm::mmd2_unbiased(a, b, 1.0);
  }
  double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / reps;
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= (reps - 1);
  double se = std::sqrt(var / reps);
  EXPECT_LT(std::abs(mean), 3.0 * se);
}

TEST(Mmd2Unbiased, RejectsTinyWindowsAndBadBandwidth) {
  Mat one = column({0.0});
  Mat two = column({0.0, 1.0});
  EXPECT_THROW(dm::mmd2_unbiased(one, two, 1.0), driftctl::ValidationError);
  EXPECT_THROW(dm::mmd2_unbiased(two, one, 1.0), driftctl::ValidationError);
  EXPECT_THROW(dm::mmd2_unbiased(two, two, 0.0), driftctl::ValidationError);
}

TEST(RankAuc, PerfectSeparation) {
  std::vector<double> pos = {0.9, 0.8};
  std::vector<double> neg = {0.2, 0.1};
  EXPECT_DOUBLE_EQ(dm::rank_auc(pos, neg), 1.0);
}

TEST(RankAuc, AllTiedGivesHalf) {
  std::vector<double> pos = {0.5, 0.5};
  std::vector<double> neg = {0.5, 0.5};
  EXPECT_DOUBLE_EQ(dm::rank_auc(pos, neg), 0.5);
}

TEST(RankAuc, ThreeOfFourConcordant) {
  std::vector<double> pos = {0.9, 0.3};
  std::vector<double> neg = {0.5, 0.1};
  EXPECT_DOUBLE_EQ(dm::rank_auc(pos, neg), 0.75);
}

TEST(DiscriminatorAuc, SeparableWindowsScoreHigh) {
  driftctl::Rng rng = driftctl::make_rng(21, 0);
  Mat recent = gaussian_rows(rng, 64, 4, 5.0);
  Mat ref = gaussian_rows(rng, 64, 4);
  auto out = dm::discriminator_auc(recent, ref, 0.5, 99);
  EXPECT_FALSE(out.degenerate);
  EXPECT_GE(out.value, 0.9);
}

TEST(DiscriminatorAuc, NullConcentratesNearHalf) {
  driftctl::Rng rng = driftctl::make_rng(22, 0);
  double acc = 0.0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    Mat recent = gaussian_rows(rng, 256, 4);
    Mat ref = gaussian_rows(rng, 256, 4);
    acc += dm::discriminator_auc(recent, ref, 0.5, static_cast<std::uint64_t>(r)).value;
  }
  EXPECT_LT(std::abs(acc / reps - 0.5), 0.15);
}

TEST(DiscriminatorAuc, ThinClassIsDegenerate) {
  driftctl::Rng rng = driftctl::make_rng(23, 0);
  Mat recent = gaussian_rows(rng, 1, 4);
  Mat ref = gaussian_rows(rng, 8, 4);
  auto out = dm::discriminator_auc(recent, ref, 0.5, 0);
  EXPECT_TRUE(out.degenerate);
  EXPECT_DOUBLE_EQ(out.value, 0.5);
}

TEST(DiscriminatorAuc, DeterministicForFixedSeed) {
  driftctl::Rng rng = driftctl::make_rng(24, 0);
  Mat recent = gaussian_rows(rng, 32, 4, 0.3);
  Mat ref = gaussian_rows(rng, 32, 4);
  auto a = dm::discriminator_auc(recent, ref, 0.5, 7);
  auto b = dm::discriminator_auc(recent, ref, 0.5, 7);
  EXPECT_DOUBLE_EQ(a.value, b.value);
}

TEST(PredictiveEntropy, UniformBinary) {
  Vec p(2);
  p << 0.5, 0.5;
  EXPECT_NEAR(dm::predictive_entropy(p), std::log(2.0), kFpTol);
}

TEST(PredictiveEntropy, PointMassIsZero) {
  Vec p(2);
  p << 1.0, 0.0;
  EXPECT_DOUBLE_EQ(dm::predictive_entropy(p), 0.0);
}

TEST(PredictiveEntropy, HandEvaluatedTernary) {
  Vec p(3);
  p << 0.7, 0.2, 0.1;
  EXPECT_NEAR(dm::predictive_entropy(p), 0.801818552543337, kTightTol);
}

TEST(PredictiveEntropy, UniformMaximizes) {
  Vec u = Vec::Constant(4, 0.25);
  double hu = dm::predictive_entropy(u);
  Vec v(4);
  v << 0.25 + 0.01, 0.25 - 0.01, 0.25, 0.25;
  EXPECT_GT(hu, dm::predictive_entropy(v));
  Vec w(4);
  w << 0.4, 0.2, 0.2, 0.2;
  EXPECT_GT(hu, dm::predictive_entropy(w));
}

TEST(PredictiveEntropy, RejectsBadInput) {
  Vec neg(2);
  neg << 1.5, -0.5;
  EXPECT_THROW(dm::predictive_entropy(neg), driftctl::ValidationError);
  Vec off(2);
  off << 0.6, 0.6;
  EXPECT_THROW(dm::predictive_entropy(off), driftctl::ValidationError);
}

TEST(EntropyShift, SelfDifferenceIsZero) {
  Mat probs(3, 2);
  probs << 0.5, 0.5, 0.9, 0.1, 0.2, 0.8;
  double mean = 0.0;
  for (int i = 0; i < 3; ++i) mean += dm::predictive_entropy(probs.row(i).transpose());
  mean /= 3.0;
  EXPECT_DOUBLE_EQ(dm::entropy_shift(probs, mean), 0.0);
}

TEST(EntropyShift, ConfidentRecentAgainstUniformReference) {
  Mat probs(4, 2);
  for (int i = 0; i < 4; ++i) {
    probs(i, 0) = 1.0;
    probs(i, 1) = 0.0;
  }
  EXPECT_NEAR(dm::entropy_shift(probs, std::log(2.0)), -std::log(2.0), kFpTol);
}

TEST(EntropyShift, UniformRecentAgainstZeroReference) {
  Mat probs = Mat::Constant(5, 4, 0.25);
  EXPECT_NEAR(dm::entropy_shift(probs, 0.0), std::log(4.0), kFpTol);
}

TEST(StreamingEce, PerfectlyCalibratedBin) {
  std::vector<dm::LabeledPrediction> preds;
  for (int i = 0; i < 5; ++i) preds.push_back({0.8, i < 4});
  auto out = dm::streaming_ece(preds, 1);
  EXPECT_FALSE(out.degenerate);
  EXPECT_NEAR(out.value, 0.0, kFpTol);
}

TEST(StreamingEce, HandBinnedTwoBinExample) {
  std::vector<dm::LabeledPrediction> preds = {{0.9, true}, {0.8, false}, {0.3, false}};
  auto out = dm::streaming_ece(preds, 2);
  EXPECT_NEAR(out.value, 1.0 / 3.0, kTightTol);
}

TEST(StreamingEce, MaximalMiscalibration) {
  std::vector<dm::LabeledPrediction> preds = {{1.0, false}, {1.0, false}};
  EXPECT_DOUBLE_EQ(dm::streaming_ece(preds, 10).value, 1.0);
}

TEST(StreamingEce, EmptySetFlagsDegenerate) {
  std::vector<dm::LabeledPrediction> preds;
  auto out = dm::streaming_ece(preds, 10);
  EXPECT_TRUE(out.degenerate);
  EXPECT_DOUBLE_EQ(out.value, 0.0);
}

TEST(StreamingEce, PermutationInvariant) {
  driftctl::Rng rng = driftctl::make_rng(31, 0);
  std::vector<dm::LabeledPrediction> preds;
  for (int i = 0; i < 50; ++i)
    preds.push_back({driftctl::uniform01(rng), driftctl::uniform01(rng) < 0.7});
  auto base = dm::streaming_ece(preds, 10);
  std::vector<dm::LabeledPrediction> shuffled = preds;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[driftctl::uniform_below(rng, i)]);
  auto perm = dm::streaming_ece(shuffled, 10);
  EXPECT_NEAR(base.value, perm.value, kFpTol);
  EXPECT_GE(base.value, 0.0);
  EXPECT_LE(base.value, 1.0);
}

TEST(StreamingEce, TopConfidenceLandsInLastBin) {
  // Right-closed last bin: confidence 1.0 must not fall off the end.
  std::vector<dm::LabeledPrediction> preds = {{1.0, true}};
  EXPECT_DOUBLE_EQ(dm::streaming_ece(preds, 10).value, 0.0);
}

TEST(SliceMaxMmd2, ShiftedGroupDominates) {
  driftctl::Rng rng = driftctl::make_rng(41, 0);
  Mat recent(40, 2);
  Mat ref(40, 2);
  std::vector<int> rtags(40), ftags(40);
  for (int i = 0; i < 40; ++i) {
    int g = i % 2;
    rtags[static_cast<std::size_t>(i)] = g;
    ftags[static_cast<std::size_t>(i)] = g;
    for (int j = 0; j < 2; ++j) {
      ref(i, j) = driftctl::normal01(rng);
      recent(i, j) = driftctl::normal01(rng) + (g == 1 ? 3.0 : 0.0);
    }
  }
  auto out = dm::slice_max_mmd2(recent, rtags, ref, ftags, 2.0);
  EXPECT_FALSE(out.degenerate);

  // Brute-force the per-group statistics and check the max matches.
  auto pick = [](const Mat& src, const std::vector<int>& tags, int g) {
    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(tags.size()); ++i)
      if (tags[static_cast<std::size_t>(i)] == g) idx.push_back(i);
    Mat out_m(static_cast<Eigen::Index>(idx.size()), src.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
      out_m.row(static_cast<Eigen::Index>(i)) = src.row(idx[i]);
    return out_m;
  };
  double g0 = dm::mmd2_unbiased(pick(recent, rtags, 0), pick(ref, ftags, 0), 2.0);
  double g1 = dm::mmd2_unbiased(pick(recent, rtags, 1), pick(ref, ftags, 1), 2.0);
  EXPECT_DOUBLE_EQ(out.value, std::max(g0, g1));
  EXPECT_DOUBLE_EQ(out.value, g1);
  EXPECT_GT(g1, g0);
}

TEST(SliceMaxMmd2, NoQualifyingGroupFlagsDegenerate) {
  Mat recent = column({0.0, 1.0});
  Mat ref = column({0.0, 1.0});
  std::vector<int> rtags = {0, 1};
  std::vector<int> ftags = {2, 3};
  auto out = dm::slice_max_mmd2(recent, rtags, ref, ftags, 1.0);
  EXPECT_TRUE(out.degenerate);
  EXPECT_DOUBLE_EQ(out.value, 0.0);
}

TEST(SliceMaxMmd2, RejectsMissingTags) {
  Mat recent = column({0.0, 1.0});
  Mat ref = column({0.0, 1.0});
  std::vector<int> good = {0, 0};
  std::vector<int> bad = {0};
  EXPECT_THROW(dm::slice_max_mmd2(recent, bad, ref, good, 1.0), driftctl::ValidationError);
}

TEST(Standardize, CenteringAndUnitScale) {
  dm::ReferenceStats stats;
  stats.mu = {1.0, 2.0, 3.0, 4.0, 5.0};
  stats.sigma = {0.5, 1.0, 2.0, 4.0, 8.0};
  auto zero = dm::standardize(stats.mu, stats, 0.0);
  for (double v : zero) EXPECT_DOUBLE_EQ(v, 0.0);

  std::array<double, dm::kEvidenceDim> plus_one_sigma{};
  for (int j = 0; j < dm::kEvidenceDim; ++j)
    plus_one_sigma[static_cast<std::size_t>(j)] = stats.mu[static_cast<std::size_t>(j)] +
                                                  stats.sigma[static_cast<std::size_t>(j)];
  auto unit = dm::standardize(plus_one_sigma, stats, 0.0);
  for (double v : unit) EXPECT_NEAR(v, 1.0, kFpTol);
}

TEST(Standardize, ZeroSigmaStaysFinite) {
  dm::ReferenceStats stats;
  stats.mu = {0.0, 0.0, 0.0, 0.0, 0.0};
  stats.sigma = {0.0, 0.0, 0.0, 0.0, 0.0};
  auto out = dm::standardize({1.0, 1.0, 1.0, 1.0, 1.0}, stats, 1e-6);
  for (double v : out) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_DOUBLE_EQ(v, 1e6);
  }
}

TEST(Standardize, RoundTripRecoversRaw) {
  dm::ReferenceStats stats;
  stats.mu = {0.1, -0.2, 0.3, 0.0, 1.5};
  stats.sigma = {1.0, 2.0, 0.5, 3.0, 0.25};
  std::array<double, dm::kEvidenceDim> raw = {0.4, 0.1, -0.7, 2.0, 1.0};
  const double eps = 1e-6;
  auto z = dm::standardize(raw, stats, eps);
  for (int j = 0; j < dm::kEvidenceDim; ++j) {
    auto js = static_cast<std::size_t>(j);
    double back = z[js] * (stats.sigma[js] + eps) + stats.mu[js];
    EXPECT_NEAR(back, raw[js], 1e-9);
  }
}

TEST(EvidenceOrder, NamesMatchFixedLayout) {
  ASSERT_EQ(dm::kEvidenceDim, 5);
  EXPECT_STREQ(dm::kEvidenceNames[0], "mmd2");
  EXPECT_STREQ(dm::kEvidenceNames[1], "disc_auc");
  EXPECT_STREQ(dm::kEvidenceNames[2], "entropy_shift");
  EXPECT_STREQ(dm::kEvidenceNames[3], "ece_shift");
  EXPECT_STREQ(dm::kEvidenceNames[4], "slice_max_mmd2");
}
