// Posterior over drift types: a 4-state Markov filter whose emission term is
// a discriminative potential (multinomial logistic posterior raised to a
// temperature), with a diagonal-Gaussian likelihood as a configurable
// alternative. Fitting runs offline on labeled synthetic episodes.
#pragma once

#include "driftctl/common.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace driftctl::belief {

enum class DriftType : int { None = 0, Covariate = 1, Concept = 2, Subgroup = 3 };

inline constexpr int kNumDriftTypes = 4;

inline constexpr std::array<const char*, kNumDriftTypes> kDriftTypeNames = {
    "none", "covariate", "concept", "subgroup"};

using Belief = Eigen::Vector4d;
// Row d' holds P(D_t = d | D_{t-1} = d'), so rows sum to 1.
using TransitionMatrix = Eigen::Matrix4d;

inline Belief initial_belief() { return Belief(0.97, 0.01, 0.01, 0.01); }

inline void validate_belief(const Belief& b) {
  double sum = 0.0;
  for (int i = 0; i < kNumDriftTypes; ++i) {
    require(b(i) >= 0.0, "belief: negative probability");
    sum += b(i);
  }
  require(std::abs(sum - 1.0) <= 1e-9, "belief: probabilities must sum to 1");
}

inline void validate_transition(const TransitionMatrix& t) {
  for (int i = 0; i < kNumDriftTypes; ++i) {
    double row = 0.0;
    for (int j = 0; j < kNumDriftTypes; ++j) {
      require(t(i, j) >= 0.0, "transition: negative entry");
      row += t(i, j);
    }
    require(std::abs(row - 1.0) <= 1e-9, "transition: rows must sum to 1");
  }
}

struct EmissionModel {
  Mat weights;  // one row per drift type
  Vec biases;
  double beta = 1.0;
  bool logistic_fitted = false;
  bool has_gaussian = false;
  Mat gauss_mean;
  Mat gauss_var;
  bool variance_floored = false;
};

struct Episode {
  Mat evidence;  // rows are per-step evidence vectors
  std::vector<DriftType> labels;
};

using EpisodeDataset = std::vector<Episode>;

inline Belief predict_step(const Belief& prev, const TransitionMatrix& t) {
  validate_belief(prev);
  validate_transition(t);
  return t.transpose() * prev;
}

inline Eigen::Vector4d emission_potential(const Vec& z, const EmissionModel& model) {
  require(model.logistic_fitted, "emission_potential: model not fitted");
  require(model.beta > 0.0, "emission_potential: beta must be positive");
  require(z.size() == model.weights.cols(), "emission_potential: evidence dimension mismatch");
  Vec scores = model.weights * z + model.biases;
  Vec p = softmax(scores);
  Eigen::Vector4d psi;
  for (int d = 0; d < kNumDriftTypes; ++d)
    psi(d) = model.beta == 1.0 ? p(d) : std::pow(p(d), model.beta);
  return psi;
}

// Diagonal-Gaussian likelihood per type, evaluated in log space for stability.
inline Eigen::Vector4d gaussian_likelihood(const Vec& z, const EmissionModel& model) {
  require(model.has_gaussian, "gaussian_likelihood: no Gaussian component fitted");
  require(z.size() == model.gauss_mean.cols(), "gaussian_likelihood: dimension mismatch");
  Eigen::Vector4d log_lik;
  const double log2pi = std::log(2.0 * std::numbers::pi);
  for (int d = 0; d < kNumDriftTypes; ++d) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
      double var = model.gauss_var(d, j);
      require(var > 0.0, "gaussian_likelihood: nonpositive variance");
      double diff = z(j) - model.gauss_mean(d, j);
      acc += -0.5 * (log2pi + std::log(var) + diff * diff / var);
    }
    log_lik(d) = acc;
  }
  return (log_lik.array() - log_lik.maxCoeff()).exp();
}

struct BeliefUpdate {
  Belief belief = Belief::Constant(0.25);
  bool degenerate = false;
};

// One filter step with an externally supplied emission potential. Any shared
// positive scaling of psi cancels in the normalization.
inline BeliefUpdate filter_step(const Belief& prev, const Eigen::Vector4d& psi,
                                const TransitionMatrix& t) {
  for (int d = 0; d < kNumDriftTypes; ++d)
    require(psi(d) >= 0.0 && std::isfinite(psi(d)), "filter_step: invalid potential");
  Belief predicted = predict_step(prev, t);
  Eigen::Vector4d unnorm = psi.cwiseProduct(predicted);
  double sum = unnorm.sum();
  if (!(sum > 0.0) || !std::isfinite(sum)) return {Belief::Constant(0.25), true};
  return {unnorm / sum, false};
}

inline BeliefUpdate update(const Belief& prev, const Vec& z, const TransitionMatrix& t,
                           const EmissionModel& model) {
  return filter_step(prev, emission_potential(z, model), t);
}

struct EmissionObjective {
  double nll = 0.0;  // L2-penalized mean negative log-likelihood
  Mat grad_weights;
  Vec grad_biases;
};

inline EmissionObjective emission_objective(const Mat& z, std::span<const DriftType> labels,
                                            const Mat& weights, const Vec& biases, double l2) {
  const auto n = z.rows();
  require(n >= 1, "emission_objective: empty data");
  require(static_cast<std::size_t>(n) == labels.size(), "emission_objective: label count mismatch");
  require(weights.rows() == kNumDriftTypes && biases.size() == kNumDriftTypes,
          "emission_objective: bad parameter shape");
  require(weights.cols() == z.cols(), "emission_objective: dimension mismatch");
  require(l2 >= 0.0, "emission_objective: negative penalty");

  EmissionObjective out;
  out.grad_weights = Mat::Zero(kNumDriftTypes, z.cols());
  out.grad_biases = Vec::Zero(kNumDriftTypes);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec scores = weights * z.row(i).transpose() + biases;
    Vec p = softmax(scores);
    int y = static_cast<int>(labels[static_cast<std::size_t>(i)]);
    out.nll -= std::log(std::max(p(y), 1e-300));
    for (int d = 0; d < kNumDriftTypes; ++d) {
      double coeff = p(d) - (d == y ? 1.0 : 0.0);
      out.grad_weights.row(d) += coeff * z.row(i);
      out.grad_biases(d) += coeff;
    }
  }
  out.nll /= static_cast<double>(n);
  out.grad_weights /= static_cast<double>(n);
  out.grad_biases /= static_cast<double>(n);
  out.nll += 0.5 * l2 * weights.squaredNorm();
  out.grad_weights += l2 * weights;
  return out;
}

namespace detail {

inline void flatten(const EpisodeDataset& data, Mat& z, std::vector<DriftType>& labels) {
  Eigen::Index total = 0;
  Eigen::Index dim = -1;
  for (const auto& ep : data) {
    require(ep.evidence.rows() >= 1, "episode dataset: empty episode");
    require(ep.evidence.rows() == static_cast<Eigen::Index>(ep.labels.size()),
            "episode dataset: label count mismatch");
    require(dim < 0 || ep.evidence.cols() == dim, "episode dataset: dimension mismatch");
    dim = ep.evidence.cols();
    total += ep.evidence.rows();
  }
  require(total >= 1, "episode dataset: no samples");
  z.resize(total, dim);
  labels.clear();
  labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index r = 0;
  for (const auto& ep : data) {
    z.middleRows(r, ep.evidence.rows()) = ep.evidence;
    labels.insert(labels.end(), ep.labels.begin(), ep.labels.end());
    r += ep.evidence.rows();
  }
}

}  // namespace detail

// Multinomial logistic fit by full-batch gradient descent from zero init;
// deterministic, so the seed is accepted for interface stability only.
inline EmissionModel fit_emission(const EpisodeDataset& data, double l2 = 1e-3, int iters = 500,
                                  std::uint64_t seed = 0) {
  (void)seed;
  require(iters >= 1, "fit_emission: need at least one iteration");
  Mat z;
  std::vector<DriftType> labels;
  detail::flatten(data, z, labels);
  std::array<bool, kNumDriftTypes> seen{};
  for (auto y : labels) seen[static_cast<std::size_t>(static_cast<int>(y))] = true;
  int distinct = 0;
  for (bool s : seen) distinct += s ? 1 : 0;
  require(distinct >= 2, "fit_emission: need at least two distinct labels");

  EmissionModel model;
  model.weights = Mat::Zero(kNumDriftTypes, z.cols());
  model.biases = Vec::Zero(kNumDriftTypes);
  const double lr = 0.5;
  for (int it = 0; it < iters; ++it) {
    auto obj = emission_objective(z, labels, model.weights, model.biases, l2);
    model.weights -= lr * obj.grad_weights;
    model.biases -= lr * obj.grad_biases;
  }
  model.logistic_fitted = true;
  return model;
}

// Count estimator over consecutive within-episode pairs; only rows with zero
// observed outgoing transitions get add-one smoothing (they become uniform).
inline TransitionMatrix fit_transitions(const EpisodeDataset& data) {
  Eigen::Matrix4d counts = Eigen::Matrix4d::Zero();
  bool any_pair = false;
  for (const auto& ep : data) {
    require(ep.evidence.rows() == static_cast<Eigen::Index>(ep.labels.size()),
            "episode dataset: label count mismatch");
    for (std::size_t i = 1; i < ep.labels.size(); ++i) {
      counts(static_cast<int>(ep.labels[i - 1]), static_cast<int>(ep.labels[i])) += 1.0;
      any_pair = true;
    }
  }
  require(any_pair, "fit_transitions: need at least one episode with two steps");
  TransitionMatrix t;
  for (int d = 0; d < kNumDriftTypes; ++d) {
    double row_total = counts.row(d).sum();
    if (row_total > 0.0) {
      t.row(d) = counts.row(d) / row_total;
    } else {
      t.row(d).setConstant(1.0 / kNumDriftTypes);
    }
  }
  return t;
}

// Per-type ML mean and biased diagonal variance, floored at 1e-6. Types with
// fewer than two samples keep the floor and raise the flag instead of failing.
inline EmissionModel fit_gaussian_emission(const EpisodeDataset& data) {
  Mat z;
  std::vector<DriftType> labels;
  detail::flatten(data, z, labels);
  const double floor = 1e-6;
  EmissionModel model;
  model.has_gaussian = true;
  model.gauss_mean = Mat::Zero(kNumDriftTypes, z.cols());
  model.gauss_var = Mat::Constant(kNumDriftTypes, z.cols(), floor);
  for (int d = 0; d < kNumDriftTypes; ++d) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (static_cast<int>(labels[i]) == d) idx.push_back(static_cast<Eigen::Index>(i));
    if (idx.size() < 2) {
      model.variance_floored = true;
      if (idx.size() == 1) model.gauss_mean.row(d) = z.row(idx[0]);
      continue;
    }
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(z.cols());
    for (auto i : idx) mean += z.row(i);
    mean /= static_cast<double>(idx.size());
    Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(z.cols());
    for (auto i : idx) var += (z.row(i) - mean).array().square().matrix();
    var /= static_cast<double>(idx.size());
    model.gauss_mean.row(d) = mean;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      if (var(j) < floor) {
        var(j) = floor;
        model.variance_floored = true;
      }
    }
    model.gauss_var.row(d) = var;
  }
  return model;
}

// Flat text serialization of the fitted calibration artifacts (emission model
// plus transition matrix). Format is versioned and line-oriented.
inline void save_model(std::ostream& os, const EmissionModel& model, const TransitionMatrix& t) {
  Eigen::Index dim = model.logistic_fitted ? model.weights.cols()
                     : model.has_gaussian  ? model.gauss_mean.cols()
                                           : 0;
  require(dim >= 1, "save_model: model has no fitted component");
  os << std::setprecision(17);
  os << "driftctl-belief v1\n";
  os << "types";
  for (const char* name : kDriftTypeNames) os << ' ' << name;
  os << '\n';
  os << "dim " << dim << '\n';
  os << "beta " << model.beta << '\n';
  os << "logistic " << (model.logistic_fitted ? 1 : 0) << '\n';
  if (model.logistic_fitted) {
    for (int d = 0; d < kNumDriftTypes; ++d) {
      os << "w";
      for (Eigen::Index j = 0; j < model.weights.cols(); ++j) os << ' ' << model.weights(d, j);
      os << '\n';
    }
    os << "b";
    for (int d = 0; d < kNumDriftTypes; ++d) os << ' ' << model.biases(d);
    os << '\n';
  }
  os << "gaussian " << (model.has_gaussian ? 1 : 0) << '\n';
  if (model.has_gaussian) {
    for (int d = 0; d < kNumDriftTypes; ++d) {
      os << "mu";
      for (Eigen::Index j = 0; j < model.gauss_mean.cols(); ++j) os << ' ' << model.gauss_mean(d, j);
      os << '\n';
    }
    for (int d = 0; d < kNumDriftTypes; ++d) {
      os << "var";
      for (Eigen::Index j = 0; j < model.gauss_var.cols(); ++j) os << ' ' << model.gauss_var(d, j);
      os << '\n';
    }
  }
  for (int d = 0; d < kNumDriftTypes; ++d) {
    os << "t";
    for (int j = 0; j < kNumDriftTypes; ++j) os << ' ' << t(d, j);
    os << '\n';
  }
  if (!os) throw IoError("save_model: write failed");
}

inline std::pair<EmissionModel, TransitionMatrix> load_model(std::istream& is) {
  auto fail = [](const std::string& what) -> void { throw IoError("load_model: " + what); };
  std::string line;
  auto next_line = [&](const char* tag) {
    if (!std::getline(is, line)) fail(std::string("missing ") + tag);
    return std::istringstream(line);
  };
  auto expect_tag = [&](std::istringstream& ss, const std::string& want) {
    std::string tag;
    if (!(ss >> tag) || tag != want) fail("expected tag '" + want + "'");
  };

  {
    auto ss = next_line("header");
    std::string magic, version;
    if (!(ss >> magic >> version) || magic != "driftctl-belief" || version != "v1")
      fail("bad header");
  }
  {
    auto ss = next_line("types");
    expect_tag(ss, "types");
    for (const char* name : kDriftTypeNames) {
      std::string got;
      if (!(ss >> got) || got != name) fail("type order mismatch");
    }
  }
  Eigen::Index dim = 0;
  {
    auto ss = next_line("dim");
    expect_tag(ss, "dim");
    if (!(ss >> dim) || dim < 1) fail("bad dim");
  }
  EmissionModel model;
  {
    auto ss = next_line("beta");
    expect_tag(ss, "beta");
    if (!(ss >> model.beta) || !(model.beta > 0.0)) fail("bad beta");
  }
  int logistic = 0;
  {
    auto ss = next_line("logistic");
    expect_tag(ss, "logistic");
    if (!(ss >> logistic)) fail("bad logistic flag");
  }
  if (logistic) {
    model.weights = Mat::Zero(kNumDriftTypes, dim);
    model.biases = Vec::Zero(kNumDriftTypes);
    for (int d = 0; d < kNumDriftTypes; ++d) {
      auto ss = next_line("weights");
      expect_tag(ss, "w");
      for (Eigen::Index j = 0; j < dim; ++j)
        if (!(ss >> model.weights(d, j))) fail("bad weight row");
    }
    auto ss = next_line("biases");
    expect_tag(ss, "b");
    for (int d = 0; d < kNumDriftTypes; ++d)
      if (!(ss >> model.biases(d))) fail("bad bias row");
    model.logistic_fitted = true;
  }
  int gaussian = 0;
  {
    auto ss = next_line("gaussian");
    expect_tag(ss, "gaussian");
    if (!(ss >> gaussian)) fail("bad gaussian flag");
  }
  if (gaussian) {
    model.gauss_mean = Mat::Zero(kNumDriftTypes, dim);
    model.gauss_var = Mat::Zero(kNumDriftTypes, dim);
    for (int d = 0; d < kNumDriftTypes; ++d) {
      auto ss = next_line("gauss mean");
      expect_tag(ss, "mu");
      for (Eigen::Index j = 0; j < dim; ++j)
        if (!(ss >> model.gauss_mean(d, j))) fail("bad gauss mean");
    }
    for (int d = 0; d < kNumDriftTypes; ++d) {
      auto ss = next_line("gauss var");
      expect_tag(ss, "var");
      for (Eigen::Index j = 0; j < dim; ++j)
        if (!(ss >> model.gauss_var(d, j)) || !(model.gauss_var(d, j) > 0.0))
          fail("bad gauss var");
    }
    model.has_gaussian = true;
  }
  TransitionMatrix t;
  for (int d = 0; d < kNumDriftTypes; ++d) {
    auto ss = next_line("transition");
    expect_tag(ss, "t");
    for (int j = 0; j < kNumDriftTypes; ++j)
      if (!(ss >> t(d, j))) fail("bad transition row");
  }
  validate_transition(t);
  return {std::move(model), t};
}

}  // namespace driftctl::belief
