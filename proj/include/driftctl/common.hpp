// Shared numeric and utility primitives: validation errors, a reproducible
// RNG layer (distribution helpers are hand-rolled so streams are identical
// across standard libraries), and small softmax/log-sum-exp helpers.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace driftctl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Raised on malformed arguments or config values. CLI maps this to exit 1.
class ValidationError : public std::runtime_error {
public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Raised on file read/write problems. CLI maps this to exit 2.
class IoError : public std::runtime_error {
public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent substream seeded from (base, stream): different stream ids give
// statistically unrelated generators, and the mapping is stable across runs.
inline Rng make_rng(std::uint64_t base, std::uint64_t stream) {
  return Rng(splitmix64(splitmix64(base) ^ splitmix64(stream * 0x9e3779b97f4a7c15ULL + 1)));
}

// Uniform on [0, 1) with exactly 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n). Multiply-shift map; bias is < 2^-64 per draw.
inline std::int64_t uniform_below(Rng& rng, std::int64_t n) {
  require(n > 0, "uniform_below: n must be positive");
  return static_cast<std::int64_t>(
      (static_cast<unsigned __int128>(rng()) * static_cast<unsigned __int128>(n)) >> 64);
}

// Standard normal via Box-Muller (one value per call; cos branch only).
inline double normal01(Rng& rng) {
  double u1 = 1.0 - uniform01(rng);  // (0, 1]
  double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

inline double logsumexp(const Vec& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

inline Vec softmax(const Vec& logits) {
  Vec out = (logits.array() - logits.maxCoeff()).exp();
  out /= out.sum();
  return out;
}

// Fisher-Yates partial shuffle: writes a uniform draw of k distinct values
// from {0, ..., n-1} into out (order random).
inline void sample_without_replacement(Rng& rng, std::int64_t n, std::int64_t k,
                                       std::vector<std::int64_t>& out) {
  require(k >= 0 && k <= n, "sample_without_replacement: need 0 <= k <= n");
  std::vector<std::int64_t> pool(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
  out.clear();
  out.reserve(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < k; ++i) {
    std::int64_t j = i + uniform_below(rng, n - i);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    out.push_back(pool[static_cast<std::size_t>(i)]);
  }
}

}  // namespace driftctl
