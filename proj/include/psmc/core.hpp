#ifndef PSMC_CORE_HPP
#define PSMC_CORE_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace psmc {

/// A point in parameter space. Length always matches the target dimension.
using ParamVector = Eigen::VectorXd;

/// Random engine used everywhere. Streams are derived from seeds with
/// `derive_seed` so that every particle/chain/island owns its own stream.
using Rng = std::mt19937_64;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

// ---------------------------------------------------------------------------
// Errors

/// All weights of a particle population (or island ensemble) are zero.
class DegeneratePopulationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A gradient or density came out non-finite where a finite value is required.
class NumericalDomainError : public std::domain_error {
public:
  NumericalDomainError(const std::string& what, ParamVector theta, double lambda)
      : std::domain_error(what), theta_(std::move(theta)), lambda_(lambda) {}

  const ParamVector& theta() const noexcept { return theta_; }
  double lambda() const noexcept { return lambda_; }

private:
  ParamVector theta_;
  double lambda_;
};

// ---------------------------------------------------------------------------
// Evaluation accounting

/// Snapshot of likelihood and gradient evaluation counts.
struct EvalTally {
  std::uint64_t likelihood = 0;
  std::uint64_t gradient = 0;

  /// One "epoch" is one likelihood or one gradient evaluation.
  std::uint64_t total() const noexcept { return likelihood + gradient; }

  EvalTally& operator+=(const EvalTally& o) noexcept {
    likelihood += o.likelihood;
    gradient += o.gradient;
    return *this;
  }
  friend EvalTally operator+(EvalTally a, const EvalTally& b) noexcept { return a += b; }
  friend bool operator==(const EvalTally&, const EvalTally&) = default;
};

/// Monotone evaluation counter. Increments are atomic so one counter can be
/// shared by concurrent mutation workers.
class EvalCounter {
public:
  EvalCounter() = default;
  EvalCounter(const EvalCounter&) = delete;
  EvalCounter& operator=(const EvalCounter&) = delete;

  void add_likelihood(std::uint64_t n = 1) noexcept {
    likelihood_.fetch_add(n, std::memory_order_relaxed);
  }
  void add_gradient(std::uint64_t n = 1) noexcept {
    gradient_.fetch_add(n, std::memory_order_relaxed);
  }
  void merge(const EvalTally& t) noexcept {
    add_likelihood(t.likelihood);
    add_gradient(t.gradient);
  }

  EvalTally snapshot() const noexcept {
    return {likelihood_.load(std::memory_order_relaxed),
            gradient_.load(std::memory_order_relaxed)};
  }

private:
  std::atomic<std::uint64_t> likelihood_{0};
  std::atomic<std::uint64_t> gradient_{0};
};

// ---------------------------------------------------------------------------
// Seeds

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Hash-split a base seed by an ordered list of keys. Stable across versions:
/// island p of master seed s always receives derive_seed(s, {p}).
constexpr std::uint64_t derive_seed(std::uint64_t base,
                                    std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = mix64(base);
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline ParamVector standard_normal_vector(Eigen::Index d, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamVector z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = normal(rng);
  return z;
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// ---------------------------------------------------------------------------
// Log-domain helpers

/// λ·ℓ with the convention 0·(−∞) = 0, so a zero temperature increment never
/// produces NaN for particles with vanishing likelihood.
constexpr double tempered(double lambda, double loglik) noexcept {
  return lambda == 0.0 ? 0.0 : lambda * loglik;
}

/// Largest finite-or-infinite entry; −∞ for an all −∞ (or empty) input.
inline double max_log(std::span<const double> xs) noexcept {
  double m = kNegInf;
  for (double x : xs)
    if (x > m) m = x;
  return m;
}

/// log Σ exp(x_k), stabilized by the maximum. Returns −∞ when every entry is −∞.
inline double log_sum_exp(std::span<const double> xs) noexcept {
  const double m = max_log(xs);
  if (m == kNegInf) return kNegInf;
  if (m == std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

/// Normalized weights exp(x_k − logsumexp x). Throws when all weights vanish.
inline std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  const double lse = log_sum_exp(log_weights);
  if (!(lse > kNegInf) || !std::isfinite(lse))
    throw DegeneratePopulationError("log weights cannot be normalized (all -inf or non-finite)");
  std::vector<double> w(log_weights.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::exp(log_weights[k] - lse);
  return w;
}

inline void require_dimension(const ParamVector& theta, Eigen::Index d, const char* where) {
  if (theta.size() != d) {
    std::ostringstream msg;
    msg << where << ": parameter has dimension " << theta.size() << ", target expects " << d;
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace psmc

#endif
