#ifndef PSMC_DIAGNOSTICS_HPP
#define PSMC_DIAGNOSTICS_HPP

#include "psmc/core.hpp"
#include "psmc/smc.hpp"

#include <optional>

namespace psmc {

/// Integrated autocorrelation time 1 + 2 Σ_s ρ̂_s. The sum is truncated with
/// Geyer's initial positive sequence: pairs Γ_k = ρ̂_{2k} + ρ̂_{2k+1} are added
/// until the first negative pair (or max_lag). Result is at least 1.
inline double iact(std::span<const double> series, std::size_t max_lag) {
  const std::size_t n = series.size();
  if (n < 2) throw std::invalid_argument("iact: series needs at least two values");
  double mean = 0.0;
  for (double x : series) mean += x;
  mean /= static_cast<double>(n);
  std::vector<double> c(n);
  for (std::size_t t = 0; t < n; ++t) c[t] = series[t] - mean;

  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t t = 0; t + lag < n; ++t) s += c[t] * c[t + lag];
    return s / static_cast<double>(n);
  };
  const double gamma0 = autocov(0);
  if (!(gamma0 > 0.0)) throw std::domain_error("iact: series has zero variance");

  max_lag = std::min(max_lag, n - 1);
  // τ = −1 + 2 Σ_k Γ_k with Γ_0 = 1 + ρ̂_1.
  double tau = -1.0;
  for (std::size_t k = 0; 2 * k <= max_lag; ++k) {
    const double r0 = autocov(2 * k) / gamma0;
    const double r1 = 2 * k + 1 <= max_lag ? autocov(2 * k + 1) / gamma0 : 0.0;
    const double pair = r0 + r1;
    if (pair < 0.0) break;
    tau += 2.0 * pair;
  }
  return std::max(tau, 1.0);
}

struct MseSummary {
  double mse = 0.0;
  double se = 0.0;  ///< √((1/R) Σ_r (SE_r − MSE)²) / √R
};

/// Squared error per realization is the mean over coordinates of
/// (estimate − truth)²; returns their mean and its standard error.
inline MseSummary mse_and_se(std::span<const Eigen::VectorXd> estimates, const Eigen::VectorXd& truth) {
  const std::size_t R = estimates.size();
  if (R < 2) throw std::invalid_argument("mse_and_se: need at least two realizations");
  std::vector<double> sq(R);
  for (std::size_t r = 0; r < R; ++r) {
    if (estimates[r].size() != truth.size()) throw std::invalid_argument("mse_and_se: dimension mismatch");
    sq[r] = (estimates[r] - truth).squaredNorm() / static_cast<double>(truth.size());
  }
  MseSummary out;
  for (double s : sq) out.mse += s;
  out.mse /= static_cast<double>(R);
  double dev = 0.0;
  for (double s : sq) dev += (s - out.mse) * (s - out.mse);
  out.se = std::sqrt(dev / static_cast<double>(R)) / std::sqrt(static_cast<double>(R));
  return out;
}

/// Coordinate-wise (weighted) mean. Weights, when given, are normalized here.
inline ParamVector posterior_mean(std::span<const ParamVector> samples,
                                  std::optional<std::span<const double>> weights = std::nullopt) {
  if (samples.empty()) throw std::invalid_argument("posterior_mean: no samples");
  ParamVector acc = ParamVector::Zero(samples.front().size());
  if (!weights) {
    for (const auto& s : samples) acc += s;
    return acc / static_cast<double>(samples.size());
  }
  if (weights->size() != samples.size()) throw std::invalid_argument("posterior_mean: weight count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    acc += (*weights)[i] * samples[i];
    total += (*weights)[i];
  }
  if (!(total > 0.0)) throw std::invalid_argument("posterior_mean: weights must have positive sum");
  return acc / total;
}

/// Sum over coordinates of the across-realization sample variance.
inline double empirical_variance(std::span<const Eigen::VectorXd> estimates) {
  if (estimates.size() < 2) throw std::invalid_argument("empirical_variance: need at least two realizations");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(estimates.front().size());
  for (const auto& e : estimates) mean += e;
  mean /= static_cast<double>(estimates.size());
  double v = 0.0;
  for (const auto& e : estimates) v += (e - mean).squaredNorm();
  return v / static_cast<double>(estimates.size() - 1);
}

}  // namespace psmc

#endif
