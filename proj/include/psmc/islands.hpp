#ifndef PSMC_ISLANDS_HPP
#define PSMC_ISLANDS_HPP

#include "psmc/core.hpp"
#include "psmc/mcmc.hpp"
#include "psmc/parallel.hpp"
#include "psmc/smc.hpp"

#include <variant>

/**
 * \file
 * \brief P communication-free islands and their evidence-weighted combination
 * φ̂ = Σ_p ω_p π^{N,p}(φ), ω_p = Z^{N,p} / Σ_q Z^{N,q}.
 *
 * Islands share only the immutable target. MCMC islands report log Z = 0, so
 * the same combination code degenerates to equal weights for them.
 */

namespace psmc {

enum class IslandMethod { smc, mcmc };

using IslandConfig = std::variant<SmcConfig, McmcConfig>;

struct IslandEnsemble {
  std::vector<IslandResult> results;
  IslandMethod method = IslandMethod::smc;
  std::vector<std::uint64_t> seeds;

  std::size_t size() const noexcept { return results.size(); }

  /// Σ_p of per-island tallies (total serial cost).
  EvalTally serial_epochs() const {
    EvalTally t;
    for (const auto& r : results) t += r.epochs;
    return t;
  }
  /// Largest per-island total (wall-clock cost with one worker per island).
  std::uint64_t parallel_epochs() const {
    std::uint64_t m = 0;
    for (const auto& r : results) m = std::max(m, r.epochs.total());
    return m;
  }
};

/// Raised when an island fails; carries the island index.
class IslandError : public std::runtime_error {
public:
  IslandError(std::size_t island, const std::string& what)
      : std::runtime_error("island " + std::to_string(island) + ": " + what), island_(island) {}
  std::size_t island() const noexcept { return island_; }

private:
  std::size_t island_;
};

inline std::uint64_t island_seed(std::uint64_t master_seed, std::size_t island) {
  return derive_seed(master_seed, {static_cast<std::uint64_t>(island)});
}

/// Run a single island with the given seed.
template <Target T>
IslandResult run_island(const IslandConfig& cfg, const T& target, std::uint64_t seed) {
  if (const auto* smc = std::get_if<SmcConfig>(&cfg)) return run_smc(*smc, target, seed);

  const auto& mcmc = std::get<McmcConfig>(cfg);
  IslandResult out;
  out.seed = seed;
  out.schedule = {1.0};
  if (mcmc.mode == ChainMode::serial) {
    Rng rng(seed);
    auto run = run_chain_serial(mcmc, target, rng);
    out.samples = std::move(run.samples);
    out.epochs = run.epochs;
    out.kernel_stats = run.kernel_stats;
  } else {
    std::vector<std::uint64_t> seeds(mcmc.n_samples);
    for (std::size_t i = 0; i < seeds.size(); ++i) seeds[i] = derive_seed(seed, {static_cast<std::uint64_t>(i)});
    auto run = run_chains_parallel(mcmc, target, seeds);
    out.samples = std::move(run.samples);
    out.epochs = run.total_epochs();
    out.kernel_stats = run.kernel_stats;
  }
  return out;
}

/// Run P islands on up to `parallelism` threads. Island p uses
/// island_seed(master_seed, p); the ensemble does not depend on `parallelism`.
template <Target T>
IslandEnsemble run_islands(std::size_t P, const IslandConfig& cfg, const T& target, std::uint64_t master_seed,
                           std::size_t parallelism = 1) {
  if (P < 1) throw std::invalid_argument("run_islands: need at least one island");
  IslandEnsemble ens;
  ens.method = std::holds_alternative<SmcConfig>(cfg) ? IslandMethod::smc : IslandMethod::mcmc;
  ens.seeds.resize(P);
  ens.results.resize(P);
  for (std::size_t p = 0; p < P; ++p) ens.seeds[p] = island_seed(master_seed, p);
  parallel_for(P, parallelism, [&](std::size_t p) {
    try {
      ens.results[p] = run_island(cfg, target, ens.seeds[p]);
    } catch (const std::exception& e) {
      throw IslandError(p, e.what());
    }
  });
  return ens;
}

/// Softmax of the island log-evidence totals, stabilized by their maximum.
/// Islands at −∞ receive weight 0.
inline std::vector<double> island_weights(std::span<const double> logz_totals) {
  if (logz_totals.empty()) throw std::invalid_argument("island_weights: empty ensemble");
  try {
    return normalize_log_weights(logz_totals);
  } catch (const DegeneratePopulationError&) {
    throw DegeneratePopulationError("island_weights: every island has zero evidence");
  }
}

inline std::vector<double> island_weights(const IslandEnsemble& ens) {
  std::vector<double> totals;
  totals.reserve(ens.size());
  for (const auto& r : ens.results) totals.push_back(ens.method == IslandMethod::mcmc ? 0.0 : r.logz.total());
  return island_weights(totals);
}

/// log((1/P) Σ_p Z^{N,p}), the ensemble evidence estimate.
inline double ensemble_log_evidence(const IslandEnsemble& ens) {
  std::vector<double> totals;
  for (const auto& r : ens.results) totals.push_back(r.logz.total());
  return log_sum_exp(totals) - std::log(static_cast<double>(totals.size()));
}

/// Mean of φ over one island's samples, honouring per-sample weights if present.
template <class Phi>
Eigen::VectorXd island_mean(const IslandResult& r, Phi&& phi) {
  if (r.samples.empty()) throw std::invalid_argument("island_mean: island has no samples");
  Eigen::VectorXd acc;
  if (r.log_weights.empty()) {
    for (const auto& s : r.samples) {
      Eigen::VectorXd v = phi(s);
      if (acc.size() == 0) acc = Eigen::VectorXd::Zero(v.size());
      acc += v;
    }
    return acc / static_cast<double>(r.samples.size());
  }
  const auto w = normalize_log_weights(r.log_weights);
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    Eigen::VectorXd v = phi(r.samples[i]);
    if (acc.size() == 0) acc = Eigen::VectorXd::Zero(v.size());
    acc += w[i] * v;
  }
  return acc;
}

/// Σ_p ω_p · π^{N,p}(φ).
template <class Phi>
Eigen::VectorXd combine_weighted(const IslandEnsemble& ens, Phi&& phi) {
  const auto w = island_weights(ens);
  Eigen::VectorXd acc;
  for (std::size_t p = 0; p < ens.size(); ++p) {
    if (w[p] == 0.0) continue;
    Eigen::VectorXd m = island_mean(ens.results[p], phi);
    if (acc.size() == 0) acc = Eigen::VectorXd::Zero(m.size());
    acc += w[p] * m;
  }
  return acc;
}

/// Plain average of island means, ignoring the evidence.
template <class Phi>
Eigen::VectorXd combine_unweighted(const IslandEnsemble& ens, Phi&& phi) {
  if (ens.size() == 0) throw std::invalid_argument("combine_unweighted: empty ensemble");
  Eigen::VectorXd acc;
  for (const auto& r : ens.results) {
    Eigen::VectorXd m = island_mean(r, phi);
    if (acc.size() == 0) acc = Eigen::VectorXd::Zero(m.size());
    acc += m;
  }
  return acc / static_cast<double>(ens.size());
}

/// φ(θ) = θ.
inline const auto identity_phi = [](const ParamVector& theta) -> Eigen::VectorXd { return theta; };

}  // namespace psmc

#endif
