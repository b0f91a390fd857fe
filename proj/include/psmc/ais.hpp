#ifndef PSMC_AIS_HPP
#define PSMC_AIS_HPP

#include "psmc/core.hpp"
#include "psmc/kernels.hpp"
#include "psmc/parallel.hpp"
#include "psmc/targets.hpp"

#include <optional>

namespace psmc {

/// Annealed importance sampling: every sample anneals through a fixed
/// schedule on its own, accumulating log w += (λ_j − λ_{j−1})·ℓ(θ_{j−1})
/// before M kernel steps at λ_j. No resampling.
struct AisConfig {
  std::size_t n_samples = 64;
  std::vector<double> schedule;  ///< 0 = λ₀ < … < λ_J = 1
  KernelConfig kernel = PcnConfig{};
  std::size_t mutation_steps = 1;
  /// Per-sample Robbins–Monro step-size update after every kernel step, driven
  /// by that sample's own accept indicator; the gain sequence restarts at each
  /// temperature. There is no population to scale from, so the update has to
  /// be frequent enough to follow the annealing.
  bool adapt_step_size = true;
  std::size_t workers = 1;
};

struct WeightedSample {
  ParamVector theta;
  double log_weight = 0.0;
};

struct AisResult {
  std::vector<WeightedSample> samples;
  EvalTally epochs;
  KernelStats kernel_stats;
};

class AisSampleError : public std::runtime_error {
public:
  AisSampleError(std::size_t index, const std::string& what)
      : std::runtime_error("ais sample " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

inline void validate_schedule(std::span<const double> s) {
  if (s.size() < 2 || s.front() != 0.0 || s.back() != 1.0)
    throw std::invalid_argument("schedule must start at 0 and end at 1");
  for (std::size_t j = 1; j < s.size(); ++j)
    if (!(s[j] > s[j - 1])) throw std::invalid_argument("schedule must be strictly increasing");
}

/// 40 temperatures: 4 linear on [0, 0.001], 7 geometric on (0.001, 0.01],
/// 29 geometric on (0.01, 1].
inline std::vector<double> make_neal_schedule() {
  std::vector<double> s;
  s.reserve(40);
  for (int i = 0; i < 4; ++i) s.push_back(0.001 * i / 3.0);
  for (int i = 1; i <= 7; ++i) s.push_back(0.001 * std::pow(10.0, i / 7.0));
  for (int i = 1; i <= 29; ++i) s.push_back(0.01 * std::pow(100.0, i / 29.0));
  s[10] = 0.01;
  s.back() = 1.0;
  return s;
}

template <Target T>
AisResult run_ais(const AisConfig& cfg, const T& target, std::uint64_t seed) {
  validate_schedule(cfg.schedule);
  validate(cfg.kernel);
  if (cfg.n_samples < 1) throw std::invalid_argument("AisConfig: n_samples must be >= 1");
  const bool with_gradient = uses_gradient(cfg.kernel);
  const double step_max = max_step_size_of(cfg.kernel);
  const double accept_target = target_accept_of(cfg.kernel);

  EvalCounter counter;
  AisResult out;
  out.samples.resize(cfg.n_samples);
  std::vector<KernelStats> stats(cfg.n_samples);

  parallel_for(cfg.n_samples, cfg.workers, [&](std::size_t i) {
    try {
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
      ChainState state = make_chain_state(target, prior_sample(target, rng), counter, with_gradient);
      KernelConfig kernel = cfg.kernel;
      double log_w = 0.0;
      for (std::size_t j = 1; j < cfg.schedule.size(); ++j) {
        const double lambda = cfg.schedule[j];
        log_w += tempered(lambda - cfg.schedule[j - 1], state.loglik);
        KernelStats stage;
        for (std::size_t m = 0; m < cfg.mutation_steps; ++m) {
          std::optional<PcnProposal> pcn;
          if (const auto* p = std::get_if<PcnConfig>(&kernel)) pcn.emplace(p->beta, target.dim());
          auto res = kernel_step(state, lambda, kernel, pcn ? &*pcn : nullptr, target, rng, counter);
          stage.record(res.accepted);
          state = std::move(res.state);
          if (cfg.adapt_step_size)
            kernel = with_step_size(kernel, adapt_step_size(step_size_of(kernel), res.accepted ? 1.0 : 0.0,
                                                            accept_target, static_cast<int>(m), step_max));
        }
        stats[i] += stage;
      }
      out.samples[i] = {std::move(state.theta), log_w};
    } catch (const std::exception& e) {
      throw AisSampleError(i, e.what());
    }
  });
  for (const auto& s : stats) out.kernel_stats += s;
  out.epochs = counter.snapshot();
  return out;
}

/// Self-normalized estimate Σ φ(θ_i) Z_i / Σ Z_i.
template <class Phi>
Eigen::VectorXd ais_estimate(std::span<const WeightedSample> samples, Phi&& phi) {
  if (samples.empty()) throw std::invalid_argument("ais_estimate: no samples");
  std::vector<double> lw(samples.size());
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = samples[i].log_weight;
  const auto w = normalize_log_weights(lw);
  Eigen::VectorXd acc;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (w[i] == 0.0) continue;
    Eigen::VectorXd v = phi(samples[i].theta);
    if (acc.size() == 0) acc = Eigen::VectorXd::Zero(v.size());
    acc += w[i] * v;
  }
  return acc;
}

/// log((1/N) Σ_i Z_i).
inline double ais_log_evidence(std::span<const WeightedSample> samples) {
  std::vector<double> lw(samples.size());
  for (std::size_t i = 0; i < lw.size(); ++i) lw[i] = samples[i].log_weight;
  return log_sum_exp(lw) - std::log(static_cast<double>(lw.size()));
}

}  // namespace psmc

#endif
