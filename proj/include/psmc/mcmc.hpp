#ifndef PSMC_MCMC_HPP
#define PSMC_MCMC_HPP

#include "psmc/core.hpp"
#include "psmc/kernels.hpp"
#include "psmc/parallel.hpp"
#include "psmc/targets.hpp"

#include <optional>

namespace psmc {

enum class ChainMode { serial, parallel };

struct McmcConfig {
  std::size_t n_samples = 100;
  std::size_t burn_in = 0;  ///< B, in kernel steps
  std::size_t thin = 1;     ///< T, kernel steps between retained samples (serial)
  KernelConfig kernel = HmcConfig{};
  ChainMode mode = ChainMode::parallel;
  /// Robbins–Monro step-size adaptation over windows of `adapt_window`
  /// steps during burn-in only; the kernel is frozen afterwards.
  bool adapt_during_burn_in = false;
  std::size_t adapt_window = 50;
  std::size_t workers = 1;
};

inline void validate(const McmcConfig& cfg) {
  if (cfg.n_samples < 1) throw std::invalid_argument("McmcConfig: n_samples must be >= 1");
  if (cfg.mode == ChainMode::serial && cfg.thin < 1) throw std::invalid_argument("McmcConfig: thin must be >= 1");
  if (cfg.adapt_during_burn_in && cfg.adapt_window < 1)
    throw std::invalid_argument("McmcConfig: adapt_window must be >= 1");
  validate(cfg.kernel);
}

/// B = ⌈b·T_A⌉ for a burn-in of b autocorrelation times.
inline std::size_t burn_in_steps(double b, double iact) {
  if (!(b >= 0.0) || !(iact >= 1.0)) throw std::invalid_argument("burn_in_steps: need b >= 0 and iact >= 1");
  return static_cast<std::size_t>(std::ceil(b * iact));
}

struct ChainRun {
  std::vector<ParamVector> samples;
  EvalTally epochs;
  KernelStats kernel_stats;
  double final_step_size = 0.0;
};

namespace detail {

/// Advance one chain `steps` kernel steps at λ = 1 with identity pCN scaling,
/// adapting the step size per window when requested.
template <Target T>
ChainState advance_chain(ChainState state, std::size_t steps, KernelConfig& kernel, bool adapt, std::size_t window,
                         const T& target, Rng& rng, EvalCounter& counter, KernelStats& stats) {
  const double step_max = max_step_size_of(kernel);
  const double accept_target = target_accept_of(kernel);
  std::optional<PcnProposal> pcn;
  auto refresh = [&] {
    if (const auto* p = std::get_if<PcnConfig>(&kernel)) pcn.emplace(p->beta, target.dim());
  };
  refresh();
  KernelStats window_stats;
  int round = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    auto res = kernel_step(state, 1.0, kernel, pcn ? &*pcn : nullptr, target, rng, counter);
    stats.record(res.accepted);
    window_stats.record(res.accepted);
    state = std::move(res.state);
    if (adapt && window_stats.proposals == window) {
      kernel = with_step_size(kernel, adapt_step_size(step_size_of(kernel), window_stats.rate(), accept_target,
                                                      round++, step_max));
      refresh();
      window_stats = {};
    }
  }
  return state;
}

}  // namespace detail

/// One chain from a prior draw: B burn-in steps, then N samples spaced T
/// steps apart (the first retained sample is the state after burn-in).
/// Kernel steps: B + (N − 1)·T, plus one initial evaluation.
template <Target T>
ChainRun run_chain_serial(const McmcConfig& cfg, const T& target, Rng& rng) {
  validate(cfg);
  EvalCounter counter;
  ChainRun out;
  KernelConfig kernel = cfg.kernel;
  ChainState state = make_chain_state(target, prior_sample(target, rng), counter, uses_gradient(kernel));

  state = detail::advance_chain(std::move(state), cfg.burn_in, kernel, cfg.adapt_during_burn_in, cfg.adapt_window,
                                target, rng, counter, out.kernel_stats);
  out.samples.reserve(cfg.n_samples);
  out.samples.push_back(state.theta);
  for (std::size_t i = 1; i < cfg.n_samples; ++i) {
    state = detail::advance_chain(std::move(state), cfg.thin, kernel, false, 0, target, rng, counter,
                                  out.kernel_stats);
    out.samples.push_back(state.theta);
  }
  out.epochs = counter.snapshot();
  out.final_step_size = step_size_of(kernel);
  return out;
}

struct ParallelChainsRun {
  std::vector<ParamVector> samples;
  std::vector<EvalTally> epochs_per_chain;
  KernelStats kernel_stats;

  EvalTally total_epochs() const {
    EvalTally t;
    for (const auto& e : epochs_per_chain) t += e;
    return t;
  }
};

/// N independent chains, chain i seeded with seeds[i], each started from the
/// prior and run B steps; the final state of each chain is kept.
template <Target T>
ParallelChainsRun run_chains_parallel(const McmcConfig& cfg, const T& target, std::span<const std::uint64_t> seeds) {
  validate(cfg);
  if (seeds.size() != cfg.n_samples)
    throw std::invalid_argument("run_chains_parallel: need exactly one seed per chain");
  const std::size_t n = cfg.n_samples;
  ParallelChainsRun out;
  out.samples.resize(n);
  out.epochs_per_chain.resize(n);
  std::vector<KernelStats> stats(n);
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    Rng rng(seeds[i]);
    EvalCounter counter;
    KernelConfig kernel = cfg.kernel;
    ChainState state = make_chain_state(target, prior_sample(target, rng), counter, uses_gradient(kernel));
    state = detail::advance_chain(std::move(state), cfg.burn_in, kernel, cfg.adapt_during_burn_in,
                                  cfg.adapt_window, target, rng, counter, stats[i]);
    out.samples[i] = std::move(state.theta);
    out.epochs_per_chain[i] = counter.snapshot();
  });
  for (const auto& s : stats) out.kernel_stats += s;
  return out;
}

}  // namespace psmc

#endif
