#ifndef PSMC_SMC_HPP
#define PSMC_SMC_HPP

#include "psmc/core.hpp"
#include "psmc/kernels.hpp"
#include "psmc/parallel.hpp"
#include "psmc/targets.hpp"

#include <optional>

/**
 * \file
 * \brief SMC sampler with adaptive likelihood tempering.
 *
 * Each stage picks λ_j so that the incremental weights L(θ)^{λ_j − λ_{j−1}}
 * have ESS = αN, multiplies the evidence estimate by the stage-mean weight,
 * resamples, and mutates every particle with M steps of a π_{λ_j}-invariant
 * kernel. The evidence is tracked as log K + log Ẑ (sum of max offsets plus
 * stabilized residuals) and never exponentiated.
 */

namespace psmc {

enum class Resampling {
  multinomial,
  systematic,  ///< lower-variance alternative
  none,        ///< no selection; per-particle weights are carried (fixed schedules only)
};

struct SmcConfig {
  std::size_t n_particles = 32;
  std::size_t mutation_steps = 16;
  double ess_fraction = 0.5;
  KernelConfig kernel = HmcConfig{};
  std::size_t max_stages = 1000;
  Resampling resampling = Resampling::multinomial;
  bool adapt_step_size = true;
  /// With adapt_step_size: between stages the step is also scaled by the
  /// change in a spread statistic of the pre-mutation population, so it follows
  /// the contraction of π_j. HMC uses the smallest marginal sd of θ; pCN uses
  /// the largest marginal sd in prior-whitened coordinates (D is normalized by
  /// its maximum, so β carries the absolute scale).
  bool track_population_scale = true;
  /// Explicit tempering schedule 0 = λ₀ < … < λ_J = 1; empty selects adaptive tempering.
  std::vector<double> fixed_schedule;
  /// Threads for the mutation loop. Results do not depend on this value.
  std::size_t workers = 1;
};

/// Normalizing constant in decomposed log form: log Z = offset_sum + residual_log.
struct LogZAccumulator {
  double offset_sum = 0.0;    ///< Σ_j max_k log w_j^k  (log K)
  double residual_log = 0.0;  ///< Σ_j log[(1/N) Σ_k exp(log w_j^k − max)]  (log Ẑ)

  double total() const noexcept { return offset_sum + residual_log; }
};

/// Output of one island (one SMC run, or one MCMC run with logZ ≡ 0).
struct IslandResult {
  std::uint64_t seed = 0;
  std::vector<ParamVector> samples;
  /// Per-sample log weights; empty means equally weighted.
  std::vector<double> log_weights;
  LogZAccumulator logz;
  std::vector<double> schedule;       ///< λ_1 < … < λ_J = 1
  std::vector<double> stage_ess;      ///< ESS of the incremental weights at each stage
  std::vector<double> step_sizes;     ///< kernel step size used at each stage
  std::vector<double> accept_rates;   ///< realized acceptance rate at each stage
  EvalTally epochs;
  KernelStats kernel_stats;
};

/// Thrown when adaptive tempering needs more than max_stages stages.
class ScheduleOverflowError : public std::runtime_error {
public:
  explicit ScheduleOverflowError(std::vector<double> partial)
      : std::runtime_error("run_smc: tempering schedule exceeded max_stages"), partial_(std::move(partial)) {}
  const std::vector<double>& partial_schedule() const noexcept { return partial_; }

private:
  std::vector<double> partial_;
};

inline void validate(const SmcConfig& cfg) {
  if (cfg.n_particles < 1) throw std::invalid_argument("SmcConfig: n_particles must be >= 1");
  if (cfg.mutation_steps < 1) throw std::invalid_argument("SmcConfig: mutation_steps must be >= 1");
  if (!(cfg.ess_fraction > 0.0 && cfg.ess_fraction < 1.0))
    throw std::invalid_argument("SmcConfig: ess_fraction must lie in (0, 1)");
  if (cfg.max_stages < 1) throw std::invalid_argument("SmcConfig: max_stages must be >= 1");
  validate(cfg.kernel);
  if (!cfg.fixed_schedule.empty()) {
    const auto& s = cfg.fixed_schedule;
    if (s.size() < 2 || s.front() != 0.0 || s.back() != 1.0)
      throw std::invalid_argument("SmcConfig: fixed schedule must start at 0 and end at 1");
    for (std::size_t j = 1; j < s.size(); ++j)
      if (!(s[j] > s[j - 1])) throw std::invalid_argument("SmcConfig: fixed schedule must be strictly increasing");
  } else if (cfg.resampling == Resampling::none) {
    throw std::invalid_argument("SmcConfig: resampling 'none' requires a fixed schedule");
  }
}

// ---------------------------------------------------------------------------
// Weights

/// 1 / Σ_k w_k² for the normalized weights, computed in the log domain.
inline double ess(std::span<const double> log_weights) {
  const auto w = normalize_log_weights(log_weights);
  double s = 0.0;
  for (double x : w) s += x * x;
  return 1.0 / s;
}

namespace detail {

inline double ess_at(std::span<const double> loglik, double h, std::vector<double>& scratch) {
  scratch.resize(loglik.size());
  for (std::size_t k = 0; k < loglik.size(); ++k) scratch[k] = tempered(h, loglik[k]);
  return ess(scratch);
}

}  // namespace detail

/// Next temperature λ_prev + h*, where ESS(h*) = αN for the incremental
/// weights exp(h·ℓ_k). Returns exactly 1 when the full remaining step already
/// keeps ESS ≥ αN. ESS(h) is non-increasing in h, so bisection brackets the
/// root; it runs until the bracket is below 1e-10 and the ESS misfit below
/// 1e-9·N, or until the bracket cannot shrink in double precision.
inline double next_temperature(std::span<const double> loglik, double lambda_prev, double ess_fraction) {
  if (!(lambda_prev >= 0.0 && lambda_prev < 1.0))
    throw std::invalid_argument("next_temperature: lambda_prev must lie in [0, 1)");
  if (!(ess_fraction > 0.0 && ess_fraction < 1.0))
    throw std::invalid_argument("next_temperature: ess_fraction must lie in (0, 1)");
  const double n = static_cast<double>(loglik.size());
  const double target = ess_fraction * n;
  std::vector<double> scratch;

  double hi = 1.0 - lambda_prev;
  if (detail::ess_at(loglik, hi, scratch) >= target) return 1.0;

  double lo = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double e = detail::ess_at(loglik, mid, scratch);
    if (e >= target)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-10 && std::abs(e - target) <= 1e-9 * n) break;
  }
  // Pick the bracket end with the smaller ESS misfit.
  const double e_lo = detail::ess_at(loglik, lo, scratch);
  const double e_hi = detail::ess_at(loglik, hi, scratch);
  double h = std::abs(e_hi - target) < std::abs(e_lo - target) ? hi : lo;
  double next = lambda_prev + h;
  if (!(next > lambda_prev)) next = std::nextafter(lambda_prev, 2.0);
  return std::min(next, 1.0);
}

/// Overload reading α from the configuration.
inline double next_temperature(std::span<const double> loglik, double lambda_prev, const SmcConfig& cfg) {
  return next_temperature(loglik, lambda_prev, cfg.ess_fraction);
}

/// N ancestor indices with E[#offspring of k] = N·w_k.
inline std::vector<std::size_t> resample(std::span<const double> log_weights, Resampling scheme, Rng& rng) {
  const auto w = normalize_log_weights(log_weights);
  const std::size_t n = w.size();
  std::vector<std::size_t> idx(n);
  if (scheme == Resampling::none) {
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }

  std::vector<double> u(n);
  if (scheme == Resampling::systematic) {
    const double u0 = uniform01(rng) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = u0 + static_cast<double>(i) / static_cast<double>(n);
  } else {
    for (auto& x : u) x = uniform01(rng);
    std::sort(u.begin(), u.end());
  }

  // Sweep the sorted points through the cumulative weights; the last
  // positive-weight index absorbs round-off in the total.
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (w[k] > 0.0) last_positive = k;
  std::size_t k = 0;
  double cumulative = w[0];
  for (std::size_t i = 0; i < n; ++i) {
    while (k < last_positive && (u[i] >= cumulative || w[k] == 0.0)) cumulative += w[++k];
    idx[i] = k;
  }
  return idx;
}

/// Fold one stage into the evidence: offset += max_k lw_k and
/// residual += log[(1/N) Σ_k exp(lw_k − max)], where lw_k are the
/// unnormalized increments (λ_j − λ_{j−1})·ℓ_k of equally weighted particles.
inline LogZAccumulator update_logz(LogZAccumulator acc, std::span<const double> stage_log_weights) {
  const double m = max_log(stage_log_weights);
  if (!(m > kNegInf) || !std::isfinite(m))
    throw DegeneratePopulationError("update_logz: stage weights are all -inf or non-finite");
  double s = 0.0;
  for (double x : stage_log_weights) s += std::exp(x - m);
  acc.offset_sum += m;
  acc.residual_log += std::log(s / static_cast<double>(stage_log_weights.size()));
  return acc;
}

/// Weighted variant for populations that are not resampled: the increment is
/// log Σ_k W_k exp(lw_k) with W the normalized current weights.
inline LogZAccumulator update_logz_weighted(LogZAccumulator acc, std::span<const double> current_log_weights,
                                            std::span<const double> stage_log_weights) {
  std::vector<double> combined(stage_log_weights.size());
  for (std::size_t k = 0; k < combined.size(); ++k) combined[k] = current_log_weights[k] + stage_log_weights[k];
  const double m_new = max_log(combined);
  const double m_old = max_log(current_log_weights);
  if (!(m_new > kNegInf) || !std::isfinite(m_new))
    throw DegeneratePopulationError("update_logz_weighted: weights are all -inf or non-finite");
  double s_new = 0.0, s_old = 0.0;
  for (std::size_t k = 0; k < combined.size(); ++k) {
    s_new += std::exp(combined[k] - m_new);
    s_old += std::exp(current_log_weights[k] - m_old);
  }
  acc.offset_sum += m_new - m_old;
  acc.residual_log += std::log(s_new) - std::log(s_old);
  return acc;
}

// ---------------------------------------------------------------------------
// Sampler

namespace detail {

// Stream tags for derive_seed(island_seed, {stage, tag-or-index}).
inline constexpr std::uint64_t kResampleStream = 0xffffffffffff0001ULL;

/// Marginal sd of each coordinate of `pop` (n − 1 denominator).
inline ParamVector marginal_sd(std::span<const ParamVector> pop) {
  const auto d = pop.front().size();
  ParamVector mean = ParamVector::Zero(d), sq = ParamVector::Zero(d);
  for (const auto& p : pop) mean += p;
  mean /= static_cast<double>(pop.size());
  for (const auto& p : pop) sq += (p - mean).cwiseAbs2();
  return (sq / static_cast<double>(pop.size() - 1)).cwiseSqrt();
}

}  // namespace detail

/// Run one SMC sampler to λ = 1. Particle i at stage j draws from the stream
/// derive_seed(seed, {j, i}) (stage 0 is initialization), so the result is
/// independent of cfg.workers.
template <Target T>
IslandResult run_smc(const SmcConfig& cfg, const T& target, std::uint64_t seed) {
  validate(cfg);
  const std::size_t n = cfg.n_particles;
  const bool with_gradient = uses_gradient(cfg.kernel);
  const bool adaptive = cfg.fixed_schedule.empty();
  const bool resampled = cfg.resampling != Resampling::none;

  EvalCounter counter;
  IslandResult out;
  out.seed = seed;

  std::vector<ChainState> particles(n);
  parallel_for(n, cfg.workers, [&](std::size_t i) {
    Rng rng(derive_seed(seed, {0, i}));
    particles[i] = make_chain_state(target, prior_sample(target, rng), counter, with_gradient);
  });

  std::vector<double> loglik(n), stage_lw(n), log_weights(resampled ? 0 : n, 0.0);
  double lambda = 0.0;
  double step = step_size_of(cfg.kernel);
  const double step_max = max_step_size_of(cfg.kernel);
  const double accept_target = target_accept_of(cfg.kernel);
  const bool track_scale = cfg.adapt_step_size && cfg.track_population_scale && n >= 2;
  double prev_scale = 0.0;

  for (std::size_t stage = 1; lambda < 1.0; ++stage) {
    if (stage > cfg.max_stages) throw ScheduleOverflowError(out.schedule);
    for (std::size_t i = 0; i < n; ++i) loglik[i] = particles[i].loglik;

    const double next = adaptive ? next_temperature(loglik, lambda, cfg.ess_fraction) : cfg.fixed_schedule[stage];
    for (std::size_t i = 0; i < n; ++i) stage_lw[i] = tempered(next - lambda, loglik[i]);

    if (resampled) {
      out.stage_ess.push_back(ess(stage_lw));
      out.logz = update_logz(out.logz, stage_lw);
      Rng rng(derive_seed(seed, {stage, detail::kResampleStream}));
      const auto ancestors = resample(stage_lw, cfg.resampling, rng);
      std::vector<ChainState> selected(n);
      for (std::size_t i = 0; i < n; ++i) selected[i] = particles[ancestors[i]];
      particles = std::move(selected);
    } else {
      out.logz = update_logz_weighted(out.logz, log_weights, stage_lw);
      for (std::size_t i = 0; i < n; ++i) log_weights[i] += stage_lw[i];
      out.stage_ess.push_back(ess(log_weights));
    }

    std::vector<ParamVector> pop;
    const bool pcn_scaling = !with_gradient && std::get<PcnConfig>(cfg.kernel).use_scaling;
    if (n >= 2 && (track_scale || pcn_scaling)) {
      pop.resize(n);
      for (std::size_t i = 0; i < n; ++i)
        pop[i] = with_gradient ? particles[i].theta : target.prior().whiten(particles[i].theta);
    }
    if (track_scale) {
      const ParamVector sd = detail::marginal_sd(pop);
      const double scale = with_gradient ? sd.minCoeff() : sd.maxCoeff();
      if (prev_scale > 0.0 && scale > 0.0) step = std::clamp(step * scale / prev_scale, 1e-10, step_max);
      if (scale > 0.0) prev_scale = scale;
    }
    const KernelConfig kernel = with_step_size(cfg.kernel, step);
    std::optional<PcnProposal> pcn;
    if (const auto* p = std::get_if<PcnConfig>(&kernel))
      pcn.emplace(p->beta, pcn_scaling && n >= 2 ? estimate_scaling(pop, p->scaling_floor)
                                                 : ParamVector::Ones(target.dim()));

    std::vector<KernelStats> stats(n);
    parallel_for(n, cfg.workers, [&](std::size_t i) {
      Rng rng(derive_seed(seed, {stage, i}));
      for (std::size_t m = 0; m < cfg.mutation_steps; ++m) {
        auto res = kernel_step(particles[i], next, kernel, pcn ? &*pcn : nullptr, target, rng, counter);
        stats[i].record(res.accepted);
        particles[i] = std::move(res.state);
      }
    });
    KernelStats stage_stats;
    for (const auto& s : stats) stage_stats += s;
    out.kernel_stats += stage_stats;
    out.step_sizes.push_back(step);
    out.accept_rates.push_back(stage_stats.rate());
    if (cfg.adapt_step_size)
      step = adapt_step_size(step, stage_stats.rate(), accept_target, static_cast<int>(stage - 1), step_max);

    lambda = next;
    out.schedule.push_back(lambda);
  }

  out.samples.reserve(n);
  for (auto& p : particles) out.samples.push_back(std::move(p.theta));
  out.log_weights = std::move(log_weights);
  out.epochs = counter.snapshot();
  return out;
}

}  // namespace psmc

#endif
