#ifndef PSMC_KERNELS_HPP
#define PSMC_KERNELS_HPP

#include "psmc/core.hpp"
#include "psmc/targets.hpp"

#include <variant>

/**
 * \file
 * \brief π_λ-invariant transition kernels: preconditioned Crank–Nicolson and
 * Hamiltonian Monte Carlo, plus step-size adaptation and population scaling.
 *
 * Kernels operate on a ChainState, which caches log L(θ) (and ∇log L(θ) for
 * HMC) so a step only pays for evaluations at new points: one likelihood per
 * pCN step, L gradients plus one likelihood per HMC step.
 */

namespace psmc {

struct PcnConfig {
  double beta = 0.5;             ///< proposal scale, 0 < β ≤ 1
  bool use_scaling = true;       ///< population-based diagonal D inside SMC
  double scaling_floor = 1e-8;
  double target_accept = 0.25;   ///< used when step adaptation is on
};

struct HmcConfig {
  double step_size = 0.1;
  int leapfrog_steps = 10;
  ParamVector mass;              ///< diagonal of M₀; empty means Id
  double target_accept = 0.65;
};

using KernelConfig = std::variant<PcnConfig, HmcConfig>;

inline void validate(const PcnConfig& cfg) {
  if (!(cfg.beta > 0.0 && cfg.beta <= 1.0)) throw std::invalid_argument("PcnConfig: beta must lie in (0, 1]");
  if (!(cfg.scaling_floor > 0.0)) throw std::invalid_argument("PcnConfig: scaling_floor must be positive");
}

inline void validate(const HmcConfig& cfg) {
  if (!(cfg.step_size > 0.0)) throw std::invalid_argument("HmcConfig: step_size must be positive");
  if (cfg.leapfrog_steps < 1) throw std::invalid_argument("HmcConfig: leapfrog_steps must be >= 1");
  if (cfg.mass.size() > 0 && !(cfg.mass.array() > 0.0).all())
    throw std::invalid_argument("HmcConfig: mass entries must be positive");
  if (!(cfg.target_accept > 0.0 && cfg.target_accept < 1.0))
    throw std::invalid_argument("HmcConfig: target_accept must lie in (0, 1)");
}

inline void validate(const KernelConfig& k) {
  std::visit([](const auto& c) { validate(c); }, k);
}

inline bool uses_gradient(const KernelConfig& k) noexcept { return std::holds_alternative<HmcConfig>(k); }

/// Step size of the kernel: β for pCN, Δt for HMC.
inline double step_size_of(const KernelConfig& k) noexcept {
  return std::visit([](const auto& c) -> double {
    if constexpr (std::is_same_v<std::decay_t<decltype(c)>, PcnConfig>)
      return c.beta;
    else
      return c.step_size;
  }, k);
}

inline double target_accept_of(const KernelConfig& k) noexcept {
  return std::visit([](const auto& c) { return c.target_accept; }, k);
}

/// Largest admissible step size (β ≤ 1 keeps Id − β²D positive semidefinite).
inline double max_step_size_of(const KernelConfig& k) noexcept {
  return std::holds_alternative<PcnConfig>(k) ? 1.0 : 1e3;
}

/// Acceptance bookkeeping.
struct KernelStats {
  std::uint64_t proposals = 0;
  std::uint64_t accepts = 0;
  double last_rate = 0.0;

  void record(bool accepted) noexcept {
    ++proposals;
    if (accepted) ++accepts;
    last_rate = static_cast<double>(accepts) / static_cast<double>(proposals);
  }
  KernelStats& operator+=(const KernelStats& o) noexcept {
    proposals += o.proposals;
    accepts += o.accepts;
    last_rate = proposals ? static_cast<double>(accepts) / static_cast<double>(proposals) : 0.0;
    return *this;
  }
  double rate() const noexcept { return last_rate; }
};

// ---------------------------------------------------------------------------
// Chain state

struct ChainState {
  ParamVector theta;
  double loglik = kNegInf;
  ParamVector grad_loglik;  ///< empty until a gradient has been evaluated

  bool has_gradient() const noexcept { return grad_loglik.size() == theta.size() && theta.size() > 0; }
};

/// Evaluate log L (and optionally ∇log L) at θ: 1 likelihood, 0 or 1 gradient.
template <Target T>
ChainState make_chain_state(const T& target, ParamVector theta, EvalCounter& counter, bool with_gradient) {
  ChainState s;
  s.loglik = log_likelihood(target, theta, counter);
  if (with_gradient) s.grad_loglik = grad_log_likelihood(target, theta, counter);
  s.theta = std::move(theta);
  return s;
}

struct StepOutcome {
  ChainState state;
  bool accepted = false;
};

/// Metropolis–Hastings log acceptance probability min(0, log π̃(θ′) − log π̃(θ))
/// for a proposal that is reversible with respect to the reference measure.
/// NaN differences (e.g. −∞ − (−∞)) are rejected.
inline double mh_log_accept(double log_target_current, double log_target_proposed) noexcept {
  const double diff = log_target_proposed - log_target_current;
  if (std::isnan(diff)) return kNegInf;
  return std::min(0.0, diff);
}

// ---------------------------------------------------------------------------
// pCN

/// Diagonal pCN factors in whitened coordinates: z′ = a∘z + b∘δ with
/// a = (1 − β²D)^{1/2}, b = β D^{1/2}.
class PcnProposal {
public:
  PcnProposal(double beta, const ParamVector& scaling) : a_(scaling.size()), b_(scaling.size()) {
    if (!(beta > 0.0 && beta <= 1.0)) throw std::invalid_argument("pcn: beta must lie in (0, 1]");
    for (Eigen::Index i = 0; i < scaling.size(); ++i) {
      const double D = scaling[i];
      const double one_minus = 1.0 - beta * beta * D;
      if (!(D > 0.0)) throw std::invalid_argument("pcn: scaling entries must be positive");
      if (one_minus < 0.0) throw std::invalid_argument("pcn: Id - beta^2 D is not positive semidefinite");
      a_[i] = std::sqrt(one_minus);
      b_[i] = beta * std::sqrt(D);
    }
  }

  PcnProposal(double beta, Eigen::Index d) : PcnProposal(beta, ParamVector::Ones(d)) {}

  template <Target T>
  ParamVector propose(const T& target, const ParamVector& theta, Rng& rng) const {
    const auto& prior = target.prior();
    const ParamVector z = prior.whiten(theta);
    const ParamVector delta = standard_normal_vector(z.size(), rng);
    return prior.color(a_.cwiseProduct(z) + b_.cwiseProduct(delta));
  }

  Eigen::Index dim() const noexcept { return a_.size(); }

private:
  ParamVector a_;
  ParamVector b_;
};

/// One pCN step at temperature λ. The proposal is prior-reversible, so the
/// acceptance ratio involves only L(θ′)^λ / L(θ)^λ. Costs one likelihood.
template <Target T>
StepOutcome pcn_step(const ChainState& state, double lambda, const PcnProposal& proposal, const T& target,
                     Rng& rng, EvalCounter& counter) {
  require_dimension(state.theta, target.dim(), "pcn_step");
  if (proposal.dim() != target.dim()) throw std::invalid_argument("pcn_step: scaling dimension mismatch");
  ParamVector candidate = proposal.propose(target, state.theta, rng);
  const double ll = log_likelihood(target, candidate, counter);
  const double log_u = std::log(uniform01(rng));
  const double log_alpha = lambda == 0.0 ? 0.0 : mh_log_accept(tempered(lambda, state.loglik), tempered(lambda, ll));
  if (log_u <= log_alpha) {
    ChainState next;
    next.theta = std::move(candidate);
    next.loglik = ll;
    return {std::move(next), true};
  }
  return {state, false};
}

/// Convenience overload taking the configuration and D directly.
template <Target T>
StepOutcome pcn_step(const ChainState& state, double lambda, const PcnConfig& cfg, const ParamVector& scaling,
                     const T& target, Rng& rng, EvalCounter& counter) {
  return pcn_step(state, lambda, PcnProposal(cfg.beta, scaling), target, rng, counter);
}

/// Coordinate-wise sample variance (n − 1 denominator), floored at `floor`,
/// then divided by its largest entry so max D = 1 and Id − β²D ⪰ 0 for β ≤ 1.
inline ParamVector estimate_scaling(std::span<const ParamVector> population, double floor) {
  if (population.size() < 2) throw std::invalid_argument("estimate_scaling: need at least two samples");
  if (!(floor > 0.0)) throw std::invalid_argument("estimate_scaling: floor must be positive");
  const auto d = population.front().size();
  const double n = static_cast<double>(population.size());
  ParamVector mean = ParamVector::Zero(d);
  for (const auto& p : population) mean += p;
  mean /= n;
  ParamVector var = ParamVector::Zero(d);
  for (const auto& p : population) var += (p - mean).cwiseAbs2();
  var /= (n - 1.0);
  var = var.cwiseMax(floor);
  return var / var.maxCoeff();
}

// ---------------------------------------------------------------------------
// HMC

namespace detail {

inline ParamVector inverse_mass(const HmcConfig& cfg, Eigen::Index d) {
  if (cfg.mass.size() == 0) return ParamVector::Ones(d);
  if (cfg.mass.size() != d) throw std::invalid_argument("hmc: mass dimension mismatch");
  return cfg.mass.cwiseInverse();
}

template <Target T>
ParamVector tempered_gradient(const T& target, const ParamVector& theta, const ParamVector& grad_loglik,
                              double lambda) {
  ParamVector g = target.prior().grad_log_density(theta);
  if (lambda != 0.0) g += lambda * grad_loglik;
  return g;
}

}  // namespace detail

struct LeapfrogResult {
  ParamVector theta;
  ParamVector momentum;
  ParamVector grad_loglik;  ///< ∇log L at the final position
  bool finite = true;       ///< false when the trajectory left the finite range
};

/// L leapfrog steps (half kick, drift, half kick) for H(θ,q) = −λ log L − log π₀
/// + ½ qᵀM₀⁻¹q, starting from a cached ∇log L(θ). Exactly L gradient
/// evaluations are counted. A non-finite trajectory is reported via `finite`
/// rather than thrown; callers treat it as a rejection.
template <Target T>
LeapfrogResult leapfrog(const ParamVector& theta, const ParamVector& momentum, const ParamVector& grad_loglik,
                        double lambda, const HmcConfig& cfg, const T& target, EvalCounter& counter) {
  require_dimension(theta, target.dim(), "leapfrog");
  require_dimension(momentum, target.dim(), "leapfrog");
  require_dimension(grad_loglik, target.dim(), "leapfrog");
  const ParamVector inv_mass = detail::inverse_mass(cfg, target.dim());
  const double dt = cfg.step_size;

  LeapfrogResult r{theta, momentum, grad_loglik, true};
  ParamVector force = detail::tempered_gradient(target, r.theta, r.grad_loglik, lambda);
  for (int step = 0; step < cfg.leapfrog_steps; ++step) {
    r.momentum += 0.5 * dt * force;
    r.theta += dt * inv_mass.cwiseProduct(r.momentum);
    r.grad_loglik = grad_log_likelihood(target, r.theta, counter);
    force = detail::tempered_gradient(target, r.theta, r.grad_loglik, lambda);
    r.momentum += 0.5 * dt * force;
  }
  r.finite = r.theta.allFinite() && r.momentum.allFinite() && r.grad_loglik.allFinite();
  return r;
}

/// Overload that first evaluates ∇log L(θ) (one extra gradient).
template <Target T>
LeapfrogResult leapfrog(const ParamVector& theta, const ParamVector& momentum, double lambda,
                        const HmcConfig& cfg, const T& target, EvalCounter& counter) {
  const ParamVector g = grad_log_likelihood(target, theta, counter);
  return leapfrog(theta, momentum, g, lambda, cfg, target, counter);
}

/// H(θ, q) at temperature λ with diagonal mass.
template <Target T>
double hamiltonian(const T& target, const ParamVector& theta, double loglik, const ParamVector& momentum,
                   double lambda, const HmcConfig& cfg) {
  const ParamVector inv_mass = detail::inverse_mass(cfg, target.dim());
  return -(tempered(lambda, loglik) + target.prior().log_density(theta)) +
         0.5 * momentum.cwiseAbs2().dot(inv_mass);
}

/// One HMC step: fresh momentum q ~ N(0, M₀), one trajectory, MH correction on
/// exp(H(θ,q) − H(θ′,q′)). Costs L gradients and one likelihood (at θ′); a
/// state without a cached gradient pays one more gradient first.
template <Target T>
StepOutcome hmc_step(const ChainState& state, double lambda, const HmcConfig& cfg, const T& target, Rng& rng,
                     EvalCounter& counter) {
  require_dimension(state.theta, target.dim(), "hmc_step");
  ChainState current = state;
  if (!current.has_gradient()) current.grad_loglik = grad_log_likelihood(target, current.theta, counter);

  const auto d = target.dim();
  ParamVector q = standard_normal_vector(d, rng);
  if (cfg.mass.size() > 0) q = q.cwiseProduct(cfg.mass.cwiseSqrt());

  const double h0 = hamiltonian(target, current.theta, current.loglik, q, lambda, cfg);
  LeapfrogResult traj = leapfrog(current.theta, q, current.grad_loglik, lambda, cfg, target, counter);
  const double ll = log_likelihood(target, traj.theta, counter);
  const double log_u = std::log(uniform01(rng));

  double log_alpha = kNegInf;
  if (traj.finite) {
    const double h1 = hamiltonian(target, traj.theta, ll, traj.momentum, lambda, cfg);
    if (std::isfinite(h1) && std::isfinite(h0)) log_alpha = std::min(0.0, h0 - h1);
  }
  if (log_u <= log_alpha) {
    ChainState next;
    next.theta = std::move(traj.theta);
    next.loglik = ll;
    next.grad_loglik = std::move(traj.grad_loglik);
    return {std::move(next), true};
  }
  return {std::move(current), false};
}

// ---------------------------------------------------------------------------
// Adaptation

/// Robbins–Monro update on the log step size:
/// log s ← log s + (1 + t)^{−0.6}·(observed − target), clamped to [1e-10, upper].
inline double adapt_step_size(double current, double observed_rate, double target_rate, int iteration,
                              double upper = 1e3) {
  if (!(current > 0.0)) throw std::invalid_argument("adapt_step_size: step size must be positive");
  const double gain = std::pow(1.0 + static_cast<double>(std::max(iteration, 0)), -0.6);
  const double next = std::exp(std::log(current) + gain * (observed_rate - target_rate));
  return std::clamp(next, 1e-10, upper);
}

/// Kernel with its step size replaced.
inline KernelConfig with_step_size(KernelConfig k, double step) {
  std::visit([step](auto& c) {
    if constexpr (std::is_same_v<std::decay_t<decltype(c)>, PcnConfig>)
      c.beta = step;
    else
      c.step_size = step;
  }, k);
  return k;
}

/// One step of whichever kernel is configured. `pcn` must be non-null for a
/// pCN kernel and is ignored for HMC.
template <Target T>
StepOutcome kernel_step(const ChainState& state, double lambda, const KernelConfig& kernel,
                        const PcnProposal* pcn, const T& target, Rng& rng, EvalCounter& counter) {
  if (const auto* hmc = std::get_if<HmcConfig>(&kernel)) return hmc_step(state, lambda, *hmc, target, rng, counter);
  return pcn_step(state, lambda, *pcn, target, rng, counter);
}

}  // namespace psmc

#endif
