#include "psmc/diagnostics.hpp"
#include "psmc/kernels.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace psmc;

namespace {

ParamVector vec(std::initializer_list<double> v) {
  ParamVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// Standard normal prior with no data: log L ≡ 0.
GaussianLinearModel flat(Eigen::Index d) { return make_gaussian_target(d, 0, 1.0, 0); }

// 1-D model with posterior N(1, 1/2).
GaussianLinearModel one_dim_model() {
  return GaussianLinearModel(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Constant(1, 2.0), 1.0,
                             GaussianPrior::standard(1));
}

// Prior N(0, 1) and log L = −θ²/2, so π_λ = N(0, 1/(1+λ)); at λ = 1 the
// Hamiltonian is θ² + q²/2.
GaussianLinearModel oscillator() {
  return GaussianLinearModel(Eigen::MatrixXd::Ones(1, 1), Eigen::VectorXd::Zero(1), 1.0,
                             GaussianPrior::standard(1));
}

}  // namespace

TEST(KernelConfig, Validation) {
  EXPECT_THROW(validate(PcnConfig{.beta = 0.0}), std::invalid_argument);
  EXPECT_THROW(validate(PcnConfig{.beta = 1.5}), std::invalid_argument);
  EXPECT_THROW(validate(HmcConfig{.step_size = -1.0}), std::invalid_argument);
  EXPECT_THROW(validate(HmcConfig{.step_size = 0.1, .leapfrog_steps = 0}), std::invalid_argument);
  EXPECT_THROW(validate(HmcConfig{.step_size = 0.1, .leapfrog_steps = 3, .mass = vec({1.0, -1.0})}),
               std::invalid_argument);
  EXPECT_NO_THROW(validate(KernelConfig{HmcConfig{}}));
  EXPECT_NO_THROW(validate(KernelConfig{PcnConfig{}}));
}

TEST(MhLogAccept, IsSymmetricUnderSwap) {
  // α(θ→θ′)π(θ) = α(θ′→θ)π(θ′), checked in log space on random pairs.
  Rng rng(1);
  std::normal_distribution<double> normal(0.0, 5.0);
  for (int i = 0; i < 1000; ++i) {
    const double a = normal(rng), b = normal(rng);
    EXPECT_NEAR(mh_log_accept(a, b) + a, mh_log_accept(b, a) + b, 1e-12);
    EXPECT_LE(mh_log_accept(a, b), 0.0);
  }
  EXPECT_EQ(mh_log_accept(0.0, std::nan("")), kNegInf);
  EXPECT_EQ(mh_log_accept(0.0, kNegInf), kNegInf);
}

TEST(PcnProposal, RejectsInvalidScaling) {
  EXPECT_THROW(PcnProposal(0.5, vec({1.0, 0.0})), std::invalid_argument);
  EXPECT_THROW(PcnProposal(0.9, vec({2.0})), std::invalid_argument);
  EXPECT_THROW(PcnProposal(0.0, 2), std::invalid_argument);
  EXPECT_NO_THROW(PcnProposal(1.0, vec({1.0, 0.5})));
}

TEST(PcnStep, TinyBetaBarelyMovesAndAccepts) {
  const auto t = make_gaussian_target(3, 6, 1.0, 1);
  EvalCounter c;
  Rng rng(2);
  const auto s = make_chain_state(t, vec({0.1, 0.2, -0.3}), c, false);
  const auto out = pcn_step(s, 1.0, PcnProposal(1e-12, 3), t, rng, c);
  EXPECT_TRUE(out.accepted);
  EXPECT_LT((out.state.theta - s.theta).norm(), 1e-9);
  EXPECT_EQ(c.snapshot(), (EvalTally{2, 0}));
}

TEST(PcnStep, FullRefreshIsIndependentPriorDraw) {
  const auto t = flat(2);
  EvalCounter c;
  Rng a(9), b(9);
  const auto s = make_chain_state(t, vec({5.0, -5.0}), c, false);
  const auto out = pcn_step(s, 0.0, PcnProposal(1.0, 2), t, a, c);
  EXPECT_TRUE(out.accepted);
  EXPECT_TRUE(out.state.theta.isApprox(standard_normal_vector(2, b), 1e-14));
}

TEST(PcnStep, ZeroTemperatureAlwaysAccepts) {
  const auto t = make_gaussian_target(2, 50, 0.1, 3);
  EvalCounter c;
  Rng rng(4);
  auto s = make_chain_state(t, vec({3.0, 3.0}), c, false);
  for (int i = 0; i < 200; ++i) {
    auto out = pcn_step(s, 0.0, PcnConfig{.beta = 0.9}, ParamVector::Ones(2), t, rng, c);
    EXPECT_TRUE(out.accepted);
    s = out.state;
  }
}

TEST(PcnStep, IsReversibleForTheTemperedTarget) {
  // Chain at λ = 0.5 on the 1-D model: π_λ = N(λ·2/(1+λ), 1/(1+λ)).
  const auto t = one_dim_model();
  EvalCounter c;
  Rng rng(5);
  auto s = make_chain_state(t, vec({0.0}), c, false);
  const PcnProposal prop(0.7, 1);
  std::vector<double> xs;
  for (int i = 0; i < 200000; ++i) {
    s = pcn_step(s, 0.5, prop, t, rng, c).state;
    xs.push_back(s.theta[0]);
  }
  double mean = 0, var = 0;
  for (double x : xs) mean += x / xs.size();
  for (double x : xs) var += (x - mean) * (x - mean) / (xs.size() - 1);
  const double tau = iact(xs, 1000);
  const double se = std::sqrt(var * tau / xs.size());
  EXPECT_NEAR(mean, 1.0 / 1.5, 4 * se);
  EXPECT_NEAR(var, 1.0 / 1.5, 0.02);
}

TEST(EstimateScaling, Examples) {
  std::vector<ParamVector> same(5, vec({1.0, 2.0}));
  EXPECT_EQ(estimate_scaling(same, 1e-8), vec({1.0, 1.0}));
  std::vector<ParamVector> two{vec({0.0}), vec({2.0})};
  EXPECT_EQ(estimate_scaling(two, 1e-8), vec({1.0}));
  std::vector<ParamVector> pop{vec({0, 0}), vec({2, 1}), vec({4, 0}), vec({1, 1})};
  const ParamVector D = estimate_scaling(pop, 1e-8);
  EXPECT_DOUBLE_EQ(D.maxCoeff(), 1.0);
  EXPECT_NEAR(D[1], (1.0 / 3.0) / (35.0 / 12.0), 1e-12);
  std::reverse(pop.begin(), pop.end());
  EXPECT_EQ(estimate_scaling(pop, 1e-8), D);
  EXPECT_THROW(estimate_scaling(std::vector<ParamVector>{vec({1})}, 1e-8), std::invalid_argument);
}

TEST(Leapfrog, FreeFlightWithZeroForce) {
  // λ = 0 with the prior gradient removed is not expressible, so use a flat
  // target with a very wide prior: force ≈ 0 over the trajectory.
  const GaussianLinearModel t(Eigen::MatrixXd::Zero(0, 2), Eigen::VectorXd::Zero(0), 1.0,
                              GaussianPrior::isotropic(2, 1e30));
  EvalCounter c;
  const ParamVector theta = vec({0.5, -0.5}), q = vec({1.0, 2.0});
  const HmcConfig cfg{.step_size = 0.1, .leapfrog_steps = 7, .mass = vec({2.0, 4.0})};
  const auto r = leapfrog(theta, q, 0.0, cfg, t, c);
  const ParamVector expected = theta + 7 * 0.1 * q.cwiseQuotient(cfg.mass);
  EXPECT_TRUE(r.theta.isApprox(expected, 1e-12));
  EXPECT_TRUE(r.momentum.isApprox(q, 1e-12));
}

TEST(Leapfrog, HarmonicOscillatorRotation) {
  // N(0, 1) target via λ = 0 on a flat-likelihood model: H = θ²/2 + q²/2.
  const auto t = flat(1);
  EvalCounter c;
  const auto r = leapfrog(vec({1.0}), vec({0.0}), 0.0, HmcConfig{.step_size = 0.01, .leapfrog_steps = 100}, t, c);
  EXPECT_NEAR(r.theta[0], std::cos(1.0), 1e-3);
  EXPECT_NEAR(r.momentum[0], -std::sin(1.0), 1e-3);
  EXPECT_TRUE(r.finite);
}

TEST(Leapfrog, CountsExactlyLGradients) {
  const auto t = make_gaussian_target(3, 5, 1.0, 1);
  EvalCounter c;
  const HmcConfig cfg{.step_size = 0.05, .leapfrog_steps = 13};
  leapfrog(vec({0, 0, 0}), vec({1, 1, 1}), ParamVector::Zero(3), 0.7, cfg, t, c);
  EXPECT_EQ(c.snapshot(), (EvalTally{0, 13}));
  leapfrog(vec({0, 0, 0}), vec({1, 1, 1}), 0.7, cfg, t, c);
  EXPECT_EQ(c.snapshot(), (EvalTally{0, 27}));
}

TEST(Leapfrog, SecondOrderEnergyError) {
  const auto t = oscillator();
  EvalCounter c;
  auto dH = [&](double dt, int steps) {
    const HmcConfig cfg{.step_size = dt, .leapfrog_steps = steps};
    const ParamVector th = vec({0.8}), q = vec({0.3});
    const auto r = leapfrog(th, q, 1.0, cfg, t, c);
    return std::abs(hamiltonian(t, r.theta, log_likelihood(t, r.theta, c), r.momentum, 1.0, cfg) -
                    hamiltonian(t, th, log_likelihood(t, th, c), q, 1.0, cfg));
  };
  const double ratio = dH(0.1, 10) / dH(0.05, 20);
  EXPECT_GE(ratio, 3.0);
  EXPECT_LE(ratio, 5.0);
}

TEST(Leapfrog, ReversibleToRoundOff) {
  const auto t = make_logistic_target(4, 30, 3);
  EvalCounter c;
  Rng rng(8);
  const ParamVector th = standard_normal_vector(4, rng), q = standard_normal_vector(4, rng);
  const HmcConfig cfg{.step_size = 0.02, .leapfrog_steps = 25};
  const auto fwd = leapfrog(th, q, 0.6, cfg, t, c);
  const auto back = leapfrog(fwd.theta, -fwd.momentum, 0.6, cfg, t, c);
  EXPECT_LT((back.theta - th).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((back.momentum + q).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Leapfrog, NonFiniteTrajectoryIsFlagged) {
  const auto t = oscillator();
  EvalCounter c;
  const auto r = leapfrog(vec({1e200}), vec({1e200}), 1.0, HmcConfig{.step_size = 1e200, .leapfrog_steps = 3}, t, c);
  EXPECT_FALSE(r.finite);
}

TEST(HmcStep, TinyStepAcceptsAndStays) {
  const auto t = make_gaussian_target(4, 8, 1.0, 2);
  EvalCounter c;
  Rng rng(3);
  const auto s = make_chain_state(t, vec({0.1, 0.2, 0.3, 0.4}), c, true);
  EXPECT_EQ(c.snapshot(), (EvalTally{1, 1}));
  const auto out = hmc_step(s, 1.0, HmcConfig{.step_size = 1e-10, .leapfrog_steps = 1}, t, rng, c);
  EXPECT_TRUE(out.accepted);
  EXPECT_LT((out.state.theta - s.theta).norm(), 1e-8);
  EXPECT_EQ(c.snapshot(), (EvalTally{2, 2}));
  EXPECT_TRUE(out.state.has_gradient());
}

TEST(HmcStep, CostIsLGradientsPlusOneLikelihood) {
  const auto t = make_gaussian_target(2, 4, 1.0, 2);
  EvalCounter c;
  Rng rng(3);
  auto s = make_chain_state(t, vec({0.0, 0.0}), c, true);
  for (int i = 0; i < 10; ++i) s = hmc_step(s, 1.0, HmcConfig{.step_size = 0.1, .leapfrog_steps = 6}, t, rng, c).state;
  EXPECT_EQ(c.snapshot(), (EvalTally{11, 61}));
}

TEST(HmcStep, DivergentTrajectoryIsRejected) {
  const auto t = oscillator();
  EvalCounter c;
  Rng rng(4);
  const auto s = make_chain_state(t, vec({1e200}), c, true);
  const auto out = hmc_step(s, 1.0, HmcConfig{.step_size = 1e200, .leapfrog_steps = 2}, t, rng, c);
  EXPECT_FALSE(out.accepted);
  EXPECT_EQ(out.state.theta, s.theta);
}

TEST(HmcStep, PriorInvarianceAtZeroTemperature) {
  const auto t = make_gaussian_target(2, 10, 0.3, 6);
  EvalCounter c;
  Rng rng(10);
  auto s = make_chain_state(t, vec({0.0, 0.0}), c, true);
  std::vector<double> xs;
  for (int i = 0; i < 40000; ++i) {
    s = hmc_step(s, 0.0, HmcConfig{.step_size = 0.3, .leapfrog_steps = 4}, t, rng, c).state;
    if (i % 4 == 0) xs.push_back(s.theta[0]);
  }
  EXPECT_NEAR(std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size(), 0.0, 0.05);
}

TEST(HmcStep, SamplesTheTemperedPosterior) {
  const auto t = one_dim_model();
  EvalCounter c;
  Rng rng(12);
  auto s = make_chain_state(t, vec({0.0}), c, true);
  std::vector<double> xs;
  const HmcConfig cfg{.step_size = 0.3, .leapfrog_steps = 3, .mass = vec({2.0})};
  for (int i = 0; i < 100000; ++i) {
    s = hmc_step(s, 0.5, cfg, t, rng, c).state;
    xs.push_back(s.theta[0]);
  }
  double mean = 0, var = 0;
  for (double x : xs) mean += x / xs.size();
  for (double x : xs) var += (x - mean) * (x - mean) / (xs.size() - 1);
  const double se = std::sqrt(var * iact(xs, 1000) / xs.size());
  EXPECT_NEAR(mean, 1.0 / 1.5, 4 * se);
  EXPECT_NEAR(var, 1.0 / 1.5, 0.02);
}

TEST(AdaptStepSize, Examples) {
  EXPECT_DOUBLE_EQ(adapt_step_size(0.3, 0.65, 0.65, 4), 0.3);
  EXPECT_GT(adapt_step_size(0.3, 1.0, 0.65, 4), 0.3);
  EXPECT_LT(adapt_step_size(0.3, 0.0, 0.65, 4), 0.3);
  EXPECT_NEAR(std::log(adapt_step_size(0.3, 1.0, 0.65, 0)), std::log(0.3) + 0.35, 1e-12);
  EXPECT_NEAR(std::log(adapt_step_size(0.3, 0.0, 0.65, 3)), std::log(0.3) - 0.65 * std::pow(4.0, -0.6), 1e-12);
  EXPECT_DOUBLE_EQ(adapt_step_size(1e-10, 0.0, 0.65, 0), 1e-10);
  EXPECT_DOUBLE_EQ(adapt_step_size(0.9, 1.0, 0.25, 0, 1.0), 1.0);
  EXPECT_THROW(adapt_step_size(-1.0, 0.5, 0.65, 0), std::invalid_argument);
}

TEST(AdaptStepSize, DrivesHmcRateToTarget) {
  const auto t = make_gaussian_target(16, 32, 1.0, 7, ParamVector::Ones(16));
  for (std::uint64_t seed = 13; seed < 18; ++seed) {
    EvalCounter c;
    Rng rng(seed);
    HmcConfig cfg{.step_size = 0.1, .leapfrog_steps = 10};
    auto s = make_chain_state(t, analytic_posterior(t).mean, c, true);
    for (int round = 0; round < 50; ++round) {
      KernelStats st;
      for (int i = 0; i < 50; ++i) {
        auto out = hmc_step(s, 1.0, cfg, t, rng, c);
        st.record(out.accepted);
        s = out.state;
      }
      cfg.step_size = adapt_step_size(cfg.step_size, st.rate(), cfg.target_accept, round);
    }
    // Frozen kernel: the long-run rate sits near the target.
    KernelStats frozen;
    for (int i = 0; i < 2000; ++i) {
      auto out = hmc_step(s, 1.0, cfg, t, rng, c);
      frozen.record(out.accepted);
      s = out.state;
    }
    EXPECT_GE(frozen.rate(), 0.55) << "seed " << seed;
    EXPECT_LE(frozen.rate(), 0.75) << "seed " << seed;
  }
}

TEST(KernelStep, Dispatches) {
  const auto t = make_gaussian_target(2, 3, 1.0, 1);
  EvalCounter c;
  Rng rng(1);
  const auto s = make_chain_state(t, vec({0, 0}), c, true);
  const PcnProposal p(0.5, 2);
  kernel_step(s, 1.0, KernelConfig{PcnConfig{}}, &p, t, rng, c);
  EXPECT_EQ(c.snapshot(), (EvalTally{2, 1}));
  kernel_step(s, 1.0, KernelConfig{HmcConfig{.step_size = 0.1, .leapfrog_steps = 2}}, nullptr, t, rng, c);
  EXPECT_EQ(c.snapshot(), (EvalTally{3, 3}));
}
