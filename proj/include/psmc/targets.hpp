#ifndef PSMC_TARGETS_HPP
#define PSMC_TARGETS_HPP

#include "psmc/core.hpp"

#include <concepts>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

/**
 * \file
 * \brief Target distributions: a Gaussian prior π₀ and a likelihood L, with
 * tempered densities L^λ π₀ interpolating prior (λ = 0) and posterior (λ = 1).
 *
 * A target type supplies raw, uncounted likelihood and likelihood-gradient
 * evaluations plus its prior. The free functions in this header wrap those
 * with dimension checks and evaluation accounting; samplers only go through
 * the free functions.
 */

namespace psmc {

// ---------------------------------------------------------------------------
// Gaussian prior

/// N(mean, cov) with a cached Cholesky factor `cov = L Lᵀ`.
class GaussianPrior {
public:
  GaussianPrior() = default;

  GaussianPrior(ParamVector mean, Eigen::MatrixXd cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    const auto d = mean_.size();
    if (cov_.rows() != d || cov_.cols() != d)
      throw std::invalid_argument("GaussianPrior: covariance shape does not match mean");
    if (!cov_.isApprox(cov_.transpose(), 1e-12))
      throw std::invalid_argument("GaussianPrior: covariance is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    if (llt.info() != Eigen::Success)
      throw std::invalid_argument("GaussianPrior: covariance is not positive definite");
    chol_ = llt.matrixL();
    log_norm_ = -0.5 * static_cast<double>(d) * kLog2Pi - chol_.diagonal().array().log().sum();
  }

  static GaussianPrior standard(Eigen::Index d) { return isotropic(d, 1.0); }

  static GaussianPrior isotropic(Eigen::Index d, double variance) {
    if (!(variance > 0.0)) throw std::invalid_argument("GaussianPrior: variance must be positive");
    return GaussianPrior(ParamVector::Zero(d), variance * Eigen::MatrixXd::Identity(d, d));
  }

  Eigen::Index dim() const noexcept { return mean_.size(); }
  const ParamVector& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& covariance() const noexcept { return cov_; }
  const Eigen::MatrixXd& cholesky() const noexcept { return chol_; }

  /// L⁻¹(θ − μ₀): coordinates in which the prior is N(0, Id).
  ParamVector whiten(const ParamVector& theta) const {
    return chol_.triangularView<Eigen::Lower>().solve(theta - mean_);
  }
  /// μ₀ + L z, inverse of `whiten`.
  ParamVector color(const ParamVector& z) const { return mean_ + chol_ * z; }

  double log_density(const ParamVector& theta) const {
    return log_norm_ - 0.5 * whiten(theta).squaredNorm();
  }

  /// −Σ₀⁻¹(θ − μ₀).
  ParamVector grad_log_density(const ParamVector& theta) const {
    const ParamVector z = whiten(theta);
    return -chol_.transpose().triangularView<Eigen::Upper>().solve(z);
  }

  ParamVector sample(Rng& rng) const { return color(standard_normal_vector(dim(), rng)); }

private:
  ParamVector mean_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
  double log_norm_ = 0.0;
};

// ---------------------------------------------------------------------------
// Target concept

template <class T>
concept Target = requires(const T& t, const ParamVector& theta) {
  { t.dim() } -> std::convertible_to<Eigen::Index>;
  { t.prior() } -> std::convertible_to<const GaussianPrior&>;
  { t.log_likelihood_value(theta) } -> std::convertible_to<double>;
  { t.grad_log_likelihood_value(theta) } -> std::convertible_to<ParamVector>;
};

template <Target T>
double log_prior(const T& target, const ParamVector& theta) {
  require_dimension(theta, target.dim(), "log_prior");
  return target.prior().log_density(theta);
}

/// log L(θ); counts one likelihood evaluation. −∞ is a legal value.
template <Target T>
double log_likelihood(const T& target, const ParamVector& theta, EvalCounter& counter) {
  require_dimension(theta, target.dim(), "log_likelihood");
  counter.add_likelihood();
  return target.log_likelihood_value(theta);
}

/// ∇ log L(θ); counts one gradient evaluation. Entries may be non-finite.
template <Target T>
ParamVector grad_log_likelihood(const T& target, const ParamVector& theta, EvalCounter& counter) {
  require_dimension(theta, target.dim(), "grad_log_likelihood");
  counter.add_gradient();
  return target.grad_log_likelihood_value(theta);
}

/// λ·log L(θ) + log π₀(θ), the unnormalized tempered log density. Uncounted;
/// used by tests and diagnostics.
template <Target T>
double log_tempered_value(const T& target, const ParamVector& theta, double lambda) {
  return tempered(lambda, target.log_likelihood_value(theta)) + log_prior(target, theta);
}

/// ∇_θ[λ·log L(θ) + log π₀(θ)]; counts one gradient evaluation.
template <Target T>
ParamVector grad_log_tempered(const T& target, const ParamVector& theta, double lambda,
                              EvalCounter& counter) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("grad_log_tempered: lambda must lie in [0, 1]");
  ParamVector g = grad_log_likelihood(target, theta, counter);
  g = lambda * g + target.prior().grad_log_density(theta);
  if (!g.allFinite())
    throw NumericalDomainError("grad_log_tempered: non-finite gradient", theta, lambda);
  return g;
}

template <Target T>
ParamVector prior_sample(const T& target, Rng& rng) {
  return target.prior().sample(rng);
}

// ---------------------------------------------------------------------------
// Gaussian linear model

/// Closed-form posterior N(mean, covariance) and exact log marginal likelihood.
struct GaussianPosterior {
  ParamVector mean;
  Eigen::MatrixXd covariance;
  double log_evidence = 0.0;
};

/// y = Xθ + ν, ν ~ N(0, σ²I), θ ~ N(μ₀, Σ₀). With m = 0 the likelihood is ≡ 1.
class GaussianLinearModel {
public:
  GaussianLinearModel(Eigen::MatrixXd X, Eigen::VectorXd y, double sigma, GaussianPrior prior)
      : X_(std::move(X)), y_(std::move(y)), sigma_(sigma), prior_(std::move(prior)) {
    if (!(sigma_ > 0.0)) throw std::invalid_argument("GaussianLinearModel: sigma must be positive");
    if (X_.cols() != prior_.dim())
      throw std::invalid_argument("GaussianLinearModel: design columns do not match prior dimension");
    if (X_.rows() != y_.size())
      throw std::invalid_argument("GaussianLinearModel: design rows do not match observations");
    log_norm_ = -static_cast<double>(y_.size()) * (std::log(sigma_) + 0.5 * kLog2Pi);
  }

  Eigen::Index dim() const noexcept { return prior_.dim(); }
  Eigen::Index n_obs() const noexcept { return y_.size(); }
  const GaussianPrior& prior() const noexcept { return prior_; }
  const Eigen::MatrixXd& design() const noexcept { return X_; }
  const Eigen::VectorXd& observations() const noexcept { return y_; }
  double sigma() const noexcept { return sigma_; }

  double log_likelihood_value(const ParamVector& theta) const {
    if (y_.size() == 0) return 0.0;
    return log_norm_ - 0.5 * (y_ - X_ * theta).squaredNorm() / (sigma_ * sigma_);
  }

  ParamVector grad_log_likelihood_value(const ParamVector& theta) const {
    if (y_.size() == 0) return ParamVector::Zero(dim());
    return X_.transpose() * (y_ - X_ * theta) / (sigma_ * sigma_);
  }

private:
  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  double sigma_;
  GaussianPrior prior_;
  double log_norm_ = 0.0;
};

/// Exact posterior moments and log evidence log N(y; Xμ₀, XΣ₀Xᵀ + σ²I).
inline GaussianPosterior analytic_posterior(const GaussianLinearModel& model) {
  const auto& prior = model.prior();
  const auto& X = model.design();
  const auto& y = model.observations();
  const double s2 = model.sigma() * model.sigma();
  const auto d = model.dim();

  Eigen::LLT<Eigen::MatrixXd> prior_llt(prior.covariance());
  if (prior_llt.info() != Eigen::Success)
    throw std::invalid_argument("analytic_posterior: singular prior covariance");
  const Eigen::MatrixXd prior_precision = prior_llt.solve(Eigen::MatrixXd::Identity(d, d));

  const Eigen::MatrixXd precision = prior_precision + X.transpose() * X / s2;
  Eigen::LLT<Eigen::MatrixXd> post_llt(precision);
  GaussianPosterior post;
  post.covariance = post_llt.solve(Eigen::MatrixXd::Identity(d, d));
  post.mean = post.covariance * (prior_precision * prior.mean() + X.transpose() * y / s2);

  const auto m = y.size();
  if (m == 0) {
    post.log_evidence = 0.0;
    return post;
  }
  const Eigen::MatrixXd marginal_cov =
      X * prior.covariance() * X.transpose() + s2 * Eigen::MatrixXd::Identity(m, m);
  Eigen::LLT<Eigen::MatrixXd> marginal_llt(marginal_cov);
  const Eigen::VectorXd r = y - X * prior.mean();
  const Eigen::MatrixXd L = marginal_llt.matrixL();
  const Eigen::VectorXd z = L.triangularView<Eigen::Lower>().solve(r);
  post.log_evidence = -0.5 * static_cast<double>(m) * kLog2Pi -
                      L.diagonal().array().log().sum() - 0.5 * z.squaredNorm();
  return post;
}

/// Random model: X_ij ~ N(0,1), θ* given, y = Xθ* + σν. Prior N(0, Id).
inline GaussianLinearModel make_gaussian_target(Eigen::Index d, Eigen::Index m, double sigma,
                                                std::uint64_t seed, const ParamVector& theta_star) {
  if (d < 0 || m < 0) throw std::invalid_argument("make_gaussian_target: negative size");
  if (!(sigma > 0.0)) throw std::invalid_argument("make_gaussian_target: sigma must be positive");
  require_dimension(theta_star, d, "make_gaussian_target");
  Rng rng(derive_seed(seed, {0x6761757373ULL}));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd X(m, d);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = normal(rng);
  Eigen::VectorXd y = X * theta_star;
  for (Eigen::Index i = 0; i < m; ++i) y[i] += sigma * normal(rng);
  return GaussianLinearModel(std::move(X), std::move(y), sigma, GaussianPrior::standard(d));
}

/// As above with the ground-truth parameter drawn from the prior, θ* ~ N(0, Id).
inline GaussianLinearModel make_gaussian_target(Eigen::Index d, Eigen::Index m, double sigma,
                                                std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x7468657461ULL}));
  return make_gaussian_target(d, m, sigma, seed, standard_normal_vector(d, rng));
}

// ---------------------------------------------------------------------------
// Gaussian mixture

/// Mixture Σ_k w_k N(μ_k, Id), factored as prior N(0, Id) times
/// L(θ) = mixture(θ)/π₀(θ), so tempering runs from the standard normal to the
/// mixture. log L(θ) = logsumexp_k(log w_k + θ·μ_k − |μ_k|²/2).
class GmmTarget {
public:
  GmmTarget(std::vector<double> weights, std::vector<ParamVector> means)
      : weights_(std::move(weights)), means_(std::move(means)) {
    if (weights_.empty() || weights_.size() != means_.size())
      throw std::invalid_argument("GmmTarget: need one mean per weight");
    const double total = std::accumulate(weights_.begin(), weights_.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("GmmTarget: weights must sum to 1");
    const auto d = means_.front().size();
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      if (!(weights_[k] > 0.0)) throw std::invalid_argument("GmmTarget: weights must be positive");
      if (means_[k].size() != d) throw std::invalid_argument("GmmTarget: means differ in dimension");
      offsets_.push_back(std::log(weights_[k]) - 0.5 * means_[k].squaredNorm());
    }
    prior_ = GaussianPrior::standard(d);
  }

  Eigen::Index dim() const noexcept { return prior_.dim(); }
  const GaussianPrior& prior() const noexcept { return prior_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<ParamVector>& means() const noexcept { return means_; }

  ParamVector mixture_mean() const {
    ParamVector mu = ParamVector::Zero(dim());
    for (std::size_t k = 0; k < weights_.size(); ++k) mu += weights_[k] * means_[k];
    return mu;
  }

  double log_likelihood_value(const ParamVector& theta) const {
    const auto terms = component_terms(theta);
    return log_sum_exp(terms);
  }

  ParamVector grad_log_likelihood_value(const ParamVector& theta) const {
    const auto terms = component_terms(theta);
    const double lse = log_sum_exp(terms);
    ParamVector g = ParamVector::Zero(dim());
    for (std::size_t k = 0; k < terms.size(); ++k) g += std::exp(terms[k] - lse) * means_[k];
    return g;
  }

private:
  std::vector<double> component_terms(const ParamVector& theta) const {
    std::vector<double> terms(weights_.size());
    for (std::size_t k = 0; k < terms.size(); ++k) terms[k] = offsets_[k] + theta.dot(means_[k]);
    return terms;
  }

  std::vector<double> weights_;
  std::vector<ParamVector> means_;
  std::vector<double> offsets_;
  GaussianPrior prior_;
};

/// 0.2·N(1_d, Id) + 0.8·N(−1_d, Id).
inline GmmTarget make_gmm_target(Eigen::Index d) {
  return GmmTarget({0.2, 0.8}, {ParamVector::Ones(d), -ParamVector::Ones(d)});
}

// ---------------------------------------------------------------------------
// Bayesian logistic regression

/// Binary logistic regression with design X (leading intercept column),
/// labels y ∈ {0,1} and prior N(0, prior_var·Id).
class LogisticTarget {
public:
  LogisticTarget(Eigen::MatrixXd X, Eigen::VectorXd y, double prior_var = 100.0)
      : X_(std::move(X)), y_(std::move(y)) {
    if (X_.rows() != y_.size()) throw std::invalid_argument("LogisticTarget: rows do not match labels");
    for (Eigen::Index i = 0; i < y_.size(); ++i)
      if (y_[i] != 0.0 && y_[i] != 1.0) throw std::invalid_argument("LogisticTarget: labels must be 0 or 1");
    prior_ = GaussianPrior::isotropic(X_.cols(), prior_var);
  }

  Eigen::Index dim() const noexcept { return prior_.dim(); }
  const GaussianPrior& prior() const noexcept { return prior_; }
  const Eigen::MatrixXd& design() const noexcept { return X_; }
  const Eigen::VectorXd& labels() const noexcept { return y_; }

  // Σ y_i η_i − log(1 + e^{η_i})
  double log_likelihood_value(const ParamVector& theta) const {
    const Eigen::VectorXd eta = X_ * theta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) ll += y_[i] * eta[i] - softplus(eta[i]);
    return ll;
  }

  ParamVector grad_log_likelihood_value(const ParamVector& theta) const {
    Eigen::VectorXd resid = X_ * theta;
    for (Eigen::Index i = 0; i < resid.size(); ++i) resid[i] = y_[i] - sigmoid(resid[i]);
    return X_.transpose() * resid;
  }

private:
  static double softplus(double x) noexcept {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  static double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  Eigen::MatrixXd X_;
  Eigen::VectorXd y_;
  GaussianPrior prior_;
};

/// Synthetic data set: m rows of d−1 standard normal covariates plus an
/// intercept, labels drawn from a logistic model with θ* ~ N(0, Id).
inline LogisticTarget make_logistic_target(Eigen::Index d, Eigen::Index m, std::uint64_t seed,
                                           double prior_var = 100.0) {
  if (d < 1 || m < 0) throw std::invalid_argument("make_logistic_target: bad size");
  Rng rng(derive_seed(seed, {0x6c6f676974ULL}));
  std::normal_distribution<double> normal(0.0, 1.0);
  const ParamVector theta_star = standard_normal_vector(d, rng);
  Eigen::MatrixXd X(m, d);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < d; ++j) X(i, j) = normal(rng);
    const double p = 1.0 / (1.0 + std::exp(-X.row(i).dot(theta_star)));
    y[i] = uniform01(rng) < p ? 1.0 : 0.0;
  }
  return LogisticTarget(std::move(X), std::move(y), prior_var);
}

/// CSV with a header row; each data row holds d−1 covariates followed by the
/// 0/1 label. The intercept column is prepended.
inline LogisticTarget load_logistic_csv(const std::string& path, double prior_var = 100.0) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_logistic_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("load_logistic_csv: empty file " + path);

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::invalid_argument("load_logistic_csv: bad number '" + cell + "' on line " +
                                    std::to_string(line_no));
      }
    }
    if (row.empty() || (!rows.empty() && row.size() != rows.front().size()))
      throw std::invalid_argument("load_logistic_csv: ragged row on line " + std::to_string(line_no));
    rows.push_back(std::move(row));
  }

  const auto m = static_cast<Eigen::Index>(rows.size());
  const auto cols = rows.empty() ? Eigen::Index{1} : static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd X(m, cols);
  Eigen::VectorXd y(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    X(i, 0) = 1.0;
    for (Eigen::Index j = 0; j + 1 < cols; ++j) X(i, j + 1) = rows[i][j];
    y[i] = rows[i][cols - 1];
  }
  return LogisticTarget(std::move(X), std::move(y), prior_var);
}

}  // namespace psmc

#endif
