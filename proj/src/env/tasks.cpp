#include "boed/env/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "boed/errors.hpp"
#include "boed/grad/ops.hpp"

namespace boed::env {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

void check_size(std::span<const double> v, std::size_t n, const char* what) {
  if (v.size() != n) {
    throw ConfigError(std::string(what) + ": expected " + std::to_string(n) + " values, got " +
                      std::to_string(v.size()));
  }
}

}  // namespace

// ---- conjugate ----

ConjugateGaussianTask::ConjugateGaussianTask(std::size_t k, double prior_mean, double prior_var,
                                             double noise_var, std::size_t horizon)
    : k_(k), prior_(k, prior_mean, prior_var), noise_var_(noise_var) {
  if (!(noise_var > 0.0)) throw ConfigError("noise variance must be positive");
  design_ = DesignSpace{{-1.0}, {1.0}, false};
  blocks_ = {{Support::kReal, 0, k}};
  set_horizon(horizon);
}

void ConjugateGaussianTask::sample_prior(dist::Rng& rng, std::span<double> theta) const {
  prior_.sample(rng, theta);
}

double ConjugateGaussianTask::prior_log_prob(std::span<const double> theta) const {
  return prior_.log_prob(theta);
}

void ConjugateGaussianTask::simulate(std::span<const double> theta, std::span<const double>,
                                     dist::Rng& rng, std::span<double> outcome) const {
  check_size(theta, k_, "conjugate theta");
  const double sd = std::sqrt(noise_var_);
  for (std::size_t i = 0; i < k_; ++i) outcome[i] = theta[i] + sd * rng.normal();
}

double ConjugateGaussianTask::log_lik_impl(std::span<const double> outcome,
                                           std::span<const double> theta,
                                           std::span<const double>) const {
  double ss = 0.0;
  for (std::size_t i = 0; i < k_; ++i) ss += (outcome[i] - theta[i]) * (outcome[i] - theta[i]);
  return -0.5 * ss / noise_var_ - 0.5 * static_cast<double>(k_) * (kLog2Pi + std::log(noise_var_));
}

void ConjugateGaussianTask::history_log_lik(const History& h, std::span<const double> thetas,
                                            std::span<double> out) const {
  require_explicit();
  const std::size_t n = h.size();
  std::vector<double> s1(k_, 0.0);
  double s2 = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    const auto y = h.outcome(t);
    for (std::size_t i = 0; i < k_; ++i) {
      s1[i] += y[i];
      s2 += y[i] * y[i];
    }
  }
  const double nn = static_cast<double>(n);
  const double c = -0.5 * nn * static_cast<double>(k_) * (kLog2Pi + std::log(noise_var_));
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double* th = thetas.data() + r * k_;
    double dot = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < k_; ++i) {
      dot += th[i] * s1[i];
      sq += th[i] * th[i];
    }
    out[r] = c - 0.5 * (s2 - 2.0 * dot + nn * sq) / noise_var_;
  }
}

void ConjugateGaussianTask::features(std::span<const double>, std::span<const double> outcome,
                                     std::span<double> out) const {
  const double scale = 1.0 / std::sqrt(prior_.var() + noise_var_);
  for (std::size_t i = 0; i < k_; ++i) out[i] = outcome[i] * scale;
}

dist::IsotropicGaussian ConjugateGaussianTask::posterior(const History& h) const {
  std::vector<double> sum(k_, 0.0);
  for (std::size_t t = 0; t < h.size(); ++t) {
    const auto y = h.outcome(t);
    for (std::size_t i = 0; i < k_; ++i) sum[i] += y[i];
  }
  return dist::conjugate_posterior(prior_, noise_var_, h.size(), sum);
}

double ConjugateGaussianTask::true_eig(std::size_t n) const {
  return dist::closed_form_eig(k_, prior_.var(), noise_var_, n);
}

// ---- source location ----

double signal_intensity(std::span<const double> theta, std::span<const double> design,
                        const SourceParams& p) {
  // Terms are summed in sorted order so relabelling the sources is bit-exact.
  double small[8];
  std::vector<double> big;
  double* terms = small;
  if (p.sources > 8) {
    big.resize(p.sources);
    terms = big.data();
  }
  for (std::size_t s = 0; s < p.sources; ++s) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < p.dim; ++j) {
      const double diff = theta[s * p.dim + j] - design[j];
      d2 += diff * diff;
    }
    terms[s] = 1.0 / (p.max_signal + d2);
  }
  std::sort(terms, terms + p.sources);
  double mu = 0.0;
  for (std::size_t s = 0; s < p.sources; ++s) mu += terms[s];
  return mu + p.background;
}

SourceLocationTask::SourceLocationTask(const SourceParams& p, std::size_t horizon) : p_(p) {
  if (!(p.background > 0.0) || !(p.max_signal > 0.0) || !(p.noise_sd > 0.0) || !(p.bound > 0.0)) {
    throw ConfigError("source task: b, m, sigma and bound must be positive");
  }
  design_ = DesignSpace{std::vector<double>(p.dim, -p.bound), std::vector<double>(p.dim, p.bound), false};
  blocks_ = {{Support::kReal, 0, p.sources * p.dim}};
  set_horizon(horizon);
}

void SourceLocationTask::sample_prior(dist::Rng& rng, std::span<double> theta) const {
  for (double& v : theta) v = rng.normal();
}

double SourceLocationTask::prior_log_prob(std::span<const double> theta) const {
  double ss = 0.0;
  for (double v : theta) ss += v * v;
  return -0.5 * ss - 0.5 * static_cast<double>(theta.size()) * kLog2Pi;
}

double SourceLocationTask::prior_entropy() const { return dist::gaussian_entropy(theta_dim(), 1.0); }

void SourceLocationTask::simulate(std::span<const double> theta, std::span<const double> design,
                                  dist::Rng& rng, std::span<double> outcome) const {
  check_size(theta, theta_dim(), "source theta");
  check_size(design, p_.dim, "source design");
  outcome[0] = std::log(signal_intensity(theta, design, p_)) + p_.noise_sd * rng.normal();
}

double SourceLocationTask::log_lik_impl(std::span<const double> outcome, std::span<const double> theta,
                                        std::span<const double> design) const {
  return dist::normal_log_pdf(outcome[0], std::log(signal_intensity(theta, design, p_)), p_.noise_sd);
}

void SourceLocationTask::features(std::span<const double> design, std::span<const double> outcome,
                                  std::span<double> out) const {
  for (std::size_t j = 0; j < p_.dim; ++j) out[j] = design[j] / p_.bound;
  out[p_.dim] = (outcome[0] + 1.0) / 1.5;
}

// ---- CES ----

double ces_utility(std::span<const double> x, double rho, std::span<const double> alpha) {
  if (!(rho > 0.0)) throw ConfigError("CES utility needs rho > 0, got " + std::to_string(rho));
  // log sum_i alpha_i x_i^rho, written as log1p(sum alpha_i expm1(rho log x_i)) since sum alpha = 1.
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = i < alpha.size() ? alpha[i] : 1.0 - alpha[0] - alpha[1];
    if (a == 0.0) continue;
    acc += a * (x[i] > 0.0 ? std::expm1(rho * std::log(x[i])) : -1.0);
  }
  if (acc <= -1.0) return 0.0;
  return std::exp(std::log1p(acc) / rho);
}

CesTask::CesTask(const CesParams& p, std::size_t horizon)
    : p_(p),
      rho_prior_(p.rho_a, p.rho_b),
      alpha_prior_(std::vector<double>(kGoods, p.alpha_concentration)),
      u_prior_(p.log_u_mean, p.log_u_sd) {
  if (!(p.tau > 0.0) || !(p.epsilon > 0.0 && p.epsilon < 0.5) || !(p.design_max > 0.0)) {
    throw ConfigError("CES task: need tau > 0, 0 < epsilon < 0.5, design_max > 0");
  }
  design_ = DesignSpace{std::vector<double>(2 * kGoods, 0.0), std::vector<double>(2 * kGoods, p.design_max), false};
  blocks_ = {{Support::kUnitInterval, 0, 1}, {Support::kSimplex, 1, kGoods - 1}, {Support::kPositive, kGoods, 1}};
  set_horizon(horizon);
}

void CesTask::sample_prior(dist::Rng& rng, std::span<double> theta) const {
  theta[0] = rho_prior_.sample(rng);
  double alpha[kGoods];
  alpha_prior_.sample(rng, alpha);
  for (std::size_t i = 0; i + 1 < kGoods; ++i) theta[1 + i] = alpha[i];
  theta[kGoods] = u_prior_.sample(rng);
}

double CesTask::prior_log_prob(std::span<const double> theta) const {
  return rho_prior_.log_prob(theta[0]) + alpha_prior_.log_prob(theta.subspan(1, kGoods - 1)) +
         u_prior_.log_prob(theta[kGoods]);
}

double CesTask::prior_entropy() const {
  return rho_prior_.entropy() + alpha_prior_.entropy() + u_prior_.entropy();
}

CesTask::EtaMoments CesTask::eta(std::span<const double> theta, std::span<const double> design) const {
  check_size(theta, theta_dim(), "CES theta");
  check_size(design, 2 * kGoods, "CES design");
  const auto x = design.subspan(0, kGoods), xp = design.subspan(kGoods, kGoods);
  const auto alpha = theta.subspan(1, kGoods - 1);
  const double rho = theta[0], u = theta[kGoods];
  double dist2 = 0.0;
  for (std::size_t i = 0; i < kGoods; ++i) dist2 += (x[i] - xp[i]) * (x[i] - xp[i]);
  return {(ces_utility(x, rho, alpha) - ces_utility(xp, rho, alpha)) * u,
          (1.0 + std::sqrt(dist2)) * p_.tau * u};
}

void CesTask::simulate(std::span<const double> theta, std::span<const double> design, dist::Rng& rng,
                       std::span<double> outcome) const {
  const auto m = eta(theta, design);
  const double e = m.mean + m.sd * rng.normal();
  outcome[0] = std::clamp(grad::sigmoid(e), p_.epsilon, 1.0 - p_.epsilon);
}

double CesTask::log_lik_impl(std::span<const double> outcome, std::span<const double> theta,
                             std::span<const double> design) const {
  const auto m = eta(theta, design);
  const double y = outcome[0];
  // Clipped outcomes carry the censored tail mass.
  if (y <= p_.epsilon) return dist::log_ndtr((grad::logit(p_.epsilon) - m.mean) / m.sd);
  if (y >= 1.0 - p_.epsilon) return dist::log_ndtr((m.mean - grad::logit(1.0 - p_.epsilon)) / m.sd);
  return dist::normal_log_pdf(grad::logit(y), m.mean, m.sd) - std::log(y) - std::log1p(-y);
}

void CesTask::features(std::span<const double> design, std::span<const double> outcome,
                       std::span<double> out) const {
  for (std::size_t i = 0; i < 2 * kGoods; ++i) out[i] = design[i] / p_.design_max;
  out[2 * kGoods] = 2.0 * outcome[0] - 1.0;
  out[2 * kGoods + 1] = grad::logit(outcome[0]) / 16.0;
}

// ---- prey ----

SurvivorResult prey_survivors(double a, double handling, double n0, double hours, int steps) {
  if (a < 0.0 || handling < 0.0 || n0 < 0.0 || steps <= 0) {
    throw ConfigError("prey_survivors: negative rate, handling time or population");
  }
  auto f = [&](double n) { return -a * n * n / (1.0 + a * handling * n * n); };
  const double h = hours / steps;
  double n = n0;
  bool clamped = false;
  for (int s = 0; s < steps; ++s) {
    const double k1 = f(n);
    const double k2 = f(n + 0.5 * h * k1);
    const double k3 = f(n + 0.5 * h * k2);
    const double k4 = f(n + h * k3);
    n += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (n < 0.0) {
      n = 0.0;
      clamped = true;
    }
  }
  return {n, clamped};
}

PreyPopulationTask::PreyPopulationTask(const PreyParams& p, std::size_t horizon)
    : p_(p), a_prior_(p.log_a_mean, p.log_a_sd), th_prior_(p.log_th_mean, p.log_th_sd) {
  if (p.max_population < 1 || !(p.hours > 0.0) || p.ode_steps < 1) {
    throw ConfigError("prey task: need max_population >= 1, hours > 0, ode_steps >= 1");
  }
  design_ = DesignSpace{{1.0}, {static_cast<double>(p.max_population)}, true};
  blocks_ = {{Support::kPositive, 0, 2}};
  set_horizon(horizon);
}

void PreyPopulationTask::sample_prior(dist::Rng& rng, std::span<double> theta) const {
  theta[0] = a_prior_.sample(rng);
  theta[1] = th_prior_.sample(rng);
}

double PreyPopulationTask::prior_log_prob(std::span<const double> theta) const {
  return a_prior_.log_prob(theta[0]) + th_prior_.log_prob(theta[1]);
}

double PreyPopulationTask::prior_entropy() const { return a_prior_.entropy() + th_prior_.entropy(); }

double PreyPopulationTask::kill_probability(std::span<const double> theta, std::int64_t d) const {
  const double n0 = static_cast<double>(d);
  const double n = prey_survivors(theta[0], theta[1], n0, p_.hours, p_.ode_steps).survivors;
  return std::clamp((n0 - n) / n0, 0.0, 1.0);
}

void PreyPopulationTask::simulate(std::span<const double> theta, std::span<const double> design,
                                  dist::Rng& rng, std::span<double> outcome) const {
  check_size(design, 1, "prey design");
  if (!design_.contains(design)) throw ConfigError("prey design must be an integer in [1, max_population]");
  const auto d = static_cast<std::int64_t>(design[0]);
  outcome[0] = static_cast<double>(dist::Binomial(d, kill_probability(theta, d)).sample(rng));
}

double PreyPopulationTask::log_lik_impl(std::span<const double> outcome, std::span<const double> theta,
                                        std::span<const double> design) const {
  const auto d = static_cast<std::int64_t>(design[0]);
  return dist::Binomial(d, kill_probability(theta, d)).log_prob(static_cast<std::int64_t>(outcome[0]));
}

void PreyPopulationTask::features(std::span<const double> design, std::span<const double> outcome,
                                  std::span<double> out) const {
  const double n = static_cast<double>(p_.max_population);
  out[0] = design[0] / n;
  out[1] = outcome[0] / n;
  out[2] = outcome[0] / std::max(design[0], 1.0);
}

}  // namespace boed::env
