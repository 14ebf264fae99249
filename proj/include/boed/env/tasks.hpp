#pragma once

#include <span>
#include <vector>

#include "boed/dist/distributions.hpp"
#include "boed/env/model.hpp"

namespace boed::env {

// theta ~ N(mu0, s0 I_k), y_t ~ N(theta, s I_k); the design is ignored.
class ConjugateGaussianTask : public LikelihoodModel {
 public:
  ConjugateGaussianTask(std::size_t k, double prior_mean, double prior_var, double noise_var,
                        std::size_t horizon);

  std::string name() const override { return "conjugate"; }
  std::size_t theta_dim() const override { return k_; }
  std::size_t outcome_dim() const override { return k_; }
  void sample_prior(dist::Rng& rng, std::span<double> theta) const override;
  double prior_log_prob(std::span<const double> theta) const override;
  double prior_entropy() const override { return prior_.entropy(); }
  void simulate(std::span<const double> theta, std::span<const double> design, dist::Rng& rng,
                std::span<double> outcome) const override;
  void history_log_lik(const History& h, std::span<const double> thetas,
                       std::span<double> out) const override;
  std::size_t feature_dim() const override { return k_; }
  void features(std::span<const double> design, std::span<const double> outcome,
                std::span<double> out) const override;

  const dist::IsotropicGaussian& prior() const noexcept { return prior_; }
  double noise_var() const noexcept { return noise_var_; }
  dist::IsotropicGaussian posterior(const History& h) const;
  double true_eig(std::size_t n) const;

 protected:
  double log_lik_impl(std::span<const double> outcome, std::span<const double> theta,
                      std::span<const double> design) const override;

 private:
  std::size_t k_;
  dist::IsotropicGaussian prior_;
  double noise_var_;
};

struct SourceParams {
  std::size_t sources = 2;
  std::size_t dim = 2;
  double background = 0.1;
  double max_signal = 1e-4;
  double noise_sd = 0.5;
  double bound = 4.0;
};

// mu = b + sum_i 1 / (m + |theta_i - d|^2); theta holds the sources back to back.
double signal_intensity(std::span<const double> theta, std::span<const double> design,
                        const SourceParams& p);

// The outcome is the log-intensity observation log y ~ N(log mu, sigma).
class SourceLocationTask : public LikelihoodModel {
 public:
  SourceLocationTask(const SourceParams& p, std::size_t horizon);

  std::string name() const override { return "source"; }
  std::size_t theta_dim() const override { return p_.sources * p_.dim; }
  std::size_t outcome_dim() const override { return 1; }
  void sample_prior(dist::Rng& rng, std::span<double> theta) const override;
  double prior_log_prob(std::span<const double> theta) const override;
  double prior_entropy() const override;
  void simulate(std::span<const double> theta, std::span<const double> design, dist::Rng& rng,
                std::span<double> outcome) const override;
  std::size_t feature_dim() const override { return p_.dim + 1; }
  void features(std::span<const double> design, std::span<const double> outcome,
                std::span<double> out) const override;
  const SourceParams& params() const noexcept { return p_; }

 protected:
  double log_lik_impl(std::span<const double> outcome, std::span<const double> theta,
                      std::span<const double> design) const override;

 private:
  SourceParams p_;
};

struct CesParams {
  double tau = 0.005;
  double epsilon = 0x1p-22;
  double design_max = 100.0;
  double rho_a = 1.0, rho_b = 1.0;
  double alpha_concentration = 1.0;
  double log_u_mean = 1.0, log_u_sd = 3.0;
};

// theta layout: (rho, alpha_1, alpha_2, u); alpha_3 = 1 - alpha_1 - alpha_2.
// design layout: (x_1..x_3, x'_1..x'_3).
double ces_utility(std::span<const double> x, double rho, std::span<const double> alpha);

class CesTask : public LikelihoodModel {
 public:
  static constexpr std::size_t kGoods = 3;

  CesTask(const CesParams& p, std::size_t horizon);

  std::string name() const override { return "ces"; }
  std::size_t theta_dim() const override { return kGoods + 1; }
  std::size_t outcome_dim() const override { return 1; }
  void sample_prior(dist::Rng& rng, std::span<double> theta) const override;
  double prior_log_prob(std::span<const double> theta) const override;
  double prior_entropy() const override;
  void simulate(std::span<const double> theta, std::span<const double> design, dist::Rng& rng,
                std::span<double> outcome) const override;
  std::size_t feature_dim() const override { return 2 * kGoods + 2; }
  void features(std::span<const double> design, std::span<const double> outcome,
                std::span<double> out) const override;
  const CesParams& params() const noexcept { return p_; }

  struct EtaMoments {
    double mean, sd;
  };
  EtaMoments eta(std::span<const double> theta, std::span<const double> design) const;

 protected:
  double log_lik_impl(std::span<const double> outcome, std::span<const double> theta,
                      std::span<const double> design) const override;

 private:
  CesParams p_;
  dist::Beta rho_prior_;
  dist::Dirichlet alpha_prior_;
  dist::LogNormal u_prior_;
};

struct PreyParams {
  double log_a_mean = -1.4, log_a_sd = 1.35;
  double log_th_mean = -1.4, log_th_sd = 1.35;
  double hours = 24.0;
  std::int64_t max_population = 300;
  int ode_steps = 200;
};

struct SurvivorResult {
  double survivors;
  bool clamped;  // a solver stage went negative and was clamped to 0
};

// Holling type III depletion dN/dt = -a N^2 / (1 + a T_h N^2), RK4 with fixed steps.
SurvivorResult prey_survivors(double a, double handling, double n0, double hours, int steps);

// theta layout: (a, T_h).
class PreyPopulationTask : public LikelihoodModel {
 public:
  PreyPopulationTask(const PreyParams& p, std::size_t horizon);

  std::string name() const override { return "prey"; }
  std::size_t theta_dim() const override { return 2; }
  std::size_t outcome_dim() const override { return 1; }
  void sample_prior(dist::Rng& rng, std::span<double> theta) const override;
  double prior_log_prob(std::span<const double> theta) const override;
  double prior_entropy() const override;
  void simulate(std::span<const double> theta, std::span<const double> design, dist::Rng& rng,
                std::span<double> outcome) const override;
  std::size_t feature_dim() const override { return 3; }
  void features(std::span<const double> design, std::span<const double> outcome,
                std::span<double> out) const override;
  const PreyParams& params() const noexcept { return p_; }

  double kill_probability(std::span<const double> theta, std::int64_t d) const;

 protected:
  double log_lik_impl(std::span<const double> outcome, std::span<const double> theta,
                      std::span<const double> design) const override;

 private:
  PreyParams p_;
  dist::LogNormal a_prior_;
  dist::LogNormal th_prior_;
};

}  // namespace boed::env
