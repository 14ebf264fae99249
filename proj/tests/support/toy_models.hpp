#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <string>

#include "boed/env/model.hpp"
#include "boed/est/proposal.hpp"

namespace boed::testing {

// theta in {0, 1} with P(theta = 1) = prior1; y ~ Bernoulli(hit[theta]). The design is ignored.
class TwoPointModel : public env::LikelihoodModel {
 public:
  TwoPointModel(double prior1, double hit0, double hit1, std::size_t horizon = 1)
      : prior1_(prior1), hit_{hit0, hit1} {
    design_ = env::DesignSpace{{0.0}, {1.0}, false};
    blocks_ = {{env::Support::kReal, 0, 1}};
    set_horizon(horizon);
  }

  std::string name() const override { return "two_point"; }
  std::size_t theta_dim() const override { return 1; }
  std::size_t outcome_dim() const override { return 1; }
  void sample_prior(dist::Rng& rng, std::span<double> theta) const override {
    theta[0] = rng.uniform() < prior1_ ? 1.0 : 0.0;
  }
  double prior_log_prob(std::span<const double> theta) const override {
    if (theta[0] == 1.0) return std::log(prior1_);
    if (theta[0] == 0.0) return std::log1p(-prior1_);
    return -std::numeric_limits<double>::infinity();
  }
  double prior_entropy() const override {
    return -prior1_ * std::log(prior1_) - (1 - prior1_) * std::log1p(-prior1_);
  }
  void simulate(std::span<const double> theta, std::span<const double>, dist::Rng& rng,
                std::span<double> y) const override {
    y[0] = rng.uniform() < hit_[theta[0] == 1.0] ? 1.0 : 0.0;
  }
  std::size_t feature_dim() const override { return 1; }
  void features(std::span<const double>, std::span<const double> y, std::span<double> out) const override {
    out[0] = y[0];
  }

  // I(theta; y) for a single observation, by enumeration.
  double exact_eig() const {
    const double pt[2] = {1 - prior1_, prior1_};
    double mi = 0;
    for (int y = 0; y < 2; ++y) {
      double py = 0;
      for (int t = 0; t < 2; ++t) py += pt[t] * lik(y, t);
      for (int t = 0; t < 2; ++t) mi += pt[t] * lik(y, t) * std::log(lik(y, t) / py);
    }
    return mi;
  }
  double lik(int y, int t) const { return y ? hit_[t] : 1 - hit_[t]; }

 protected:
  double log_lik_impl(std::span<const double> y, std::span<const double> theta,
                      std::span<const double>) const override {
    return std::log(lik(y[0] == 1.0, theta[0] == 1.0));
  }

 private:
  double prior1_;
  double hit_[2];
};

// q(theta = 1 | h) = lean if the last outcome is 1, else 1 - lean.
class LeaningProposal : public est::Proposal {
 public:
  explicit LeaningProposal(double lean) : lean_(lean) {}
  std::string name() const override { return "leaning"; }
  double p1(const env::History& h) const {
    if (h.empty()) return 0.5;
    return h.outcome(h.size() - 1)[0] == 1.0 ? lean_ : 1 - lean_;
  }
  double log_prob(std::span<const double> theta, const env::History& h) const override {
    if (theta[0] == 1.0) return std::log(p1(h));
    if (theta[0] == 0.0) return std::log(1 - p1(h));
    return -std::numeric_limits<double>::infinity();
  }
  void sample(const env::History& h, std::size_t n, dist::Rng& rng, std::span<double> thetas,
              std::span<double> log_q) const override {
    for (std::size_t i = 0; i < n; ++i) {
      thetas[i] = rng.uniform() < p1(h) ? 1.0 : 0.0;
      log_q[i] = log_prob(thetas.subspan(i, 1), h);
    }
  }

 private:
  double lean_;
};

}  // namespace boed::testing
