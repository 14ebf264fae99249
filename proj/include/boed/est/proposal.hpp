#pragma once

#include <span>
#include <string>

#include "boed/env/tasks.hpp"
#include "boed/est/rollout.hpp"
#include "boed/flow/posterior.hpp"

namespace boed::est {

// A distribution over theta given a history, q(theta | h).
class Proposal {
 public:
  virtual ~Proposal() = default;
  virtual std::string name() const = 0;
  // -inf outside the support.
  virtual double log_prob(std::span<const double> theta, const env::History& h) const = 0;
  // out[i] = log q(theta_i | h_i) for every rollout.
  virtual void log_prob_rollouts(std::span<const Rollout> rollouts, std::span<double> out) const;
  // n draws (row-major n x theta_dim) with their log densities.
  virtual void sample(const env::History& h, std::size_t n, dist::Rng& rng, std::span<double> thetas,
                      std::span<double> log_q) const = 0;
};

// Ignores the history.
class PriorProposal : public Proposal {
 public:
  explicit PriorProposal(const env::LikelihoodModel& env) : env_(env) {}
  std::string name() const override { return "prior"; }
  double log_prob(std::span<const double> theta, const env::History& h) const override;
  void sample(const env::History& h, std::size_t n, dist::Rng& rng, std::span<double> thetas,
              std::span<double> log_q) const override;

 private:
  const env::LikelihoodModel& env_;
};

// Exact conjugate posterior, optionally with its variance multiplied by `inflation`.
class GaussianPosteriorProposal : public Proposal {
 public:
  explicit GaussianPosteriorProposal(const env::ConjugateGaussianTask& task, double inflation = 1.0);
  std::string name() const override { return "analytic"; }
  dist::IsotropicGaussian at(const env::History& h) const;
  double log_prob(std::span<const double> theta, const env::History& h) const override;
  void sample(const env::History& h, std::size_t n, dist::Rng& rng, std::span<double> thetas,
              std::span<double> log_q) const override;

 private:
  const env::ConjugateGaussianTask& task_;
  double inflation_;
};

// A trained conditional flow. Not safe to share between threads.
class FlowProposal : public Proposal {
 public:
  FlowProposal(const env::LikelihoodModel& env, flow::PosteriorModel& model) : env_(env), model_(model) {}
  std::string name() const override { return "flow"; }
  double log_prob(std::span<const double> theta, const env::History& h) const override;
  void log_prob_rollouts(std::span<const Rollout> rollouts, std::span<double> out) const override;
  void sample(const env::History& h, std::size_t n, dist::Rng& rng, std::span<double> thetas,
              std::span<double> log_q) const override;

 private:
  const env::LikelihoodModel& env_;
  flow::PosteriorModel& model_;
};

}  // namespace boed::est
