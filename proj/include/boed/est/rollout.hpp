#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "boed/dist/rng.hpp"
#include "boed/env/model.hpp"

namespace boed::est {

struct Rollout {
  std::vector<double> theta;
  env::History history;
  // Number of designs the policy proposed outside the design space.
  std::size_t clamped = 0;
};

class DesignPolicy {
 public:
  virtual ~DesignPolicy() = default;
  virtual std::string name() const = 0;
  // Next design given the history so far. May return a point outside the
  // design space; rollout_policy clamps and counts it.
  virtual void design(const env::History& h, dist::Rng& rng, std::span<double> out) const = 0;
};

class ConstantPolicy : public DesignPolicy {
 public:
  explicit ConstantPolicy(std::vector<double> d) : d_(std::move(d)) {}
  std::string name() const override { return "constant"; }
  void design(const env::History& h, dist::Rng& rng, std::span<double> out) const override;

 private:
  std::vector<double> d_;
};

// Uniform over the box, or over the integers of a discrete space.
class RandomPolicy : public DesignPolicy {
 public:
  explicit RandomPolicy(env::DesignSpace space) : space_(std::move(space)) {}
  std::string name() const override { return "random"; }
  void design(const env::History& h, dist::Rng& rng, std::span<double> out) const override;

 private:
  env::DesignSpace space_;
};

// n rollouts of length T (0 means env.horizon()). Rollout i draws everything
// from rng.split(i).
std::vector<Rollout> rollout_policy(const env::LikelihoodModel& env, const DesignPolicy& policy,
                                    const dist::Rng& rng, std::size_t n, std::size_t T = 0,
                                    std::size_t workers = 1);

std::size_t total_clamped(std::span<const Rollout> rollouts);

}  // namespace boed::est
