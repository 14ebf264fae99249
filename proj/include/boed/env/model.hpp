#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "boed/dist/rng.hpp"
#include "boed/env/history.hpp"

namespace boed::env {

struct DesignSpace {
  // Continuous: a box. Discrete: one integer coordinate in [lower[0], upper[0]].
  std::vector<double> lower;
  std::vector<double> upper;
  bool discrete = false;

  std::size_t dim() const noexcept { return lower.size(); }
  std::int64_t count() const;
  bool contains(std::span<const double> d) const;
  // Projects d into the space (rounding discrete designs). Returns true if d changed.
  bool clamp(std::span<double> d) const;
};

enum class Support { kReal, kPositive, kUnitInterval, kSimplex };

// A run of theta coordinates sharing one constraint. A simplex block of size
// s stores s coordinates of an (s+1)-component probability vector.
struct LatentBlock {
  Support support;
  std::size_t offset;
  std::size_t size;
};

class LikelihoodModel {
 public:
  virtual ~LikelihoodModel() = default;

  virtual std::string name() const = 0;
  virtual std::size_t theta_dim() const = 0;
  virtual std::size_t outcome_dim() const = 0;
  const DesignSpace& design_space() const noexcept { return design_; }
  const std::vector<LatentBlock>& blocks() const noexcept { return blocks_; }
  std::size_t horizon() const noexcept { return horizon_; }
  void set_horizon(std::size_t t);

  virtual void sample_prior(dist::Rng& rng, std::span<double> theta) const = 0;
  virtual double prior_log_prob(std::span<const double> theta) const = 0;
  virtual double prior_entropy() const = 0;

  virtual void simulate(std::span<const double> theta, std::span<const double> design,
                        dist::Rng& rng, std::span<double> outcome) const = 0;

  bool explicit_likelihood() const noexcept { return !implicit_; }
  void set_implicit(bool on) noexcept { implicit_ = on; }

  // Throws CapabilityError in implicit mode.
  double log_lik(std::span<const double> outcome, std::span<const double> theta,
                 std::span<const double> design) const;
  // out[i] = log p(y | thetas row i, d); thetas is row-major (n x theta_dim).
  virtual void log_lik_many(std::span<const double> outcome, std::span<const double> design,
                            std::span<const double> thetas, std::span<double> out) const;
  // out[i] = sum_t log p(y_t | thetas row i, d_t).
  virtual void history_log_lik(const History& h, std::span<const double> thetas,
                               std::span<double> out) const;

  // Normalised per-step features for the history encoder.
  virtual std::size_t feature_dim() const = 0;
  virtual void features(std::span<const double> design, std::span<const double> outcome,
                        std::span<double> out) const = 0;

  History empty_history() const { return History(design_.dim(), outcome_dim()); }

 protected:
  virtual double log_lik_impl(std::span<const double> outcome, std::span<const double> theta,
                              std::span<const double> design) const = 0;
  void require_explicit() const;

  DesignSpace design_;
  std::vector<LatentBlock> blocks_;
  std::size_t horizon_ = 1;
  bool implicit_ = false;
};

using ParamMap = std::map<std::string, double>;

// Known names: conjugate, source, ces, prey. Overrides must use keys present
// in default_parameters(name); anything else is a ConfigError.
std::vector<std::string> environment_names();
ParamMap default_parameters(const std::string& name);
std::unique_ptr<LikelihoodModel> make_environment(const std::string& name,
                                                  const ParamMap& overrides = {});

}  // namespace boed::env
