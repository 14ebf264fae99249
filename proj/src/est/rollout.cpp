#include "boed/est/rollout.hpp"

#include <algorithm>
#include <cmath>

#include "boed/errors.hpp"
#include "boed/est/parallel.hpp"

namespace boed::est {

void ConstantPolicy::design(const env::History&, dist::Rng&, std::span<double> out) const {
  if (out.size() != d_.size()) throw ConfigError("constant design has the wrong dimension");
  std::copy(d_.begin(), d_.end(), out.begin());
}

void RandomPolicy::design(const env::History&, dist::Rng& rng, std::span<double> out) const {
  if (out.size() != space_.dim()) throw ConfigError("design buffer has the wrong dimension");
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (space_.discrete) {
      out[j] = static_cast<double>(rng.uniform_int(static_cast<std::int64_t>(std::ceil(space_.lower[j])),
                                                   static_cast<std::int64_t>(std::floor(space_.upper[j]))));
    } else {
      out[j] = rng.uniform(space_.lower[j], space_.upper[j]);
    }
  }
}

std::vector<Rollout> rollout_policy(const env::LikelihoodModel& env, const DesignPolicy& policy,
                                    const dist::Rng& rng, std::size_t n, std::size_t T,
                                    std::size_t workers) {
  if (T == 0) T = env.horizon();
  std::vector<Rollout> out(n);
  parallel_for(n, workers, [&](std::size_t i) {
    dist::Rng r = rng.split(i);
    Rollout& ro = out[i];
    ro.theta.resize(env.theta_dim());
    ro.history = env.empty_history();
    env.sample_prior(r, ro.theta);
    std::vector<double> d(env.design_space().dim()), y(env.outcome_dim());
    for (std::size_t t = 0; t < T; ++t) {
      policy.design(ro.history, r, d);
      if (env.design_space().clamp(d)) ++ro.clamped;
      env.simulate(ro.theta, d, r, y);
      ro.history.push(d, y);
    }
  });
  return out;
}

std::size_t total_clamped(std::span<const Rollout> rollouts) {
  std::size_t c = 0;
  for (const auto& r : rollouts) c += r.clamped;
  return c;
}

}  // namespace boed::est
