#include "boed/rl/mdp.hpp"

#include <algorithm>
#include <cmath>

#include "boed/errors.hpp"
#include "boed/grad/ops.hpp"

namespace boed::rl {

std::vector<double> policy_input(const SedMdpState& s, std::size_t horizon) {
  std::vector<double> v(s.embedding);
  v.insert(v.end(), s.last_features.begin(), s.last_features.end());
  v.push_back(static_cast<double>(s.t) / static_cast<double>(std::max<std::size_t>(horizon, 1)));
  return v;
}

std::size_t policy_input_dim(const env::LikelihoodModel& env, std::size_t embed_dim) {
  return embed_dim + env.feature_dim() + 1;
}

void design_from_action(const env::DesignSpace& space, std::span<const double> action, std::span<double> design) {
  if (space.discrete) {
    design[0] = space.lower[0] + std::round(action[0]);
    return;
  }
  for (std::size_t j = 0; j < space.dim(); ++j) {
    design[j] = space.lower[j] + 0.5 * (action[j] + 1.0) * (space.upper[j] - space.lower[j]);
  }
}

std::size_t action_count(const env::DesignSpace& space) {
  return space.discrete ? static_cast<std::size_t>(space.count()) : 0;
}

void accumulate_log_c(std::span<double> log_c, std::span<const double> step_log_lik) {
  if (log_c.size() != step_log_lik.size()) throw ContractViolation("accumulator and likelihood sizes differ");
  for (std::size_t i = 0; i < log_c.size(); ++i) log_c[i] += step_log_lik[i];
}

double spce_reward(std::span<const double> log_c_prev, std::span<const double> log_c_next) {
  if (log_c_prev.empty() || log_c_prev.size() != log_c_next.size()) {
    throw ContractViolation("accumulators must be non-empty and of equal size");
  }
  return (log_c_next[0] - log_c_prev[0]) - grad::logsumexp(log_c_next) + grad::logsumexp(log_c_prev);
}

double scee_reward(double log_q_t, double log_q_prev) {
  return std::max(log_q_t, kLogQFloor) - std::max(log_q_prev, kLogQFloor);
}

std::vector<double> scee_rewards(std::span<const double> log_q, bool fixed_initial) {
  if (log_q.empty()) throw ContractViolation("need log q at B_0");
  std::vector<double> r(log_q.size() - 1);
  for (std::size_t t = 1; t < log_q.size(); ++t) {
    const double prev = (t == 1 && fixed_initial) ? 0.0 : log_q[t - 1];
    r[t - 1] = scee_reward(log_q[t], prev);
  }
  return r;
}

SedMdp::SedMdp(const env::LikelihoodModel& env, flow::HistoryEncoder& encoder, std::size_t horizon, bool spce_mode,
               std::size_t contrastive)
    : env_(env), encoder_(encoder), horizon_(horizon), spce_(spce_mode || contrastive > 0),
      contrastive_(contrastive), history_(env.empty_history()) {
  if (horizon == 0) throw ConfigError("episode length must be positive");
  if (spce_ && !env.explicit_likelihood()) throw CapabilityError("sPCE rewards need an explicit likelihood");
}

void SedMdp::refresh_embedding() {
  grad::Tape tape(false);
  const auto v = encoder_.encode(tape, flow::make_history_batch(env_, history_)).value();
  state_.embedding.assign(v.span().begin(), v.span().end());
}

const SedMdpState& SedMdp::reset(std::span<const double> theta, dist::Rng& rng) {
  if (theta.size() != env_.theta_dim()) throw ContractViolation("theta has the wrong dimension");
  theta_.assign(theta.begin(), theta.end());
  history_.clear();
  state_ = SedMdpState{};
  state_.embedding.assign(encoder_.embed_dim(), 0.0);
  state_.last_features.assign(env_.feature_dim(), 0.0);
  if (spce_) {
    const std::size_t p = env_.theta_dim();
    thetas_.assign((contrastive_ + 1) * p, 0.0);
    std::copy(theta.begin(), theta.end(), thetas_.begin());
    for (std::size_t l = 1; l <= contrastive_; ++l) env_.sample_prior(rng, std::span<double>(thetas_).subspan(l * p, p));
    state_.log_c.assign(contrastive_ + 1, 0.0);
  }
  return state_;
}

SedMdp::Step SedMdp::step(std::span<const double> design, dist::Rng& rng) {
  if (state_.t >= horizon_) throw ContractViolation("episode is complete");
  if (theta_.empty()) throw ContractViolation("step before reset");
  Step out;
  std::vector<double> d(design.begin(), design.end()), y(env_.outcome_dim());
  out.clamped = env_.design_space().clamp(d);
  env_.simulate(theta_, d, rng, y);
  history_.push(d, y);
  if (spce_) {
    std::vector<double> ll(contrastive_ + 1);
    env_.log_lik_many(y, d, thetas_, ll);
    const auto prev = state_.log_c;
    accumulate_log_c(state_.log_c, ll);
    out.reward = spce_reward(prev, state_.log_c);
  }
  env_.features(d, y, state_.last_features);
  ++state_.t;
  refresh_embedding();
  out.done = state_.t == horizon_;
  return out;
}

}  // namespace boed::rl
