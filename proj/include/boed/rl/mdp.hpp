#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "boed/dist/rng.hpp"
#include "boed/env/model.hpp"
#include "boed/flow/encoder.hpp"

namespace boed::rl {

// Lower clamp applied to log q before differencing, so rewards stay finite.
inline constexpr double kLogQFloor = -1e6;

struct SedMdpState {
  std::vector<double> embedding;      // B_t; zero at t = 0
  std::vector<double> last_features;  // encoder features of step t; zero at t = 0
  std::size_t t = 0;
  // sPCE mode: log C_t over (theta_0, theta_1..theta_L); log C_0 = 0.
  std::vector<double> log_c;
};

// What the policy sees: [B_t | last_features | t / T].
std::vector<double> policy_input(const SedMdpState& s, std::size_t horizon);
std::size_t policy_input_dim(const env::LikelihoodModel& env, std::size_t embed_dim);

// Maps a policy action to a design: a point of (-1, 1)^d is rescaled onto the
// box; a discrete action index k becomes lower + k.
void design_from_action(const env::DesignSpace& space, std::span<const double> action, std::span<double> design);
std::size_t action_count(const env::DesignSpace& space);

// log C_t = log C_{t-1} + per-theta step log-likelihoods (Hadamard product in log space).
void accumulate_log_c(std::span<double> log_c, std::span<const double> step_log_lik);
// log p(y_t | theta_0, d_t) - log(C_t . 1) + log(C_{t-1} . 1); index 0 is theta_0.
double spce_reward(std::span<const double> log_c_prev, std::span<const double> log_c_next);

// log q(theta | B_t) - log q(theta | B_{t-1}).
double scee_reward(double log_q_t, double log_q_prev);
// Rewards for t = 1..T from log q at B_0..B_T. With fixed_initial the B_0
// term is taken as 0 instead of log_q[0].
std::vector<double> scee_rewards(std::span<const double> log_q, bool fixed_initial);

class SedMdp {
 public:
  // contrastive > 0 or spce_mode turns on the C_t accumulator (with L = contrastive).
  SedMdp(const env::LikelihoodModel& env, flow::HistoryEncoder& encoder, std::size_t horizon,
         bool spce_mode = false, std::size_t contrastive = 0);

  const SedMdpState& reset(std::span<const double> theta, dist::Rng& rng);
  struct Step {
    double reward = 0.0;  // sPCE mode only; 0 otherwise
    bool done = false;
    bool clamped = false;
  };
  // Throws ContractViolation once the episode is complete.
  Step step(std::span<const double> design, dist::Rng& rng);

  const SedMdpState& state() const noexcept { return state_; }
  const env::History& history() const noexcept { return history_; }
  const std::vector<double>& theta() const noexcept { return theta_; }
  // (L+1) x theta_dim: theta_0 followed by the contrastive draws.
  const std::vector<double>& contrast_thetas() const noexcept { return thetas_; }
  bool spce_mode() const noexcept { return spce_; }

 private:
  void refresh_embedding();

  const env::LikelihoodModel& env_;
  flow::HistoryEncoder& encoder_;
  std::size_t horizon_;
  bool spce_;
  std::size_t contrastive_;
  std::vector<double> theta_;
  std::vector<double> thetas_;
  env::History history_;
  SedMdpState state_;
};

}  // namespace boed::rl
