#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "boed/dist/rng.hpp"
#include "boed/grad/adam.hpp"
#include "boed/grad/nn.hpp"

namespace boed::rl {

struct AgentConfig {
  std::size_t state_dim = 0;
  // Continuous: action_dim > 0, actions in (-1, 1)^action_dim.
  // Discrete: action_count > 0, actions are indices stored as doubles.
  std::size_t action_dim = 0;
  std::size_t action_count = 0;
  std::size_t hidden = 128;
  std::size_t hidden_layers = 2;
  std::size_t ensemble = 2;
  std::size_t action_embed = 32;  // discrete critic only
  double gamma = 0.9;
  double tau = 5e-3;
  double policy_lr = 3e-4;
  double critic_lr = 3e-4;
  double alpha_lr = 3e-4;
  double init_alpha = 0.1;
  // NaN picks -action_dim (continuous) or 0.6 log(action_count) (discrete).
  double target_entropy = std::numeric_limits<double>::quiet_NaN();
  double min_log_std = -5.0;
  double max_log_std = 1.0;
};

struct Transitions {
  grad::Tensor state;       // n x state_dim
  grad::Tensor action;      // n x action_dim, or n x 1 indices
  grad::Tensor reward;      // n x 1
  grad::Tensor next_state;  // n x state_dim
  grad::Tensor done;        // n x 1, 1 on the last step
};

struct UpdateStats {
  double critic_loss = 0.0;
  double policy_loss = 0.0;
  double alpha = 0.0;
  double entropy = 0.0;
};

// Entropy-regularised actor-critic with an ensemble of critics and
// min-over-ensemble targets.
class SacAgent {
 public:
  // Optimisers hold parameter addresses, so agents stay where they are built.
  SacAgent(const AgentConfig& cfg, dist::Rng& rng);
  SacAgent(const SacAgent&) = delete;
  SacAgent& operator=(const SacAgent&) = delete;

  bool discrete() const noexcept { return cfg_.action_count > 0; }
  std::size_t action_width() const noexcept { return discrete() ? 1 : cfg_.action_dim; }
  const AgentConfig& config() const noexcept { return cfg_; }

  // One action per state row.
  grad::Tensor act(const grad::Tensor& state, dist::Rng& rng, bool deterministic) const;
  UpdateStats update(const Transitions& batch, dist::Rng& rng);
  void update_targets();
  double alpha() const;

  std::vector<grad::Parameter*> policy_parameters();
  std::vector<grad::Parameter*> critic_parameters(std::size_t i);
  std::vector<grad::Parameter*> target_critic_parameters(std::size_t i);
  std::vector<grad::Parameter*> alpha_parameters() { return {&log_alpha_}; }

 private:
  struct Critic {
    grad::Mlp net;
    grad::Parameter action_table;  // discrete: K x action_embed
    grad::Parameter action_bias;   // discrete: 1 x K
    void collect(std::vector<grad::Parameter*>& out);
  };
  Critic make_critic(const std::string& name, dist::Rng& rng) const;
  grad::Var q_values(grad::Tape& tape, Critic& c, grad::Var state, grad::Var action) const;
  grad::Var q_all(grad::Tape& tape, Critic& c, grad::Var state) const;
  UpdateStats update_continuous(const Transitions& b, dist::Rng& rng);
  UpdateStats update_discrete(const Transitions& b);

  AgentConfig cfg_;
  mutable grad::Mlp policy_;
  std::vector<Critic> critics_;
  std::vector<Critic> targets_;
  grad::Parameter log_alpha_;
  grad::Adam policy_opt_;
  grad::Adam critic_opt_;
  grad::Adam alpha_opt_;
  double target_entropy_ = 0.0;
};

// kappa' <- kappa' (1 - tau) + kappa tau, elementwise over matching lists.
void polyak_update(const std::vector<grad::Parameter*>& target, const std::vector<grad::Parameter*>& live,
                   double tau);

}  // namespace boed::rl
