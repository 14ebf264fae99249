#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "boed/est/estimators.hpp"
#include "boed/flow/posterior.hpp"
#include "boed/grad/checkpoint.hpp"
#include "boed/rl/agent.hpp"
#include "boed/rl/mdp.hpp"
#include "boed/rl/replay.hpp"

namespace boed::rl {

enum class RewardMode { kScee, kSpce };

struct TrainConfig {
  std::size_t iterations = 100000;
  double gamma = 0.9;
  double tau = 5e-3;
  double policy_lr = 3e-4;
  double critic_lr = 3e-4;
  double posterior_lr = 1e-3;
  std::size_t buffer_size = 10000000;
  // Transitions per mini-batch; whole episodes are sampled, ceil(batch_size / T) of them.
  std::size_t batch_size = 256;
  std::size_t rollouts_per_iter = 1;
  // 0 means one gradient step per environment step (T * rollouts_per_iter).
  std::size_t updates_per_iter = 0;
  // Episodes with uniformly random designs before the policy acts.
  std::size_t warmup_rollouts = 100;

  std::size_t ensemble = 2;
  std::size_t agent_hidden = 128;
  std::size_t flow_layers = 6;
  std::size_t flow_hidden = 128;
  std::size_t flow_hidden_layers = 2;
  std::size_t embed_dim = 32;
  std::size_t encoder_hidden = 64;
  std::size_t attention_heads = 8;

  RewardMode reward = RewardMode::kScee;
  std::size_t spce_L = 1000;
  bool use_target_posterior = true;
  bool fixed_initial_posterior = true;

  // 0 means every 5% of the iteration budget.
  std::size_t eval_every = 0;
  std::size_t eval_rollouts = 100;
  std::size_t eval_L = 10000;
  // "auto": sPCE when the likelihood is explicit, sCEE otherwise.
  std::string eval_estimator = "auto";
  // 0 means iterations / 100 (at least 1).
  std::size_t log_every = 0;
  std::size_t return_window = 100;
  double divergence_threshold = 1e5;

  std::uint64_t seed = 0;
  bool record_wall_time = false;
};

// Published defaults for the named task (source, ces, prey); other names
// get the generic defaults above.
TrainConfig default_train_config(const std::string& env_name);
// Throws ConfigError on invalid values; returns warnings for settings that
// have no effect.
std::vector<std::string> validate_config(const TrainConfig& cfg);
// Ablation variant with the two posterior toggles set.
TrainConfig ablation_toggles(TrainConfig cfg, bool use_target_posterior, bool fixed_initial_posterior);
std::string ablation_label(const TrainConfig& cfg);

struct LogRow {
  std::size_t iter = 0;
  double return_mean = 0.0;
  double return_stderr = 0.0;
  double posterior_loss = 0.0;
  double policy_loss = 0.0;
  double critic_loss = 0.0;
  std::optional<double> eval_eig;
  std::optional<double> eval_stderr;
  double wall_ms = 0.0;
};

std::string train_log_header();
std::string train_log_row(const LogRow& r, bool with_wall_time);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Trainer;

// Adapter so a trained agent can be rolled out by the estimators.
class LearnedPolicy : public est::DesignPolicy {
 public:
  LearnedPolicy(Trainer& trainer, bool deterministic) : trainer_(trainer), deterministic_(deterministic) {}
  std::string name() const override { return "learned"; }
  void design(const env::History& h, dist::Rng& rng, std::span<double> out) const override;

 private:
  Trainer& trainer_;
  bool deterministic_;
};

// RL-sCEE (or RL-sPCE) training loop.
class Trainer {
 public:
  Trainer(const env::LikelihoodModel& env, const TrainConfig& cfg);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainConfig& config() const noexcept { return cfg_; }
  const env::LikelihoodModel& env() const noexcept { return env_; }
  std::size_t iteration() const noexcept { return iter_; }
  std::size_t horizon() const noexcept { return horizon_; }

  // One training iteration: collect, store, update. Throws DivergenceError.
  void step();
  // Runs the remaining iterations; returns the full log.
  const std::vector<LogRow>& train();
  const std::vector<LogRow>& log() const noexcept { return log_; }

  // Collects one episode with the current policy (or random designs).
  ReplayEntry collect(dist::Rng& rng, bool random_designs);
  // Rewards of an entry under the current encoder and reward posterior.
  std::vector<double> rewards(const ReplayEntry& e);
  // log q(theta | B_t), t = 0..T, under the reward posterior.
  std::vector<double> reward_log_q(const ReplayEntry& e);
  // Policy input from a history.
  std::vector<double> state_of(const env::History& h);

  // Evaluation with the deterministic policy.
  est::EstimateReport evaluate(std::size_t n, std::uint64_t seed, const std::string& estimator = "auto",
                               std::size_t L = 0, std::size_t T = 0);

  grad::Checkpoint checkpoint(const std::map<std::string, std::string>& metadata = {});
  void restore(const grad::Checkpoint& ckpt);

  SacAgent& agent() noexcept { return *agent_; }
  flow::PosteriorModel& posterior() noexcept { return *posterior_; }
  flow::PosteriorModel& target_posterior() noexcept { return *target_; }
  // The posterior used for rewards: the target copy, or the live one when the target is off.
  flow::PosteriorModel& reward_posterior() noexcept {
    return cfg_.use_target_posterior ? *target_ : *posterior_;
  }
  ReplayBuffer& buffer() noexcept { return buffer_; }
  std::size_t clamp_count() const noexcept { return clamped_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

 private:
  struct UpdateLosses {
    double posterior = 0.0;
    double policy = 0.0;
    double critic = 0.0;
  };
  UpdateLosses update();
  void record_return(double r);
  void check_divergence(const UpdateLosses& l);
  std::string eval_estimator_name(const std::string& requested) const;

  const env::LikelihoodModel& env_;
  TrainConfig cfg_;
  std::vector<std::string> warnings_;
  std::size_t horizon_;
  dist::Rng rng_;
  std::unique_ptr<flow::PosteriorModel> posterior_;
  std::unique_ptr<flow::PosteriorModel> target_;
  std::unique_ptr<SacAgent> agent_;
  grad::Adam posterior_opt_;
  ReplayBuffer buffer_;
  std::vector<double> recent_returns_;
  std::size_t recent_pos_ = 0;
  UpdateLosses last_;
  std::size_t iter_ = 0;
  std::size_t clamped_ = 0;
  std::vector<LogRow> log_;
  double wall_start_ms_ = 0.0;
};

}  // namespace boed::rl
