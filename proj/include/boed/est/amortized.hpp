#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "boed/est/rollout.hpp"
#include "boed/flow/posterior.hpp"

namespace boed::est {

// Simulation-based fit of q(theta | h) on a fixed set of rollouts from one
// policy, with a held-out split and early stopping on its loss.
struct OfflineFitConfig {
  std::size_t samples = 20000;  // total simulated (theta, history) pairs
  double validation_fraction = 0.1;
  std::size_t batch = 256;
  std::size_t epochs = 30;
  std::size_t patience = 6;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct OfflineFitReport {
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
};

// On return the model holds the parameters of the best validation epoch.
OfflineFitReport fit_posterior_offline(const env::LikelihoodModel& env, const DesignPolicy& policy,
                                       flow::PosteriorModel& model, const OfflineFitConfig& cfg);

}  // namespace boed::est
