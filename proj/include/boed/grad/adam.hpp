#pragma once

#include <cstddef>
#include <vector>

#include "boed/grad/tape.hpp"

namespace boed::grad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global-norm clipping threshold; <= 0 disables clipping.
  double clip_norm = 0.0;
};

struct AdamMoments {
  Tensor m;
  Tensor v;
};

// One bias-corrected Adam update of `p` from p.grad. `step` is the 1-based
// update count used for bias correction.
void adam_step(Parameter& p, AdamMoments& state, const AdamConfig& cfg, std::size_t step,
               double grad_scale = 1.0);

double global_grad_norm(const std::vector<Parameter*>& params);

// Adam over a fixed parameter list. step() consumes the accumulated grads and
// zeroes them.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  // Returns the gradient norm before clipping.
  double step();
  void zero_grad();
  const AdamConfig& config() const noexcept { return cfg_; }
  std::size_t steps() const noexcept { return steps_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamMoments> moments_;
  AdamConfig cfg_;
  std::size_t steps_ = 0;
};

}  // namespace boed::grad
