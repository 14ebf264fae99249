#include "boed/grad/adam.hpp"

#include <cmath>

#include "boed/errors.hpp"

namespace boed::grad {

void adam_step(Parameter& p, AdamMoments& state, const AdamConfig& cfg, std::size_t step,
               double grad_scale) {
  p.ensure_grad();
  if (!state.m.same_shape(p.value)) {
    if (!state.m.empty()) throw ConfigError("adam_step: moment shape mismatch for " + p.name);
    state.m = Tensor(p.value.shape(), std::vector<double>(p.value.size(), 0.0));
    state.v = state.m;
  }
  if (step == 0) throw ContractViolation("adam_step: step count is 1-based");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const double g = p.grad[i] * grad_scale;
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

double global_grad_norm(const std::vector<Parameter*>& params) {
  double s = 0.0;
  for (const Parameter* p : params) {
    for (double g : p->grad.span()) s += g * g;
  }
  return std::sqrt(s);
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), moments_(params_.size()), cfg_(cfg) {
  for (Parameter* p : params_) p->ensure_grad();
}

double Adam::step() {
  ++steps_;
  const double norm = global_grad_norm(params_);
  if (!std::isfinite(norm)) throw NumericalFault("non-finite gradient norm in Adam step");
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
  for (std::size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], moments_[i], cfg_, steps_, scale);
  zero_grad();
  return norm;
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace boed::grad
