#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "boed/dist/rng.hpp"
#include "boed/grad/nn.hpp"

namespace boed::flow {

struct FlowConfig {
  std::size_t dim = 0;
  std::size_t context_dim = 0;
  std::size_t layers = 6;
  std::size_t hidden = 128;
  std::size_t hidden_layers = 2;
  // Per-layer log-scale is squashed into [-max_log_scale, max_log_scale].
  double max_log_scale = 3.0;
};

// Conditional affine coupling flow on R^dim with a standard normal base.
// Layer l leaves coordinates with (i + l) even unchanged and transforms the
// rest:  z_a = (x_a - t) * exp(-s),  (s, t) = NN_l([x masked | context]).
// The last conditioner layer starts at zero, so every layer starts as the identity.
class CouplingFlow {
 public:
  CouplingFlow() = default;
  CouplingFlow(const std::string& name, const FlowConfig& cfg, dist::Rng& rng);

  // x: (n x dim), context: (n x context_dim). Returns (n x 1) log densities.
  grad::Var log_prob(grad::Tape& tape, grad::Var x, grad::Var context);
  // Data x -> base z with per-row log |dz/dx| (no gradient).
  std::pair<grad::Tensor, std::vector<double>> to_base(const grad::Tensor& x, const grad::Tensor& context);
  // Base draws z -> x (no gradient).
  grad::Tensor transform_base(const grad::Tensor& z, const grad::Tensor& context);
  // One draw per context row.
  grad::Tensor sample(const grad::Tensor& context, dist::Rng& rng);

  const FlowConfig& config() const noexcept { return cfg_; }
  // Whether coordinate i is transformed by layer l.
  bool active(std::size_t layer, std::size_t i) const noexcept { return (i + layer) % 2 == 1; }
  void collect(std::vector<grad::Parameter*>& out);

 private:
  struct LayerOut {
    grad::Var log_scale;  // zero on passive coordinates
    grad::Var shift;      // zero on passive coordinates
  };
  LayerOut conditioner(grad::Tape& tape, std::size_t layer, grad::Var x, grad::Var context);

  FlowConfig cfg_;
  std::vector<grad::Mlp> nets_;
  std::vector<grad::Tensor> passive_;
  std::vector<grad::Tensor> active_;
};

}  // namespace boed::flow
