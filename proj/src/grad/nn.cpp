#include "boed/grad/nn.hpp"

#include <cmath>

#include "boed/errors.hpp"

namespace boed::grad {

Var activate(Var x, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return relu(x);
    case Activation::kTanh:
      return tanh(x);
  }
  return x;
}

Linear::Linear(std::string name, std::size_t in, std::size_t out, dist::Rng& rng, bool zero_init)
    : w_(name + ".w", Tensor(in, out)), b_(name + ".b", Tensor(1, out)) {
  if (in == 0 || out == 0) throw ConfigError("Linear '" + name + "' with zero width");
  if (!zero_init) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : w_.value.span()) v = rng.uniform(-limit, limit);
  }
}

Var Linear::forward(Tape& tape, Var x) { return affine(x, tape.param(w_), tape.param(b_)); }

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&w_);
  out.push_back(&b_);
}

Mlp::Mlp(std::string name, const std::vector<std::size_t>& sizes, Activation act, dist::Rng& rng,
         bool zero_last)
    : act_(act) {
  if (sizes.size() < 2) throw ConfigError("Mlp '" + name + "' needs at least input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const bool last = i + 2 == sizes.size();
    layers_.emplace_back(name + "." + std::to_string(i), sizes[i], sizes[i + 1], rng, last && zero_last);
  }
}

Var Mlp::forward(Tape& tape, Var x) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i].forward(tape, x);
    if (i + 1 < layers_.size()) x = activate(x, act_);
  }
  return x;
}

void Mlp::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers_) l.collect(out);
}

}  // namespace boed::grad
