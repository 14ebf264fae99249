#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "boed/dist/rng.hpp"
#include "boed/grad/ops.hpp"

namespace boed::grad {

enum class Activation { kRelu, kTanh };

Var activate(Var x, Activation act);

// Fully connected layer y = x W + b with Glorot-uniform weights.
class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out, dist::Rng& rng, bool zero_init = false);

  Var forward(Tape& tape, Var x);
  std::size_t in() const noexcept { return w_.value.rows(); }
  std::size_t out() const noexcept { return w_.value.cols(); }
  void collect(std::vector<Parameter*>& out);

 private:
  Parameter w_;
  Parameter b_;
};

// Stack of Linear layers with an activation between them (none after the last).
class Mlp {
 public:
  Mlp() = default;
  // sizes = {in, hidden..., out}
  Mlp(std::string name, const std::vector<std::size_t>& sizes, Activation act, dist::Rng& rng,
      bool zero_last = false);

  Var forward(Tape& tape, Var x);
  std::size_t in() const { return layers_.front().in(); }
  std::size_t out() const { return layers_.back().out(); }
  void collect(std::vector<Parameter*>& out);

 private:
  std::vector<Linear> layers_;
  Activation act_ = Activation::kRelu;
};

}  // namespace boed::grad
