#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "boed/env/model.hpp"

namespace boed::flow {

// Stick-breaking map from R^{k-1} onto the first k-1 coordinates of the
// simplex:
//   v_i = sigmoid(u_i),  w_i = v_i (1 - sum_{j<i} w_j),  theta_i = w_i / (1 - eps)
// with eps the machine epsilon.
struct SimplexForward {
  std::vector<double> theta;
  double log_det;  // log |d theta / d u|
};
SimplexForward simplex_forward(std::span<const double> u);

struct SimplexInverse {
  std::vector<double> u;
  bool clamped;  // some logit argument fell outside (0, 1) and was pulled inside
};
SimplexInverse simplex_inverse(std::span<const double> theta);

// True when every logit argument of simplex_inverse lies strictly inside (0, 1).
bool simplex_interior(std::span<const double> theta);

// Blockwise terminal maps between the flow's unconstrained space x and the
// latent theta: identity, exp, sigmoid, or the stick-breaking stack.
class ConstraintMap {
 public:
  ConstraintMap() = default;
  ConstraintMap(std::vector<env::LatentBlock> blocks, std::size_t dim);

  std::size_t dim() const noexcept { return dim_; }
  const std::vector<env::LatentBlock>& blocks() const noexcept { return blocks_; }

  // theta -> x. Returns log |dx/dtheta|, or -inf (x unspecified) outside the support.
  double to_unconstrained(std::span<const double> theta, std::span<double> x) const;
  // x -> theta. Returns log |dtheta/dx|.
  double to_constrained(std::span<const double> x, std::span<double> theta) const;

 private:
  std::vector<env::LatentBlock> blocks_;
  std::size_t dim_ = 0;
};

}  // namespace boed::flow
