#pragma once

// Every differentiable grad-core op with representative inputs, for the
// finite-difference gradient checks.

#include <vector>

#include "support/finite_diff.hpp"

namespace boed::testing {

struct OpCase {
  const char* name;
  Builder build;
  std::vector<Tensor> inputs;
};

inline Tensor away_from_zero(std::size_t r, std::size_t c, dist::Rng& rng) {
  Tensor t = random_tensor(r, c, rng, 0.1, 1.0);
  for (double& v : t.span()) {
    if (rng.uniform() < 0.5) v = -v;
  }
  return t;
}

inline std::vector<OpCase> op_cases(dist::Rng& rng) {
  using namespace boed::grad;
  std::vector<std::size_t> offsets = {0, 3, 3, 7, 8};
  std::vector<std::size_t> rows = {2, 0, 3, 3};
  std::vector<std::size_t> cols = {1, 0, 2};
  Tensor a = random_tensor(3, 4, rng), b = random_tensor(3, 4, rng);
  Tensor b_min = a;
  for (double& v : b_min.span()) v += rng.uniform() < 0.5 ? 0.3 : -0.3;

  std::vector<OpCase> cases = {
      {"matmul", [](Tape&, const std::vector<Var>& v) { return matmul(v[0], v[1]); },
       {random_tensor(3, 4, rng), random_tensor(4, 2, rng)}},
      {"matmul_nt", [](Tape&, const std::vector<Var>& v) { return matmul_nt(v[0], v[1]); },
       {random_tensor(3, 4, rng), random_tensor(5, 4, rng)}},
      {"affine", [](Tape&, const std::vector<Var>& v) { return affine(v[0], v[1], v[2]); },
       {random_tensor(3, 4, rng), random_tensor(4, 2, rng), random_tensor(1, 2, rng)}},
      {"add(bcast row)", [](Tape&, const std::vector<Var>& v) { return v[0] + v[1]; },
       {a, random_tensor(1, 4, rng)}},
      {"sub(bcast col)", [](Tape&, const std::vector<Var>& v) { return v[0] - v[1]; },
       {a, random_tensor(3, 1, rng)}},
      {"mul", [](Tape&, const std::vector<Var>& v) { return v[0] * v[1]; }, {a, b}},
      {"mul(bcast scalar)", [](Tape&, const std::vector<Var>& v) { return v[0] * v[1]; },
       {a, random_tensor(1, 1, rng)}},
      {"div", [](Tape&, const std::vector<Var>& v) { return v[0] / v[1]; },
       {a, random_tensor(3, 4, rng, 0.5, 2.0)}},
      {"minimum", [](Tape&, const std::vector<Var>& v) { return minimum(v[0], v[1]); }, {a, b_min}},
      {"scale", [](Tape&, const std::vector<Var>& v) { return scale(v[0], -2.5); }, {a}},
      {"tanh", [](Tape&, const std::vector<Var>& v) { return tanh(v[0]); }, {a}},
      {"relu", [](Tape&, const std::vector<Var>& v) { return relu(v[0]); }, {away_from_zero(3, 4, rng)}},
      {"sigmoid", [](Tape&, const std::vector<Var>& v) { return sigmoid(v[0]); }, {a}},
      {"softplus", [](Tape&, const std::vector<Var>& v) { return softplus(v[0]); }, {a}},
      {"exp", [](Tape&, const std::vector<Var>& v) { return exp(v[0]); }, {a}},
      {"log", [](Tape&, const std::vector<Var>& v) { return log(v[0]); },
       {random_tensor(3, 4, rng, 0.2, 3.0)}},
      {"square", [](Tape&, const std::vector<Var>& v) { return square(v[0]); }, {a}},
      {"sum", [](Tape&, const std::vector<Var>& v) { return sum(v[0]); }, {a}},
      {"mean", [](Tape&, const std::vector<Var>& v) { return mean(v[0]); }, {a}},
      {"sum axis0", [](Tape&, const std::vector<Var>& v) { return sum(v[0], 0); }, {a}},
      {"mean axis1", [](Tape&, const std::vector<Var>& v) { return mean(v[0], 1); }, {a}},
      {"logsumexp axis1", [](Tape&, const std::vector<Var>& v) { return logsumexp(v[0], 1); },
       {random_tensor(3, 4, rng, -3, 3)}},
      {"logsumexp axis0", [](Tape&, const std::vector<Var>& v) { return logsumexp(v[0], 0); },
       {random_tensor(3, 4, rng, -3, 3)}},
      {"log_softmax", [](Tape&, const std::vector<Var>& v) { return log_softmax(v[0]); }, {a}},
      {"concat axis1",
       [](Tape&, const std::vector<Var>& v) { return concat({v[0], v[1]}, 1); },
       {a, random_tensor(3, 2, rng)}},
      {"concat axis0",
       [](Tape&, const std::vector<Var>& v) { return concat({v[0], v[1]}, 0); },
       {a, random_tensor(2, 4, rng)}},
      {"slice axis1", [](Tape&, const std::vector<Var>& v) { return slice(v[0], 1, 1, 3); }, {a}},
      {"slice axis0", [](Tape&, const std::vector<Var>& v) { return slice(v[0], 0, 1, 3); }, {a}},
      {"segment_sum",
       [offsets](Tape&, const std::vector<Var>& v) { return segment_sum(v[0], offsets); },
       {random_tensor(8, 3, rng)}},
      {"segment_attention",
       [offsets](Tape&, const std::vector<Var>& v) {
         return segment_attention(v[0], v[1], v[2], offsets, 2);
       },
       {random_tensor(8, 4, rng), random_tensor(8, 4, rng), random_tensor(8, 4, rng)}},
      {"gather_rows", [rows](Tape&, const std::vector<Var>& v) { return gather_rows(v[0], rows); },
       {random_tensor(4, 3, rng)}},
      {"pick", [cols](Tape&, const std::vector<Var>& v) { return pick(v[0], cols); },
       {random_tensor(3, 4, rng)}},
  };
  return cases;
}

}  // namespace boed::testing
