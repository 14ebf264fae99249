#pragma once

// Central-difference gradient oracle for grad-core ops. Independent of the
// tape: it only ever evaluates forward values.

#include <cmath>
#include <functional>
#include <vector>

#include "boed/dist/rng.hpp"
#include "boed/grad/ops.hpp"

namespace boed::testing {

using grad::Tape;
using grad::Tensor;
using grad::Var;

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

inline Tensor random_tensor(std::size_t r, std::size_t c, dist::Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Tensor t(r, c);
  for (double& v : t.span()) v = rng.uniform(lo, hi);
  return t;
}

inline bool grad_close(double analytic, double numeric, double rel = 1e-4, double abs_floor = 1e-6) {
  const double diff = std::abs(analytic - numeric);
  return diff <= abs_floor || diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

// Scalarises the builder output with fixed random weights so every output
// element contributes to the checked gradient.
struct GradCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst = 0.0;
};

inline GradCheck check_op_gradient(const Builder& build, std::vector<Tensor> inputs, dist::Rng& rng,
                                   double h = 1e-5, double rel = 1e-4) {
  Tensor weights;
  auto scalar_value = [&](const std::vector<Tensor>& xs) {
    Tape tape(false);
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(tape.constant(x));
    const Tensor& out = build(tape, vars).value();
    if (weights.empty()) weights = random_tensor(out.rows(), out.cols(), rng, 0.5, 1.5);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
    return s;
  };
  scalar_value(inputs);

  Tape tape;
  std::vector<Var> vars;
  for (const auto& x : inputs) vars.push_back(tape.input(x));
  Var out = build(tape, vars);
  Var loss = grad::sum(grad::mul(out, tape.constant(weights)));
  tape.backward(loss);

  GradCheck res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor analytic = tape.grad(vars[k]);
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs, minus = inputs;
      plus[k][i] += h;
      minus[k][i] -= h;
      const double numeric = (scalar_value(plus) - scalar_value(minus)) / (2 * h);
      ++res.checked;
      const double diff = std::abs(analytic[i] - numeric);
      res.worst = std::max(res.worst, diff);
      if (!grad_close(analytic[i], numeric, rel)) ++res.failures;
    }
  }
  return res;
}

}  // namespace boed::testing
