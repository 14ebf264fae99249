#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "boed/dist/rng.hpp"
#include "boed/grad/tape.hpp"

namespace boed::testing {

using VecMap = std::function<std::vector<double>(const std::vector<double>&)>;

// log |det J| of f at x from central differences.
inline double numerical_log_abs_det(const VecMap& f, const std::vector<double>& x, double h = 1e-6) {
  const std::size_t n = x.size();
  Eigen::MatrixXd jac(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    auto xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const auto fp = f(xp), fm = f(xm);
    for (std::size_t i = 0; i < n; ++i) jac(i, j) = (fp[i] - fm[i]) / (2 * h);
  }
  return std::log(std::abs(jac.determinant()));
}

inline void jitter_parameters(const std::vector<grad::Parameter*>& params, dist::Rng& rng, double sd) {
  for (auto* p : params) {
    for (double& v : p->value.span()) v += rng.normal(0.0, sd);
  }
}

}  // namespace boed::testing
