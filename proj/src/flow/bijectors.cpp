#include "boed/flow/bijectors.hpp"

#include <cmath>
#include <limits>

#include "boed/errors.hpp"
#include "boed/grad/ops.hpp"

namespace boed::flow {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

}  // namespace

SimplexForward simplex_forward(std::span<const double> u) {
  SimplexForward out{std::vector<double>(u.size()), 0.0};
  // log of the remaining stick, 1 - sum_{j<i} w_j = prod_{j<i} (1 - v_j)
  double log_rest = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double log_v = -grad::softplus(-u[i]);
    const double log_1mv = -grad::softplus(u[i]);
    out.theta[i] = std::exp(log_v + log_rest) / (1.0 - kEps);
    out.log_det += log_v + log_1mv + log_rest;
    log_rest += log_1mv;
  }
  out.log_det -= static_cast<double>(u.size()) * std::log1p(-kEps);
  return out;
}

SimplexInverse simplex_inverse(std::span<const double> theta) {
  SimplexInverse out{std::vector<double>(theta.size()), false};
  double used = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double w = (1.0 - kEps) * theta[i];
    double s = w / (1.0 - used);
    if (!(s > 0.0 && s < 1.0)) {
      s = std::isnan(s) ? 0.5 : std::min(std::max(s, kEps), 1.0 - kEps);
      out.clamped = true;
    }
    out.u[i] = grad::logit(s);
    used += w;
  }
  return out;
}

bool simplex_interior(std::span<const double> theta) {
  double used = 0.0;
  for (double t : theta) {
    const double w = (1.0 - kEps) * t;
    const double s = w / (1.0 - used);
    if (!(s > 0.0 && s < 1.0)) return false;
    used += w;
  }
  return true;
}

ConstraintMap::ConstraintMap(std::vector<env::LatentBlock> blocks, std::size_t dim)
    : blocks_(std::move(blocks)), dim_(dim) {
  std::size_t covered = 0;
  for (const auto& b : blocks_) {
    if (b.offset != covered) throw ConfigError("latent blocks must tile theta in order");
    covered += b.size;
  }
  if (covered != dim) throw ConfigError("latent blocks do not cover theta");
}

double ConstraintMap::to_unconstrained(std::span<const double> theta, std::span<double> x) const {
  double ld = 0.0;
  for (const auto& b : blocks_) {
    const auto th = theta.subspan(b.offset, b.size);
    auto xs = x.subspan(b.offset, b.size);
    switch (b.support) {
      case env::Support::kReal:
        for (std::size_t i = 0; i < b.size; ++i) {
          if (!std::isfinite(th[i])) return kNegInf;
          xs[i] = th[i];
        }
        break;
      case env::Support::kPositive:
        for (std::size_t i = 0; i < b.size; ++i) {
          if (!(th[i] > 0.0) || !std::isfinite(th[i])) return kNegInf;
          xs[i] = std::log(th[i]);
          ld -= xs[i];
        }
        break;
      case env::Support::kUnitInterval:
        for (std::size_t i = 0; i < b.size; ++i) {
          if (!(th[i] > 0.0 && th[i] < 1.0)) return kNegInf;
          xs[i] = grad::logit(th[i]);
          ld -= std::log(th[i]) + std::log1p(-th[i]);
        }
        break;
      case env::Support::kSimplex: {
        if (!simplex_interior(th)) return kNegInf;
        const auto inv = simplex_inverse(th);
        for (std::size_t i = 0; i < b.size; ++i) xs[i] = inv.u[i];
        ld -= simplex_forward(inv.u).log_det;
        break;
      }
    }
  }
  return ld;
}

double ConstraintMap::to_constrained(std::span<const double> x, std::span<double> theta) const {
  double ld = 0.0;
  for (const auto& b : blocks_) {
    const auto xs = x.subspan(b.offset, b.size);
    auto th = theta.subspan(b.offset, b.size);
    switch (b.support) {
      case env::Support::kReal:
        for (std::size_t i = 0; i < b.size; ++i) th[i] = xs[i];
        break;
      case env::Support::kPositive:
        for (std::size_t i = 0; i < b.size; ++i) {
          th[i] = std::exp(xs[i]);
          ld += xs[i];
        }
        break;
      case env::Support::kUnitInterval:
        for (std::size_t i = 0; i < b.size; ++i) {
          th[i] = grad::sigmoid(xs[i]);
          ld += -grad::softplus(-xs[i]) - grad::softplus(xs[i]);
        }
        break;
      case env::Support::kSimplex: {
        const auto f = simplex_forward(xs);
        for (std::size_t i = 0; i < b.size; ++i) th[i] = f.theta[i];
        ld += f.log_det;
        break;
      }
    }
  }
  return ld;
}

}  // namespace boed::flow
