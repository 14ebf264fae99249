#include "boed/flow/coupling.hpp"

#include <cmath>
#include <numbers>

#include "boed/errors.hpp"

namespace boed::flow {

using grad::Tape;
using grad::Tensor;
using grad::Var;

CouplingFlow::CouplingFlow(const std::string& name, const FlowConfig& cfg, dist::Rng& rng) : cfg_(cfg) {
  if (cfg.dim == 0) throw ConfigError("flow dimension must be positive");
  if (cfg.layers == 0) throw ConfigError("flow needs at least one coupling layer");
  if (!(cfg.max_log_scale > 0.0)) throw ConfigError("max_log_scale must be positive");
  std::vector<std::size_t> sizes{cfg.dim + cfg.context_dim};
  for (std::size_t i = 0; i < cfg.hidden_layers; ++i) sizes.push_back(cfg.hidden);
  sizes.push_back(2 * cfg.dim);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    nets_.emplace_back(name + ".coupling" + std::to_string(l), sizes, grad::Activation::kRelu, rng, true);
    Tensor p(1, cfg.dim), a(1, cfg.dim);
    for (std::size_t i = 0; i < cfg.dim; ++i) {
      a[i] = active(l, i) ? 1.0 : 0.0;
      p[i] = 1.0 - a[i];
    }
    passive_.push_back(std::move(p));
    active_.push_back(std::move(a));
  }
}

CouplingFlow::LayerOut CouplingFlow::conditioner(Tape& tape, std::size_t layer, Var x, Var context) {
  Var in = x * tape.constant(passive_[layer]);
  if (cfg_.context_dim > 0) in = grad::concat({in, context}, 1);
  Var out = nets_[layer].forward(tape, in);
  Var mask = tape.constant(active_[layer]);
  const double m = cfg_.max_log_scale;
  Var raw = grad::slice(out, 1, 0, cfg_.dim);
  Var log_scale = grad::tanh(raw * (1.0 / m)) * m * mask;
  Var shift = grad::slice(out, 1, cfg_.dim, 2 * cfg_.dim) * mask;
  return {log_scale, shift};
}

Var CouplingFlow::log_prob(Tape& tape, Var x, Var context) {
  if (x.cols() != cfg_.dim) throw ConfigError("flow input has the wrong width");
  if (cfg_.context_dim > 0 && (context.cols() != cfg_.context_dim || context.rows() != x.rows())) {
    throw ConfigError("flow context has the wrong shape");
  }
  Var z = x;
  Var log_det;
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const auto c = conditioner(tape, l, z, context);
    z = (z - c.shift) * grad::exp(-c.log_scale);
    Var ld = grad::sum(c.log_scale, 1);
    log_det = l == 0 ? ld : log_det + ld;
  }
  const double base_const = -0.5 * static_cast<double>(cfg_.dim) * std::log(2.0 * std::numbers::pi);
  Var base = grad::sum(grad::square(z), 1) * -0.5 + base_const;
  return base - log_det;
}

std::pair<Tensor, std::vector<double>> CouplingFlow::to_base(const Tensor& x, const Tensor& context) {
  Tape tape(false);
  Var z = tape.constant(x);
  Var ctx = tape.constant(context);
  std::vector<double> log_det(x.rows(), 0.0);
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const auto c = conditioner(tape, l, z, ctx);
    z = (z - c.shift) * grad::exp(-c.log_scale);
    const Tensor& s = c.log_scale.value();
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < cfg_.dim; ++j) log_det[i] -= s(i, j);
    }
  }
  return {z.value(), std::move(log_det)};
}

Tensor CouplingFlow::transform_base(const Tensor& z, const Tensor& context) {
  Tape tape(false);
  Var x = tape.constant(z);
  Var ctx = tape.constant(context);
  for (std::size_t l = cfg_.layers; l-- > 0;) {
    const auto c = conditioner(tape, l, x, ctx);
    x = x * grad::exp(c.log_scale) + c.shift;
  }
  return x.value();
}

Tensor CouplingFlow::sample(const Tensor& context, dist::Rng& rng) {
  Tensor z(context.rows(), cfg_.dim);
  for (double& v : z.span()) v = rng.normal();
  return transform_base(z, context);
}

void CouplingFlow::collect(std::vector<grad::Parameter*>& out) {
  for (auto& n : nets_) n.collect(out);
}

}  // namespace boed::flow
