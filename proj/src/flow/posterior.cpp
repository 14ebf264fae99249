#include "boed/flow/posterior.hpp"

#include <cmath>
#include <limits>

#include "boed/errors.hpp"

namespace boed::flow {

using grad::Tape;
using grad::Tensor;
using grad::Var;

std::size_t PosteriorModel::Prepared::invalid_count() const {
  std::size_t n = 0;
  for (char v : valid) n += v ? 0 : 1;
  return n;
}

PosteriorModel::PosteriorModel(const env::LikelihoodModel& env, const PosteriorConfig& cfg,
                               dist::Rng& rng)
    : map_(env.blocks(), env.theta_dim()),
      loc_("standardize.loc", Tensor(1, env.theta_dim(), 0.0)),
      scale_("standardize.scale", Tensor(1, env.theta_dim(), 1.0)) {
  EncoderConfig ec = cfg.encoder;
  ec.feature_dim = env.feature_dim();
  FlowConfig fc = cfg.flow;
  fc.dim = env.theta_dim();
  fc.context_dim = ec.embed_dim;
  dist::Rng enc_rng = rng.split(1), flow_rng = rng.split(2), std_rng = rng.split(3);
  enc_ = HistoryEncoder("encoder", ec, enc_rng);
  flow_ = CouplingFlow("flow", fc, flow_rng);

  if (cfg.standardize && cfg.standardize_samples > 1) {
    const std::size_t p = env.theta_dim(), n = cfg.standardize_samples;
    std::vector<double> th(p), x(p), s1(p, 0.0), s2(p, 0.0);
    std::size_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
      env.sample_prior(std_rng, th);
      if (!std::isfinite(map_.to_unconstrained(th, x))) continue;
      ++used;
      for (std::size_t j = 0; j < p; ++j) {
        s1[j] += x[j];
        s2[j] += x[j] * x[j];
      }
    }
    if (used > 1) {
      for (std::size_t j = 0; j < p; ++j) {
        const double m = s1[j] / static_cast<double>(used);
        const double var = s2[j] / static_cast<double>(used) - m * m;
        loc_.value[j] = m;
        scale_.value[j] = var > 1e-12 ? std::sqrt(var) : 1.0;
      }
    }
  }
}

PosteriorModel::Prepared PosteriorModel::prepare(const Tensor& theta) const {
  const std::size_t n = theta.rows(), p = map_.dim();
  if (theta.cols() != p) throw ConfigError("theta batch has the wrong width");
  Prepared out{Tensor(n, p), std::vector<double>(n, 0.0), std::vector<char>(n, 1)};
  double log_scale_sum = 0.0;
  for (std::size_t j = 0; j < p; ++j) log_scale_sum += std::log(scale_.value[j]);
  std::vector<double> x(p);
  for (std::size_t i = 0; i < n; ++i) {
    const double ld = map_.to_unconstrained(theta.row_span(i), x);
    if (!std::isfinite(ld)) {
      out.valid[i] = 0;
      continue;
    }
    for (std::size_t j = 0; j < p; ++j) out.x(i, j) = (x[j] - loc_.value[j]) / scale_.value[j];
    out.correction[i] = ld - log_scale_sum;
  }
  return out;
}

Var PosteriorModel::embed(Tape& tape, const HistoryBatch& batch) { return enc_.encode(tape, batch); }

Var PosteriorModel::log_prob(Tape& tape, const Prepared& p, Var embedding) {
  if (embedding.rows() != p.x.rows()) throw ConfigError("theta batch and history batch differ in size");
  Var lp = flow_.log_prob(tape, tape.constant(p.x), embedding);
  return lp + tape.constant(Tensor({p.correction.size(), 1}, p.correction));
}

Var PosteriorModel::log_prob(Tape& tape, const Prepared& p, const HistoryBatch& batch) {
  return log_prob(tape, p, embed(tape, batch));
}

Tensor PosteriorModel::embedding_values(const HistoryBatch& batch) {
  Tape tape(false);
  return embed(tape, batch).value();
}

std::vector<double> PosteriorModel::log_prob_values(const Tensor& theta, const Tensor& embedding) {
  const Prepared p = prepare(theta);
  Tape tape(false);
  Tensor lp = log_prob(tape, p, tape.constant(embedding)).value();
  std::vector<double> out(lp.values());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!p.valid[i]) out[i] = -std::numeric_limits<double>::infinity();
  }
  return out;
}

std::vector<double> PosteriorModel::log_prob_values(const Tensor& theta, const HistoryBatch& batch) {
  return log_prob_values(theta, embedding_values(batch));
}

Tensor PosteriorModel::sample(std::span<const double> embedding, std::size_t n, dist::Rng& rng) {
  const std::size_t p = map_.dim(), c = enc_.embed_dim();
  if (embedding.size() != c) throw ConfigError("embedding has the wrong width");
  Tensor ctx(n, c);
  for (std::size_t i = 0; i < n; ++i) std::copy(embedding.begin(), embedding.end(), ctx.row_span(i).begin());
  const Tensor xs = flow_.sample(ctx, rng);
  Tensor theta(n, p);
  std::vector<double> x(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) x[j] = loc_.value[j] + scale_.value[j] * xs(i, j);
    map_.to_constrained(x, theta.row_span(i));
  }
  return theta;
}

void PosteriorModel::collect(std::vector<grad::Parameter*>& out) {
  enc_.collect(out);
  flow_.collect(out);
}

void PosteriorModel::collect_buffers(std::vector<grad::Parameter*>& out) {
  out.push_back(&loc_);
  out.push_back(&scale_);
}

FitResult fit_posterior_step(PosteriorModel& model, grad::Adam& opt, const Tensor& theta,
                             const HistoryBatch& batch) {
  if (theta.rows() == 0) throw ContractViolation("posterior step on an empty batch");
  const auto prep = model.prepare(theta);
  const std::size_t used = theta.rows() - prep.invalid_count();
  if (used == 0) return {0.0, 0, 0.0};
  Tape tape;
  tape.set_check_finite(false);
  Var lp = model.log_prob(tape, prep, batch);
  const Tensor& v = lp.value();
  Tensor w(theta.rows(), 1);
  for (std::size_t i = 0; i < theta.rows(); ++i) {
    if (!prep.valid[i]) continue;
    if (!std::isfinite(v[i])) {
      throw NumericalFault("posterior log-density is not finite for batch row " + std::to_string(i));
    }
    w[i] = -1.0 / static_cast<double>(used);
  }
  Var loss = grad::sum(lp * tape.constant(w));
  opt.zero_grad();
  tape.backward(loss);
  const double norm = opt.step();
  return {loss.value().item(), used, norm};
}

}  // namespace boed::flow
