#include "boed/flow/encoder.hpp"

#include "boed/errors.hpp"

namespace boed::flow {

using grad::Tape;
using grad::Tensor;
using grad::Var;

HistoryBatch make_history_batch(const env::LikelihoodModel& env,
                                std::span<const env::History* const> histories) {
  std::size_t rows = 0;
  for (const auto* h : histories) rows += h->size();
  const std::size_t f = env.feature_dim();
  HistoryBatch b;
  b.features = Tensor(rows, f);
  b.offsets.reserve(histories.size() + 1);
  std::size_t r = 0;
  for (const auto* h : histories) {
    if (h->design_dim() != env.design_space().dim() || h->outcome_dim() != env.outcome_dim()) {
      throw ContractViolation("history does not match the environment schema");
    }
    for (std::size_t t = 0; t < h->size(); ++t, ++r) {
      env.features(h->design(t), h->outcome(t), b.features.row_span(r));
    }
    b.offsets.push_back(r);
  }
  return b;
}

HistoryBatch make_history_batch(const env::LikelihoodModel& env, const env::History& h) {
  const env::History* one[1] = {&h};
  return make_history_batch(env, one);
}

HistoryEncoder::HistoryEncoder(const std::string& name, const EncoderConfig& cfg, dist::Rng& rng)
    : cfg_(cfg) {
  if (cfg.feature_dim == 0 || cfg.embed_dim == 0) throw ConfigError("encoder needs positive widths");
  step_ = grad::Mlp(name + ".step", {cfg.feature_dim, cfg.hidden, cfg.embed_dim}, grad::Activation::kTanh, rng);
  if (cfg.heads > 0) {
    if (cfg.embed_dim % cfg.heads != 0) throw ConfigError("embed_dim must be divisible by the number of heads");
    wq_ = grad::Linear(name + ".q", cfg.embed_dim, cfg.embed_dim, rng);
    wk_ = grad::Linear(name + ".k", cfg.embed_dim, cfg.embed_dim, rng);
    wv_ = grad::Linear(name + ".v", cfg.embed_dim, cfg.embed_dim, rng);
    wo_ = grad::Linear(name + ".o", cfg.embed_dim, cfg.embed_dim, rng);
  }
}

Var HistoryEncoder::encode(Tape& tape, const HistoryBatch& batch) {
  const std::size_t n = batch.size();
  if (batch.features.rows() == 0) return tape.constant(Tensor(n, cfg_.embed_dim));
  if (batch.features.cols() != cfg_.feature_dim) {
    throw ContractViolation("history features have width " + std::to_string(batch.features.cols()) +
                            ", encoder expects " + std::to_string(cfg_.feature_dim));
  }
  Var e = step_.forward(tape, tape.constant(batch.features));
  if (cfg_.heads > 0) {
    Var a = grad::segment_attention(wq_.forward(tape, e), wk_.forward(tape, e), wv_.forward(tape, e),
                                    batch.offsets, cfg_.heads);
    e = e + wo_.forward(tape, a);
  }
  return grad::segment_sum(e, batch.offsets);
}

void HistoryEncoder::collect(std::vector<grad::Parameter*>& out) {
  step_.collect(out);
  if (cfg_.heads > 0) {
    wq_.collect(out);
    wk_.collect(out);
    wv_.collect(out);
    wo_.collect(out);
  }
}

}  // namespace boed::flow
