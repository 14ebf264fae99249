#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "boed/env/model.hpp"
#include "boed/grad/nn.hpp"

namespace boed::flow {

// Per-step features of several histories stacked row-wise; history i owns
// rows [offsets[i], offsets[i+1]).
struct HistoryBatch {
  grad::Tensor features;
  std::vector<std::size_t> offsets{0};

  std::size_t size() const noexcept { return offsets.size() - 1; }
};

HistoryBatch make_history_batch(const env::LikelihoodModel& env,
                                std::span<const env::History* const> histories);
HistoryBatch make_history_batch(const env::LikelihoodModel& env, const env::History& h);

struct EncoderConfig {
  std::size_t feature_dim = 0;
  std::size_t embed_dim = 32;
  std::size_t hidden = 64;
  std::size_t heads = 8;  // 0 disables the attention layer
};

// Permutation-invariant history embedding:
//   e_i = MLP(features_i)
//   h_i = e_i + W_o . MultiHeadSelfAttention(e)_i    (residual, within one history)
//   B   = sum_i h_i
// The empty history maps to the zero vector. With heads == 0, B is the plain
// running sum of per-step encodings.
class HistoryEncoder {
 public:
  HistoryEncoder() = default;
  HistoryEncoder(const std::string& name, const EncoderConfig& cfg, dist::Rng& rng);

  // (batch.size() x embed_dim)
  grad::Var encode(grad::Tape& tape, const HistoryBatch& batch);
  std::size_t embed_dim() const noexcept { return cfg_.embed_dim; }
  const EncoderConfig& config() const noexcept { return cfg_; }
  void collect(std::vector<grad::Parameter*>& out);

 private:
  EncoderConfig cfg_;
  grad::Mlp step_;
  grad::Linear wq_, wk_, wv_, wo_;
};

}  // namespace boed::flow
