#pragma once

#include <cstddef>
#include <vector>

#include "boed/env/model.hpp"
#include "boed/flow/bijectors.hpp"
#include "boed/flow/coupling.hpp"
#include "boed/flow/encoder.hpp"
#include "boed/grad/adam.hpp"

namespace boed::flow {

struct PosteriorConfig {
  EncoderConfig encoder;  // feature_dim is taken from the environment
  FlowConfig flow;        // dim and context_dim are taken from the environment / encoder
  // Fixed elementwise affine in unconstrained space fitted to prior draws.
  bool standardize = true;
  std::size_t standardize_samples = 4096;
};

// q(theta | h): history encoder -> coupling flow -> standardisation -> constraint maps.
class PosteriorModel {
 public:
  PosteriorModel() = default;
  PosteriorModel(const env::LikelihoodModel& env, const PosteriorConfig& cfg, dist::Rng& rng);

  std::size_t theta_dim() const noexcept { return map_.dim(); }
  std::size_t embed_dim() const noexcept { return enc_.embed_dim(); }

  // Unconstrained coordinates of a batch of theta rows plus the constant
  // change-of-variables terms. Rows outside the support get valid = 0 and x = 0.
  struct Prepared {
    grad::Tensor x;
    std::vector<double> correction;
    std::vector<char> valid;
    std::size_t invalid_count() const;
  };
  Prepared prepare(const grad::Tensor& theta) const;

  grad::Var embed(grad::Tape& tape, const HistoryBatch& batch);
  // (n x 1) log q; rows flagged invalid carry a meaningless finite value.
  grad::Var log_prob(grad::Tape& tape, const Prepared& p, grad::Var embedding);
  grad::Var log_prob(grad::Tape& tape, const Prepared& p, const HistoryBatch& batch);

  // Gradient-free helpers. log_prob_values returns -inf for rows outside the support.
  grad::Tensor embedding_values(const HistoryBatch& batch);
  std::vector<double> log_prob_values(const grad::Tensor& theta, const grad::Tensor& embedding);
  std::vector<double> log_prob_values(const grad::Tensor& theta, const HistoryBatch& batch);
  // n draws of theta (rows) given one embedding row.
  grad::Tensor sample(std::span<const double> embedding, std::size_t n, dist::Rng& rng);

  void collect(std::vector<grad::Parameter*>& out);
  // Non-trainable state that must travel with the parameters.
  void collect_buffers(std::vector<grad::Parameter*>& out);

  HistoryEncoder& encoder() noexcept { return enc_; }
  CouplingFlow& flow() noexcept { return flow_; }
  const ConstraintMap& constraints() const noexcept { return map_; }

 private:
  ConstraintMap map_;
  grad::Parameter loc_;
  grad::Parameter scale_;
  HistoryEncoder enc_;
  CouplingFlow flow_;
};

// One optimiser step on -mean log q over the batch. Rows outside the support
// are skipped. Throws NumericalFault naming the first offending row if a
// log-density is not finite; parameters are left untouched in that case.
struct FitResult {
  double loss;
  std::size_t used;
  double grad_norm;
};
FitResult fit_posterior_step(PosteriorModel& model, grad::Adam& opt, const grad::Tensor& theta,
                             const HistoryBatch& batch);

}  // namespace boed::flow
