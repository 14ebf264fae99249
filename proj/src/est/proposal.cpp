#include "boed/est/proposal.hpp"

#include <algorithm>
#include <cmath>

#include "boed/errors.hpp"

namespace boed::est {

using grad::Tensor;

void Proposal::log_prob_rollouts(std::span<const Rollout> rollouts, std::span<double> out) const {
  for (std::size_t i = 0; i < rollouts.size(); ++i) out[i] = log_prob(rollouts[i].theta, rollouts[i].history);
}

double PriorProposal::log_prob(std::span<const double> theta, const env::History&) const {
  return env_.prior_log_prob(theta);
}

void PriorProposal::sample(const env::History&, std::size_t n, dist::Rng& rng, std::span<double> thetas,
                           std::span<double> log_q) const {
  const std::size_t p = env_.theta_dim();
  for (std::size_t i = 0; i < n; ++i) {
    auto row = thetas.subspan(i * p, p);
    env_.sample_prior(rng, row);
    log_q[i] = env_.prior_log_prob(row);
  }
}

GaussianPosteriorProposal::GaussianPosteriorProposal(const env::ConjugateGaussianTask& task, double inflation)
    : task_(task), inflation_(inflation) {
  if (!(inflation > 0.0)) throw ConfigError("variance inflation must be positive");
}

dist::IsotropicGaussian GaussianPosteriorProposal::at(const env::History& h) const {
  const auto post = task_.posterior(h);
  return dist::IsotropicGaussian(post.mean(), post.var() * inflation_);
}

double GaussianPosteriorProposal::log_prob(std::span<const double> theta, const env::History& h) const {
  return at(h).log_prob(theta);
}

void GaussianPosteriorProposal::sample(const env::History& h, std::size_t n, dist::Rng& rng,
                                       std::span<double> thetas, std::span<double> log_q) const {
  const auto q = at(h);
  const std::size_t p = q.dim();
  for (std::size_t i = 0; i < n; ++i) {
    auto row = thetas.subspan(i * p, p);
    q.sample(rng, row);
    log_q[i] = q.log_prob(row);
  }
}

double FlowProposal::log_prob(std::span<const double> theta, const env::History& h) const {
  Tensor th(1, theta.size());
  std::copy(theta.begin(), theta.end(), th.data());
  return model_.log_prob_values(th, flow::make_history_batch(env_, h))[0];
}

void FlowProposal::log_prob_rollouts(std::span<const Rollout> rollouts, std::span<double> out) const {
  constexpr std::size_t kBatch = 1024;
  const std::size_t p = env_.theta_dim();
  for (std::size_t start = 0; start < rollouts.size(); start += kBatch) {
    const std::size_t m = std::min(kBatch, rollouts.size() - start);
    Tensor th(m, p);
    std::vector<const env::History*> hs(m);
    for (std::size_t i = 0; i < m; ++i) {
      std::copy(rollouts[start + i].theta.begin(), rollouts[start + i].theta.end(), th.row_span(i).begin());
      hs[i] = &rollouts[start + i].history;
    }
    const auto lq = model_.log_prob_values(th, flow::make_history_batch(env_, hs));
    std::copy(lq.begin(), lq.end(), out.begin() + static_cast<std::ptrdiff_t>(start));
  }
}

void FlowProposal::sample(const env::History& h, std::size_t n, dist::Rng& rng, std::span<double> thetas,
                          std::span<double> log_q) const {
  if (n == 0) return;
  const Tensor emb = model_.embedding_values(flow::make_history_batch(env_, h));
  const Tensor th = model_.sample(emb.row_span(0), n, rng);
  Tensor ctx(n, emb.cols());
  for (std::size_t i = 0; i < n; ++i) std::copy(emb.row_span(0).begin(), emb.row_span(0).end(), ctx.row_span(i).begin());
  const auto lq = model_.log_prob_values(th, ctx);
  std::copy(th.span().begin(), th.span().end(), thetas.begin());
  std::copy(lq.begin(), lq.end(), log_q.begin());
}

}  // namespace boed::est
