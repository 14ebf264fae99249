#include "boed/est/amortized.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "boed/errors.hpp"

namespace boed::est {

namespace {

struct Batch {
  grad::Tensor theta;
  flow::HistoryBatch histories;
};

Batch gather(const env::LikelihoodModel& env, const std::vector<Rollout>& rs, std::span<const std::size_t> idx) {
  Batch b{grad::Tensor(idx.size(), env.theta_dim()), {}};
  std::vector<const env::History*> hs;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& r = rs[idx[i]];
    std::copy(r.theta.begin(), r.theta.end(), b.theta.row_span(i).begin());
    hs.push_back(&r.history);
  }
  b.histories = flow::make_history_batch(env, hs);
  return b;
}

}  // namespace

OfflineFitReport fit_posterior_offline(const env::LikelihoodModel& env, const DesignPolicy& policy,
                                       flow::PosteriorModel& model, const OfflineFitConfig& cfg) {
  if (cfg.samples < 2 || cfg.batch == 0 || cfg.epochs == 0) throw ConfigError("offline fit needs samples >= 2, batch and epochs > 0");
  if (!(cfg.validation_fraction > 0.0 && cfg.validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in (0, 1)");
  }
  const dist::Rng root(cfg.seed);
  const auto rs = rollout_policy(env, policy, root.split(0), cfg.samples);
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::round(cfg.validation_fraction * cfg.samples)));
  const std::size_t n_train = cfg.samples - n_val;
  std::vector<std::size_t> val_idx(n_val);
  std::iota(val_idx.begin(), val_idx.end(), n_train);
  const Batch val = gather(env, rs, val_idx);

  std::vector<grad::Parameter*> ps;
  model.collect(ps);
  grad::Adam opt(ps, {cfg.lr});
  std::vector<grad::Tensor> best;
  for (auto* p : ps) best.push_back(p->value);

  OfflineFitReport rep;
  rep.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  dist::Rng shuffle = root.split(1);
  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    std::shuffle(order.begin(), order.end(), shuffle);
    double acc = 0.0;
    std::size_t steps = 0;
    for (std::size_t s = 0; s < n_train; s += cfg.batch) {
      const std::size_t e = std::min(n_train, s + cfg.batch);
      const Batch b = gather(env, rs, std::span<const std::size_t>(order).subspan(s, e - s));
      acc += flow::fit_posterior_step(model, opt, b.theta, b.histories).loss;
      ++steps;
    }
    rep.train_loss.push_back(acc / static_cast<double>(steps));
    const auto lq = model.log_prob_values(val.theta, val.histories);
    double vl = 0.0;
    for (double v : lq) vl -= v;
    vl /= static_cast<double>(lq.size());
    rep.val_loss.push_back(vl);
    if (vl < rep.best_val_loss) {
      rep.best_val_loss = vl;
      rep.best_epoch = ep;
      for (std::size_t i = 0; i < ps.size(); ++i) best[i] = ps[i]->value;
    } else if (ep - rep.best_epoch >= cfg.patience) {
      break;
    }
  }
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = best[i];
  return rep;
}

}  // namespace boed::est
