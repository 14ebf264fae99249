#include "boed/rl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "boed/errors.hpp"

namespace boed::rl {

using grad::Tape;
using grad::Tensor;
using grad::Var;

namespace {

std::vector<std::size_t> mlp_sizes(std::size_t in, const AgentConfig& c, std::size_t out) {
  std::vector<std::size_t> s{in};
  for (std::size_t i = 0; i < c.hidden_layers; ++i) s.push_back(c.hidden);
  s.push_back(out);
  return s;
}

Tensor normal_tensor(std::size_t r, std::size_t c, dist::Rng& rng) {
  Tensor t(r, c);
  for (double& v : t.span()) v = rng.normal();
  return t;
}

std::vector<std::size_t> indices_of(const Tensor& a) {
  std::vector<std::size_t> idx(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) idx[i] = static_cast<std::size_t>(a(i, 0));
  return idx;
}

struct PolicySample {
  Var action;    // n x A in (-1, 1)
  Var log_prob;  // n x 1
};

// Tanh-squashed Gaussian with the change-of-variables correction
// log(1 - tanh(x)^2) = 2 (log 2 - x - softplus(-2x)).
PolicySample squashed_gaussian(Tape& tape, Var out, std::size_t a_dim, const Tensor& eps, double lo, double hi) {
  Var mean = grad::slice(out, 1, 0, a_dim);
  Var raw = grad::slice(out, 1, a_dim, 2 * a_dim);
  Var log_std = (grad::tanh(raw) + 1.0) * (0.5 * (hi - lo)) + lo;
  Var e = tape.constant(eps);
  Var x = mean + grad::exp(log_std) * e;
  Var u = grad::tanh(x);
  Tensor e2(eps.rows(), 1);
  for (std::size_t i = 0; i < eps.rows(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < a_dim; ++j) s += eps(i, j) * eps(i, j);
    e2[i] = -0.5 * s - 0.5 * static_cast<double>(a_dim) * std::log(2 * std::numbers::pi);
  }
  Var base = tape.constant(e2) - grad::sum(log_std, 1);
  Var corr = grad::sum((grad::neg(x) - grad::softplus(x * -2.0) + std::numbers::ln2) * 2.0, 1);
  return {u, base - corr};
}

}  // namespace

void SacAgent::Critic::collect(std::vector<grad::Parameter*>& out) {
  net.collect(out);
  if (!action_table.value.empty()) {
    out.push_back(&action_table);
    out.push_back(&action_bias);
  }
}

SacAgent::Critic SacAgent::make_critic(const std::string& name, dist::Rng& rng) const {
  Critic c;
  if (discrete()) {
    c.net = grad::Mlp(name + ".net", mlp_sizes(cfg_.state_dim, cfg_, cfg_.action_embed), grad::Activation::kRelu, rng);
    Tensor table(cfg_.action_count, cfg_.action_embed);
    for (double& v : table.span()) v = rng.normal(0.0, 0.1);
    c.action_table = grad::Parameter(name + ".action_table", std::move(table));
    c.action_bias = grad::Parameter(name + ".action_bias", Tensor(1, cfg_.action_count));
  } else {
    c.net = grad::Mlp(name + ".net", mlp_sizes(cfg_.state_dim + cfg_.action_dim, cfg_, 1), grad::Activation::kRelu,
                      rng);
  }
  return c;
}

SacAgent::SacAgent(const AgentConfig& cfg, dist::Rng& rng) : cfg_(cfg) {
  if (cfg.state_dim == 0) throw ConfigError("agent state dimension must be positive");
  if ((cfg.action_dim > 0) == (cfg.action_count > 0)) {
    throw ConfigError("agent needs exactly one of action_dim (continuous) or action_count (discrete)");
  }
  if (cfg.ensemble == 0) throw ConfigError("critic ensemble must not be empty");
  if (!(cfg.tau > 0.0 && cfg.tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (!(cfg.gamma >= 0.0 && cfg.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(cfg.init_alpha > 0.0)) throw ConfigError("initial entropy coefficient must be positive");
  const std::size_t out = discrete() ? cfg.action_count : 2 * cfg.action_dim;
  policy_ = grad::Mlp("policy", mlp_sizes(cfg.state_dim, cfg, out), grad::Activation::kRelu, rng);
  for (std::size_t i = 0; i < cfg.ensemble; ++i) {
    critics_.push_back(make_critic("critic_" + std::to_string(i), rng));
  }
  for (std::size_t i = 0; i < cfg.ensemble; ++i) {
    targets_.push_back(critics_[i]);
    std::vector<grad::Parameter*> ps;
    targets_[i].collect(ps);
    for (auto* p : ps) p->name = "target_" + p->name;
  }
  log_alpha_ = grad::Parameter("log_alpha", Tensor::scalar(std::log(cfg.init_alpha)));
  target_entropy_ = std::isnan(cfg.target_entropy)
                        ? (discrete() ? 0.6 * std::log(static_cast<double>(cfg.action_count))
                                      : -static_cast<double>(cfg.action_dim))
                        : cfg.target_entropy;
  policy_opt_ = grad::Adam(policy_parameters(), {cfg.policy_lr});
  std::vector<grad::Parameter*> cps;
  for (auto& c : critics_) c.collect(cps);
  critic_opt_ = grad::Adam(cps, {cfg.critic_lr});
  alpha_opt_ = grad::Adam({&log_alpha_}, {cfg.alpha_lr});
}

double SacAgent::alpha() const { return std::exp(log_alpha_.value[0]); }

std::vector<grad::Parameter*> SacAgent::policy_parameters() {
  std::vector<grad::Parameter*> ps;
  policy_.collect(ps);
  return ps;
}

std::vector<grad::Parameter*> SacAgent::critic_parameters(std::size_t i) {
  std::vector<grad::Parameter*> ps;
  critics_.at(i).collect(ps);
  return ps;
}

std::vector<grad::Parameter*> SacAgent::target_critic_parameters(std::size_t i) {
  std::vector<grad::Parameter*> ps;
  targets_.at(i).collect(ps);
  return ps;
}

Tensor SacAgent::act(const Tensor& state, dist::Rng& rng, bool deterministic) const {
  if (state.cols() != cfg_.state_dim) throw ConfigError("state has the wrong width");
  Tape tape(false);
  const Tensor out = policy_.forward(tape, tape.constant(state)).value();
  const std::size_t n = state.rows();
  if (discrete()) {
    Tensor a(n, 1);
    const std::size_t K = cfg_.action_count;
    for (std::size_t i = 0; i < n; ++i) {
      auto row = out.row_span(i);
      if (deterministic) {
        a[i] = static_cast<double>(std::max_element(row.begin(), row.end()) - row.begin());
        continue;
      }
      const double m = *std::max_element(row.begin(), row.end());
      double z = 0;
      for (double v : row) z += std::exp(v - m);
      double u = rng.uniform() * z, c = 0;
      std::size_t k = 0;
      for (; k + 1 < K; ++k) {
        c += std::exp(row[k] - m);
        if (u < c) break;
      }
      a[i] = static_cast<double>(k);
    }
    return a;
  }
  const std::size_t A = cfg_.action_dim;
  Tensor a(n, A);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < A; ++j) {
      double x = out(i, j);
      if (!deterministic) {
        const double log_std = cfg_.min_log_std + 0.5 * (std::tanh(out(i, A + j)) + 1.0) * (cfg_.max_log_std - cfg_.min_log_std);
        x += std::exp(log_std) * rng.normal();
      }
      a(i, j) = std::tanh(x);
    }
  }
  return a;
}

Var SacAgent::q_values(Tape& tape, Critic& c, Var state, Var action) const {
  return c.net.forward(tape, grad::concat({state, action}, 1));
}

Var SacAgent::q_all(Tape& tape, Critic& c, Var state) const {
  Var f = c.net.forward(tape, state);
  return grad::matmul_nt(f, tape.param(c.action_table)) + tape.param(c.action_bias);
}

UpdateStats SacAgent::update(const Transitions& b, dist::Rng& rng) {
  const std::size_t n = b.state.rows();
  if (n == 0) throw ContractViolation("agent update on an empty batch");
  if (b.state.cols() != cfg_.state_dim || b.next_state.cols() != cfg_.state_dim ||
      b.action.rows() != n || b.action.cols() != action_width() || b.reward.rows() != n || b.done.rows() != n) {
    throw ContractViolation("transition batch has inconsistent shapes");
  }
  return discrete() ? update_discrete(b) : update_continuous(b, rng);
}

UpdateStats SacAgent::update_continuous(const Transitions& b, dist::Rng& rng) {
  const std::size_t n = b.state.rows(), A = cfg_.action_dim;
  const double alpha = this->alpha();
  UpdateStats st;
  st.alpha = alpha;

  Tensor y(n, 1);
  {
    Tape tape(false);
    Var s2 = tape.constant(b.next_state);
    const auto ps = squashed_gaussian(tape, policy_.forward(tape, s2), A, normal_tensor(n, A, rng),
                                      cfg_.min_log_std, cfg_.max_log_std);
    Var qmin;
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      Var q = q_values(tape, targets_[i], s2, ps.action);
      qmin = i == 0 ? q : grad::minimum(qmin, q);
    }
    const Tensor& q = qmin.value();
    const Tensor& lp = ps.log_prob.value();
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = b.reward[i] + cfg_.gamma * (1.0 - b.done[i]) * (q[i] - alpha * lp[i]);
    }
  }
  {
    Tape tape;
    tape.set_check_finite(false);
    Var s = tape.constant(b.state), a = tape.constant(b.action), target = tape.constant(y);
    Var loss;
    for (std::size_t i = 0; i < critics_.size(); ++i) {
      Var l = grad::mean(grad::square(q_values(tape, critics_[i], s, a) - target));
      loss = i == 0 ? l : loss + l;
    }
    critic_opt_.zero_grad();
    tape.backward(loss);
    critic_opt_.step();
    st.critic_loss = loss.value().item();
  }
  double mean_lp = 0;
  {
    Tape tape;
    tape.set_check_finite(false);
    Var s = tape.constant(b.state);
    const auto ps = squashed_gaussian(tape, policy_.forward(tape, s), A, normal_tensor(n, A, rng), cfg_.min_log_std,
                                      cfg_.max_log_std);
    Var qmin;
    for (std::size_t i = 0; i < critics_.size(); ++i) {
      Var q = q_values(tape, critics_[i], s, ps.action);
      qmin = i == 0 ? q : grad::minimum(qmin, q);
    }
    Var loss = grad::mean(ps.log_prob * alpha - qmin);
    policy_opt_.zero_grad();
    tape.backward(loss);
    policy_opt_.step();
    critic_opt_.zero_grad();
    st.policy_loss = loss.value().item();
    for (double v : ps.log_prob.value().span()) mean_lp += v / static_cast<double>(n);
  }
  st.entropy = -mean_lp;
  log_alpha_.ensure_grad();
  log_alpha_.grad[0] = st.entropy - target_entropy_;
  alpha_opt_.step();
  return st;
}

UpdateStats SacAgent::update_discrete(const Transitions& b) {
  const std::size_t n = b.state.rows(), K = cfg_.action_count;
  const double alpha = this->alpha();
  UpdateStats st;
  st.alpha = alpha;
  const auto taken = indices_of(b.action);
  for (std::size_t k : taken) {
    if (k >= K) throw ContractViolation("discrete action index out of range");
  }

  Tensor y(n, 1);
  {
    Tape tape(false);
    Var s2 = tape.constant(b.next_state);
    Var logp = grad::log_softmax(policy_.forward(tape, s2));
    Var qmin;
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      Var q = q_all(tape, targets_[i], s2);
      qmin = i == 0 ? q : grad::minimum(qmin, q);
    }
    const Tensor v = grad::sum(grad::exp(logp) * (qmin - logp * alpha), 1).value();
    for (std::size_t i = 0; i < n; ++i) y[i] = b.reward[i] + cfg_.gamma * (1.0 - b.done[i]) * v[i];
  }
  Tensor qmin_now;
  {
    Tape tape;
    tape.set_check_finite(false);
    Var s = tape.constant(b.state), target = tape.constant(y);
    Var loss, qmin;
    for (std::size_t i = 0; i < critics_.size(); ++i) {
      Var qa = q_all(tape, critics_[i], s);
      qmin = i == 0 ? qa : grad::minimum(qmin, qa);
      Var l = grad::mean(grad::square(grad::pick(qa, taken) - target));
      loss = i == 0 ? l : loss + l;
    }
    critic_opt_.zero_grad();
    tape.backward(loss);
    critic_opt_.step();
    st.critic_loss = loss.value().item();
    qmin_now = qmin.value();
  }
  {
    Tape tape;
    tape.set_check_finite(false);
    Var logp = grad::log_softmax(policy_.forward(tape, tape.constant(b.state)));
    Var p = grad::exp(logp);
    Var loss = grad::mean(grad::sum(p * (logp * alpha - tape.constant(qmin_now)), 1));
    policy_opt_.zero_grad();
    tape.backward(loss);
    policy_opt_.step();
    st.policy_loss = loss.value().item();
    const Tensor& lp = logp.value();
    double h = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < K; ++k) h -= std::exp(lp(i, k)) * lp(i, k) / static_cast<double>(n);
    }
    st.entropy = h;
  }
  log_alpha_.ensure_grad();
  log_alpha_.grad[0] = st.entropy - target_entropy_;
  alpha_opt_.step();
  return st;
}

void SacAgent::update_targets() {
  for (std::size_t i = 0; i < critics_.size(); ++i) {
    polyak_update(target_critic_parameters(i), critic_parameters(i), cfg_.tau);
  }
}

void polyak_update(const std::vector<grad::Parameter*>& target, const std::vector<grad::Parameter*>& live,
                   double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (target.size() != live.size()) throw ContractViolation("polyak update over parameter lists of different length");
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (!target[i]->value.same_shape(live[i]->value)) {
      throw ContractViolation("polyak update shape mismatch for " + target[i]->name);
    }
  }
  for (std::size_t i = 0; i < target.size(); ++i) {
    auto t = target[i]->value.span();
    auto l = live[i]->value.span();
    if (tau == 1.0) {
      std::copy(l.begin(), l.end(), t.begin());
      continue;
    }
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = t[j] * (1.0 - tau) + l[j] * tau;
  }
}

}  // namespace boed::rl
