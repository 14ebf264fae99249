#include "boed/rl/trainer.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "boed/errors.hpp"

namespace boed::rl {

using grad::Tape;
using grad::Tensor;
using grad::Var;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::vector<grad::Parameter*> params_of(flow::HistoryEncoder& e) {
  std::vector<grad::Parameter*> ps;
  e.collect(ps);
  return ps;
}

std::vector<grad::Parameter*> params_of(flow::CouplingFlow& f) {
  std::vector<grad::Parameter*> ps;
  f.collect(ps);
  return ps;
}

std::vector<grad::Parameter*> flow_state(flow::PosteriorModel& m) {
  auto ps = params_of(m.flow());
  m.collect_buffers(ps);
  return ps;
}

}  // namespace

TrainConfig default_train_config(const std::string& env_name) {
  TrainConfig c;
  if (env_name == "source") {
    c.iterations = 100000;
    c.gamma = 0.9;
    c.tau = 1e-3;
    c.policy_lr = 1e-4;
    c.critic_lr = 3e-4;
    c.buffer_size = 10000000;
  } else if (env_name == "ces") {
    c.iterations = 100000;
    c.gamma = 0.9;
    c.tau = 5e-3;
    c.policy_lr = 3e-4;
    c.critic_lr = 3e-4;
    c.buffer_size = 10000000;
  } else if (env_name == "prey") {
    c.iterations = 20000;
    c.gamma = 0.95;
    c.tau = 1e-2;
    c.policy_lr = 1e-4;
    c.critic_lr = 1e-3;
    c.buffer_size = 1000000;
  }
  return c;
}

std::vector<std::string> validate_config(const TrainConfig& c) {
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
  if (!(c.tau > 0.0 && c.tau <= 1.0)) throw ConfigError("tau must lie in (0, 1]");
  if (!(c.policy_lr > 0.0 && c.critic_lr > 0.0 && c.posterior_lr > 0.0)) {
    throw ConfigError("learning rates must be positive");
  }
  if (c.buffer_size == 0) throw ConfigError("buffer_size must be positive");
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (c.rollouts_per_iter == 0) throw ConfigError("rollouts_per_iter must be positive");
  if (c.ensemble == 0) throw ConfigError("ensemble must be positive");
  if (c.flow_layers == 0) throw ConfigError("flow_layers must be positive");
  if (c.embed_dim == 0) throw ConfigError("embed_dim must be positive");
  if (c.attention_heads > 0 && c.embed_dim % c.attention_heads != 0) {
    throw ConfigError("embed_dim must be divisible by attention_heads");
  }
  if (c.eval_estimator != "auto" && c.eval_estimator != "spce" && c.eval_estimator != "scee") {
    throw ConfigError("eval_estimator must be auto, spce or scee");
  }
  if (!(c.divergence_threshold > 0.0)) throw ConfigError("divergence_threshold must be positive");
  std::vector<std::string> warnings;
  if (!c.use_target_posterior) {
    warnings.push_back("use_target_posterior is off: rewards use the live posterior and tau only affects the critic targets");
  }
  if (c.reward == RewardMode::kSpce && (!c.use_target_posterior || !c.fixed_initial_posterior)) {
    warnings.push_back("posterior toggles have no effect on sPCE rewards");
  }
  return warnings;
}

TrainConfig ablation_toggles(TrainConfig cfg, bool use_target_posterior, bool fixed_initial_posterior) {
  cfg.use_target_posterior = use_target_posterior;
  cfg.fixed_initial_posterior = fixed_initial_posterior;
  return cfg;
}

std::string ablation_label(const TrainConfig& cfg) {
  return std::string("target_") + (cfg.use_target_posterior ? "on" : "off") + "+fixed_init_" +
         (cfg.fixed_initial_posterior ? "on" : "off");
}

std::string train_log_header() {
  return "iter,return_mean,return_stderr,L_q,policy_loss,critic_loss,eval_eig,eval_stderr,wall_ms";
}

std::string train_log_row(const LogRow& r, bool with_wall_time) {
  std::ostringstream os;
  os << r.iter << ',' << fmt(r.return_mean) << ',' << fmt(r.return_stderr) << ',' << fmt(r.posterior_loss) << ','
     << fmt(r.policy_loss) << ',' << fmt(r.critic_loss) << ',' << (r.eval_eig ? fmt(*r.eval_eig) : "") << ','
     << (r.eval_stderr ? fmt(*r.eval_stderr) : "") << ',' << (with_wall_time ? fmt(r.wall_ms) : "0");
  return os.str();
}

void LearnedPolicy::design(const env::History& h, dist::Rng& rng, std::span<double> out) const {
  const auto s = trainer_.state_of(h);
  const Tensor a = trainer_.agent().act(Tensor::row(s), rng, deterministic_);
  design_from_action(trainer_.env().design_space(), a.row_span(0), out);
}

Trainer::Trainer(const env::LikelihoodModel& env, const TrainConfig& cfg)
    : env_(env), cfg_(cfg), warnings_(validate_config(cfg)), horizon_(env.horizon()), rng_(cfg.seed),
      buffer_(cfg.buffer_size) {
  if (cfg_.reward == RewardMode::kSpce && !env.explicit_likelihood()) {
    throw CapabilityError("sPCE rewards need an explicit likelihood");
  }
  if (cfg_.eval_every == 0) cfg_.eval_every = std::max<std::size_t>(1, cfg_.iterations / 20);
  if (cfg_.log_every == 0) cfg_.log_every = std::max<std::size_t>(1, cfg_.iterations / 100);
  if (cfg_.return_window == 0) cfg_.return_window = 1;
  if (cfg_.updates_per_iter == 0) cfg_.updates_per_iter = horizon_ * cfg_.rollouts_per_iter;

  flow::PosteriorConfig pc;
  pc.encoder = flow::EncoderConfig{0, cfg_.embed_dim, cfg_.encoder_hidden, cfg_.attention_heads};
  pc.flow.layers = cfg_.flow_layers;
  pc.flow.hidden = cfg_.flow_hidden;
  pc.flow.hidden_layers = cfg_.flow_hidden_layers;
  dist::Rng pr = rng_.split(1), tr = rng_.split(1), ar = rng_.split(2);
  posterior_ = std::make_unique<flow::PosteriorModel>(env, pc, pr);
  target_ = std::make_unique<flow::PosteriorModel>(env, pc, tr);
  polyak_update(flow_state(*target_), flow_state(*posterior_), 1.0);
  std::vector<grad::Parameter*> pps;
  posterior_->collect(pps);
  posterior_opt_ = grad::Adam(pps, {cfg_.posterior_lr});

  AgentConfig ac;
  ac.state_dim = policy_input_dim(env, cfg_.embed_dim);
  ac.action_count = action_count(env.design_space());
  ac.action_dim = ac.action_count > 0 ? 0 : env.design_space().dim();
  ac.hidden = cfg_.agent_hidden;
  ac.ensemble = cfg_.ensemble;
  ac.gamma = cfg_.gamma;
  ac.tau = cfg_.tau;
  ac.policy_lr = cfg_.policy_lr;
  ac.critic_lr = cfg_.critic_lr;
  ac.alpha_lr = cfg_.policy_lr;
  agent_ = std::make_unique<SacAgent>(ac, ar);
  wall_start_ms_ = now_ms();
}

std::vector<double> Trainer::state_of(const env::History& h) {
  SedMdpState s;
  s.t = h.size();
  s.last_features.assign(env_.feature_dim(), 0.0);
  if (h.empty()) {
    s.embedding.assign(cfg_.embed_dim, 0.0);
  } else {
    const Tensor b = posterior_->embedding_values(flow::make_history_batch(env_, h));
    s.embedding.assign(b.span().begin(), b.span().end());
    env_.features(h.design(h.size() - 1), h.outcome(h.size() - 1), s.last_features);
  }
  return policy_input(s, horizon_);
}

ReplayEntry Trainer::collect(dist::Rng& rng, bool random_designs) {
  const bool spce = cfg_.reward == RewardMode::kSpce;
  SedMdp mdp(env_, posterior_->encoder(), horizon_, spce, spce ? cfg_.spce_L : 0);
  ReplayEntry e;
  e.theta.resize(env_.theta_dim());
  env_.sample_prior(rng, e.theta);
  mdp.reset(e.theta, rng);
  const std::size_t width = agent_->action_width();
  std::vector<double> a(width), d(env_.design_space().dim());
  for (std::size_t t = 0; t < horizon_; ++t) {
    if (random_designs) {
      if (agent_->discrete()) {
        a[0] = static_cast<double>(rng.uniform_int(0, static_cast<std::int64_t>(agent_->config().action_count) - 1));
      } else {
        for (double& v : a) v = rng.uniform(-1.0, 1.0);
      }
    } else {
      const Tensor out = agent_->act(Tensor::row(policy_input(mdp.state(), horizon_)), rng, false);
      std::copy(out.span().begin(), out.span().end(), a.begin());
    }
    design_from_action(env_.design_space(), a, d);
    const auto st = mdp.step(d, rng);
    if (st.clamped) ++clamped_;
    e.actions.insert(e.actions.end(), a.begin(), a.end());
    if (spce) e.fixed_rewards.push_back(st.reward);
  }
  e.history = mdp.history();
  return e;
}

std::vector<double> Trainer::reward_log_q(const ReplayEntry& e) {
  std::vector<env::History> pre;
  for (std::size_t t = 0; t <= e.history.size(); ++t) pre.push_back(e.history.prefix(t));
  std::vector<const env::History*> ptrs;
  for (auto& h : pre) ptrs.push_back(&h);
  const Tensor emb = posterior_->embedding_values(flow::make_history_batch(env_, ptrs));
  Tensor th(pre.size(), env_.theta_dim());
  for (std::size_t i = 0; i < pre.size(); ++i) std::copy(e.theta.begin(), e.theta.end(), th.row_span(i).begin());
  return reward_posterior().log_prob_values(th, emb);
}

std::vector<double> Trainer::rewards(const ReplayEntry& e) {
  if (cfg_.reward == RewardMode::kSpce) return e.fixed_rewards;
  return scee_rewards(reward_log_q(e), cfg_.fixed_initial_posterior);
}

Trainer::UpdateLosses Trainer::update() {
  UpdateLosses out;
  const std::size_t T = horizon_;
  const std::size_t want = (cfg_.batch_size + T - 1) / T;
  const std::size_t E = std::min(want, buffer_.size());
  if (E == 0) return out;
  dist::Rng urng = rng_.split(0x200000 + iter_);
  const auto entries = buffer_.sample(E, urng);
  const std::size_t p = env_.theta_dim(), S = T + 1;

  std::vector<env::History> pre;
  pre.reserve(E * S);
  Tensor theta_all(E * S, p);
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t t = 0; t <= T; ++t) {
      pre.push_back(entries[e].history.prefix(t));
      std::copy(entries[e].theta.begin(), entries[e].theta.end(), theta_all.row_span(e * S + t).begin());
    }
  }
  std::vector<const env::History*> ptrs;
  for (auto& h : pre) ptrs.push_back(&h);
  const auto hb = flow::make_history_batch(env_, ptrs);

  // posterior step on kappa and psi
  Tensor emb_vals;
  {
    Tape tape;
    tape.set_check_finite(false);
    Var emb = posterior_->embed(tape, hb);
    emb_vals = emb.value();
    const std::size_t t0 = cfg_.fixed_initial_posterior ? 1 : 0;
    std::vector<std::size_t> idx;
    for (std::size_t e = 0; e < E; ++e) {
      for (std::size_t t = t0; t <= T; ++t) idx.push_back(e * S + t);
    }
    Tensor th(idx.size(), p);
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy_n(theta_all.row_span(idx[i]).begin(), p, th.row_span(i).begin());
    const auto prep = posterior_->prepare(th);
    const std::size_t used = idx.size() - prep.invalid_count();
    if (used > 0) {
      Var lp = posterior_->log_prob(tape, prep, grad::gather_rows(emb, idx));
      Tensor w(idx.size(), 1);
      for (std::size_t i = 0; i < idx.size(); ++i) w[i] = prep.valid[i] ? -1.0 / static_cast<double>(used) : 0.0;
      Var loss = grad::sum(lp * tape.constant(w));
      out.posterior = loss.value().item();
      if (std::isfinite(out.posterior)) {
        posterior_opt_.zero_grad();
        tape.backward(loss);
        posterior_opt_.step();
      }
    }
  }

  // lazily recomputed rewards
  std::vector<double> rewards(E * T);
  if (cfg_.reward == RewardMode::kScee) {
    const auto lq = reward_posterior().log_prob_values(theta_all, emb_vals);
    for (std::size_t e = 0; e < E; ++e) {
      const auto r = scee_rewards(std::span<const double>(lq).subspan(e * S, S), cfg_.fixed_initial_posterior);
      std::copy(r.begin(), r.end(), rewards.begin() + static_cast<std::ptrdiff_t>(e * T));
    }
  } else {
    for (std::size_t e = 0; e < E; ++e) {
      std::copy(entries[e].fixed_rewards.begin(), entries[e].fixed_rewards.end(),
                rewards.begin() + static_cast<std::ptrdiff_t>(e * T));
    }
  }

  const std::size_t D = agent_->config().state_dim, F = env_.feature_dim(), W = agent_->action_width();
  const std::size_t B = cfg_.embed_dim;
  auto write_state = [&](std::span<double> row, std::size_t e, std::size_t t) {
    std::copy_n(emb_vals.row_span(e * S + t).begin(), B, row.begin());
    auto feat = row.subspan(B, F);
    if (t == 0) {
      std::fill(feat.begin(), feat.end(), 0.0);
    } else {
      env_.features(entries[e].history.design(t - 1), entries[e].history.outcome(t - 1), feat);
    }
    row[B + F] = static_cast<double>(t) / static_cast<double>(T);
  };
  Transitions tr{Tensor(E * T, D), Tensor(E * T, W), Tensor(E * T, 1), Tensor(E * T, D), Tensor(E * T, 1)};
  for (std::size_t e = 0; e < E; ++e) {
    for (std::size_t t = 0; t < T; ++t) {
      const std::size_t i = e * T + t;
      write_state(tr.state.row_span(i), e, t);
      write_state(tr.next_state.row_span(i), e, t + 1);
      std::copy_n(entries[e].actions.begin() + static_cast<std::ptrdiff_t>(t * W), W, tr.action.row_span(i).begin());
      tr.reward[i] = rewards[i];
      tr.done[i] = t + 1 == T ? 1.0 : 0.0;
    }
  }
  const auto st = agent_->update(tr, urng);
  agent_->update_targets();
  if (cfg_.use_target_posterior) polyak_update(params_of(target_->flow()), params_of(posterior_->flow()), cfg_.tau);
  out.policy = st.policy_loss;
  out.critic = st.critic_loss;
  return out;
}

void Trainer::record_return(double r) {
  if (recent_returns_.size() < cfg_.return_window) {
    recent_returns_.push_back(r);
  } else {
    recent_returns_[recent_pos_] = r;
    recent_pos_ = (recent_pos_ + 1) % cfg_.return_window;
  }
}

void Trainer::check_divergence(const UpdateLosses& l) {
  const double n = static_cast<double>(recent_returns_.size());
  const double mean = std::accumulate(recent_returns_.begin(), recent_returns_.end(), 0.0) / n;
  if (std::isfinite(mean) && std::abs(mean) <= cfg_.divergence_threshold && std::isfinite(l.critic) &&
      std::isfinite(l.policy)) {
    return;
  }
  std::ostringstream os;
  os << "training diverged at iteration " << iter_ << " (" << ablation_label(cfg_) << ")\n"
     << "  moving-average return " << mean << " over " << recent_returns_.size() << " episodes\n"
     << "  posterior loss " << l.posterior << ", policy loss " << l.policy << ", critic loss " << l.critic
     << ", alpha " << agent_->alpha() << "\n  recent returns:";
  for (double r : recent_returns_) os << ' ' << r;
  throw DivergenceError(os.str());
}

std::string Trainer::eval_estimator_name(const std::string& requested) const {
  if (requested == "auto") return env_.explicit_likelihood() ? "spce" : "scee";
  if (requested != "spce" && requested != "scee") throw ConfigError("unknown evaluation estimator " + requested);
  return requested;
}

est::EstimateReport Trainer::evaluate(std::size_t n, std::uint64_t seed, const std::string& estimator, std::size_t L,
                                      std::size_t T) {
  LearnedPolicy pol(*this, true);
  const dist::Rng r(seed);
  const auto rs = est::rollout_policy(env_, pol, r, n, T == 0 ? horizon_ : T);
  est::EstimateReport rep;
  if (eval_estimator_name(estimator) == "spce") {
    rep = est::spce(rs, env_, L == 0 ? cfg_.eval_L : L, r.split(0xC0FFEE));
  } else {
    est::FlowProposal q(env_, *posterior_);
    rep = est::scee(rs, q, env_.prior_entropy());
    rep.env = env_.name();
  }
  rep.seed = seed;
  return rep;
}

void Trainer::step() {
  ++iter_;
  const dist::Rng it = rng_.split(0x100000 + iter_);
  for (std::size_t k = 0; k < cfg_.rollouts_per_iter; ++k) {
    dist::Rng cr = it.split(k);
    ReplayEntry e = collect(cr, buffer_.pushed() < cfg_.warmup_rollouts);
    const auto r = rewards(e);
    record_return(std::accumulate(r.begin(), r.end(), 0.0));
    buffer_.push(std::move(e));
  }
  for (std::size_t u = 0; u < cfg_.updates_per_iter; ++u) last_ = update();
  check_divergence(last_);

  const bool eval_due = iter_ % cfg_.eval_every == 0 || iter_ == cfg_.iterations;
  if (iter_ % cfg_.log_every != 0 && !eval_due) return;
  LogRow row;
  row.iter = iter_;
  const double n = static_cast<double>(recent_returns_.size());
  row.return_mean = std::accumulate(recent_returns_.begin(), recent_returns_.end(), 0.0) / n;
  double ss = 0;
  for (double v : recent_returns_) ss += (v - row.return_mean) * (v - row.return_mean);
  row.return_stderr = n > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
  row.posterior_loss = last_.posterior;
  row.policy_loss = last_.policy;
  row.critic_loss = last_.critic;
  if (eval_due && cfg_.eval_rollouts > 0) {
    const auto rep = evaluate(cfg_.eval_rollouts, cfg_.seed ^ 0xE7A1ull, cfg_.eval_estimator);
    row.eval_eig = rep.value;
    row.eval_stderr = rep.stderr_;
  }
  row.wall_ms = now_ms() - wall_start_ms_;
  log_.push_back(row);
}

const std::vector<LogRow>& Trainer::train() {
  while (iter_ < cfg_.iterations) step();
  return log_;
}

grad::Checkpoint Trainer::checkpoint(const std::map<std::string, std::string>& metadata) {
  grad::Checkpoint c;
  c.seed = cfg_.seed;
  c.metadata = metadata;
  c.metadata["env"] = env_.name();
  c.metadata["iteration"] = std::to_string(iter_);
  c.metadata["variant"] = ablation_label(cfg_);
  grad::store_parameters(c, "policy/", agent_->policy_parameters());
  grad::store_parameters(c, "policy/", agent_->alpha_parameters());
  for (std::size_t i = 0; i < cfg_.ensemble; ++i) {
    grad::store_parameters(c, "critic_" + std::to_string(i) + "/", agent_->critic_parameters(i));
    grad::store_parameters(c, "critic_" + std::to_string(i) + "/", agent_->target_critic_parameters(i));
  }
  grad::store_parameters(c, "encoder/", params_of(posterior_->encoder()));
  grad::store_parameters(c, "flow/", flow_state(*posterior_));
  grad::store_parameters(c, "flow_target/", flow_state(*target_));
  return c;
}

void Trainer::restore(const grad::Checkpoint& c) {
  if (c.metadata.count("env") && c.metadata.at("env") != env_.name()) {
    throw ConfigError("checkpoint was trained on " + c.metadata.at("env") + ", not " + env_.name());
  }
  try {
    grad::restore_parameters(c, "policy/", agent_->policy_parameters());
    grad::restore_parameters(c, "policy/", agent_->alpha_parameters());
    for (std::size_t i = 0; i < cfg_.ensemble; ++i) {
      grad::restore_parameters(c, "critic_" + std::to_string(i) + "/", agent_->critic_parameters(i));
      grad::restore_parameters(c, "critic_" + std::to_string(i) + "/", agent_->target_critic_parameters(i));
    }
    grad::restore_parameters(c, "encoder/", params_of(posterior_->encoder()));
    grad::restore_parameters(c, "flow/", flow_state(*posterior_));
    grad::restore_parameters(c, "flow_target/", flow_state(*target_));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("checkpoint does not match this environment/config: ") + e.what());
  }
  if (c.metadata.count("iteration")) iter_ = std::stoul(c.metadata.at("iteration"));
}

}  // namespace boed::rl
