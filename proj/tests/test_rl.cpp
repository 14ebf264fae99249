#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "boed/env/tasks.hpp"
#include "boed/errors.hpp"
#include "boed/est/proposal.hpp"
#include "boed/grad/ops.hpp"
#include "boed/rl/trainer.hpp"
#include "doctest.h"
#include "support/jacobian.hpp"

using namespace boed;
using namespace boed::rl;
using grad::Tensor;

namespace {

TrainConfig small_config(const std::string& env, std::size_t iterations, std::uint64_t seed = 1) {
  TrainConfig c = default_train_config(env);
  c.iterations = iterations;
  c.seed = seed;
  c.agent_hidden = 32;
  c.flow_layers = 2;
  c.flow_hidden = 32;
  c.embed_dim = 16;
  c.encoder_hidden = 32;
  c.attention_heads = 2;
  c.batch_size = 32;
  c.warmup_rollouts = 4;
  c.updates_per_iter = 1;
  c.eval_rollouts = 0;
  c.buffer_size = 1000;
  c.log_every = 1;
  return c;
}

double stderr_of(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / (n - 1) / n);
}

}  // namespace

TEST_CASE("polyak_update") {
  grad::Parameter t("t", Tensor::row({0.0, 2.0})), l("l", Tensor::row({2.0, 2.0}));
  polyak_update({&t}, {&l}, 0.25);
  CHECK(t.value(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(t.value(0, 1) == doctest::Approx(2.0).epsilon(1e-15));

  SUBCASE("tau = 1 copies") {
    grad::Parameter a("a", Tensor::row({-3.0, 7.5})), b("b", Tensor::row({0.1, 0.2}));
    polyak_update({&a}, {&b}, 1.0);
    CHECK(a.value(0, 0) == 0.1);
    CHECK(a.value(0, 1) == 0.2);
  }
  SUBCASE("gap shrinks geometrically") {
    grad::Parameter a("a", Tensor::row({1.0})), b("b", Tensor::row({0.0}));
    for (int k = 0; k < 10; ++k) polyak_update({&a}, {&b}, 0.1);
    CHECK(a.value(0, 0) == doctest::Approx(std::pow(0.9, 10)).epsilon(1e-13));
  }
  SUBCASE("bad arguments") {
    grad::Parameter a("a", Tensor::row({1.0})), b("b", Tensor::row({0.0, 1.0}));
    CHECK_THROWS_AS(polyak_update({&a}, {&b}, 0.5), ContractViolation);
    CHECK_THROWS_AS(polyak_update({&a}, {}, 0.5), ContractViolation);
    CHECK_THROWS_AS(polyak_update({&a}, {&a}, 0.0), ConfigError);
    CHECK_THROWS_AS(polyak_update({&a}, {&a}, 1.5), ConfigError);
  }
}

TEST_CASE("actions map onto designs") {
  env::DesignSpace box{{-4.0, 0.0}, {4.0, 2.0}, false};
  std::vector<double> d(2);
  design_from_action(box, std::vector<double>{-1.0, 1.0}, d);
  CHECK(d[0] == -4.0);
  CHECK(d[1] == 2.0);
  design_from_action(box, std::vector<double>{0.0, 0.0}, d);
  CHECK(d[0] == 0.0);
  CHECK(d[1] == 1.0);
  CHECK(action_count(box) == 0);

  env::DesignSpace ints{{1.0}, {300.0}, true};
  CHECK(action_count(ints) == 300);
  std::vector<double> k(1);
  design_from_action(ints, std::vector<double>{0.0}, k);
  CHECK(k[0] == 1.0);
  design_from_action(ints, std::vector<double>{299.0}, k);
  CHECK(k[0] == 300.0);
}

TEST_CASE("sed mdp") {
  auto src = env::make_environment("source", {{"T", 3.0}});
  dist::Rng rng(5);
  flow::HistoryEncoder enc("enc", {src->feature_dim(), 8, 16, 2}, rng);

  SUBCASE("initial state is empty") {
    SedMdp mdp(*src, enc, 3);
    std::vector<double> theta(src->theta_dim());
    src->sample_prior(rng, theta);
    const auto& s = mdp.reset(theta, rng);
    CHECK(s.t == 0);
    CHECK(std::all_of(s.embedding.begin(), s.embedding.end(), [](double v) { return v == 0.0; }));
    const auto in = policy_input(s, 3);
    CHECK(in.size() == policy_input_dim(*src, 8));
    CHECK(std::all_of(in.begin(), in.end(), [](double v) { return v == 0.0; }));
  }

  SUBCASE("episode completes after T steps") {
    SedMdp mdp(*src, enc, 3);
    std::vector<double> theta(src->theta_dim()), d = {0.5, -0.5};
    src->sample_prior(rng, theta);
    mdp.reset(theta, rng);
    CHECK_FALSE(mdp.step(d, rng).done);
    CHECK_FALSE(mdp.step(d, rng).done);
    CHECK(mdp.step(d, rng).done);
    CHECK(mdp.history().size() == 3);
    CHECK(policy_input(mdp.state(), 3).back() == 1.0);
    CHECK_THROWS_AS(mdp.step(d, rng), ContractViolation);
  }

  SUBCASE("sPCE return equals the single-sample integrand") {
    const std::size_t L = 50;
    SedMdp mdp(*src, enc, 3, true, L);
    for (int rep = 0; rep < 5; ++rep) {
      std::vector<double> theta(src->theta_dim());
      src->sample_prior(rng, theta);
      mdp.reset(theta, rng);
      double ret = 0;
      for (int t = 0; t < 3; ++t) {
        std::vector<double> d = {rng.uniform(-4, 4), rng.uniform(-4, 4)};
        ret += mdp.step(d, rng).reward;
      }
      std::vector<double> ll(L + 1);
      src->history_log_lik(mdp.history(), mdp.contrast_thetas(), ll);
      const double integrand = ll[0] - grad::logsumexp(ll) + std::log(static_cast<double>(L + 1));
      CHECK(std::abs(ret - integrand) < 1e-8);
    }
  }

  SUBCASE("L = 0 gives zero sPCE reward") {
    SedMdp mdp(*src, enc, 3, true, 0);
    std::vector<double> theta(src->theta_dim()), d = {1.0, 1.0};
    src->sample_prior(rng, theta);
    mdp.reset(theta, rng);
    for (int t = 0; t < 3; ++t) CHECK(std::abs(mdp.step(d, rng).reward) < 1e-12);
  }
}

TEST_CASE("sPCE reward by hand with two contrastive draws") {
  std::vector<double> prev = {0.0, 0.0, 0.0}, next = prev;
  const std::vector<double> step1 = {-1.0, -2.0, -0.5}, step2 = {-0.3, -4.0, -1.0};
  accumulate_log_c(next, step1);
  const double r1 = spce_reward(prev, next);
  prev = next;
  accumulate_log_c(next, step2);
  const double r2 = spce_reward(prev, next);
  // C_T is the elementwise product of per-step likelihoods.
  std::vector<double> c(3);
  for (int i = 0; i < 3; ++i) c[i] = std::exp(step1[i]) * std::exp(step2[i]);
  const double expected = std::log(c[0] / ((c[0] + c[1] + c[2]) / 3.0));
  CHECK(r1 + r2 == doctest::Approx(expected).epsilon(1e-12));
  CHECK(r1 == doctest::Approx(std::log(std::exp(-1.0) / ((std::exp(-1.0) + std::exp(-2.0) + std::exp(-0.5)) / 3)))
                  .epsilon(1e-12));
  CHECK_THROWS_AS(accumulate_log_c(next, std::vector<double>{1.0}), ContractViolation);
}

TEST_CASE("sPCE rewards on the conjugate task ignore the design") {
  env::ConjugateGaussianTask task(2, 0.0, 1.0, 1.0, 4);
  dist::Rng rng(2);
  flow::HistoryEncoder enc("enc", {2, 4, 8, 0}, rng);
  SedMdp a(task, enc, 4, true, 20), b(task, enc, 4, true, 20);
  const std::vector<double> theta = {0.3, -0.2};
  dist::Rng ra(9), rb(9);
  a.reset(theta, ra);
  b.reset(theta, rb);
  for (int t = 0; t < 4; ++t) {
    CHECK(a.step(std::vector<double>{-1.0}, ra).reward == b.step(std::vector<double>{0.7}, rb).reward);
  }
}

TEST_CASE("sCEE rewards") {
  CHECK(scee_reward(-3.0, -5.0) == 2.0);
  CHECK(scee_reward(-1e9, 0.0) == kLogQFloor);
  const std::vector<double> lq = {-4.0, -3.0, -3.0, -1.5};
  const auto fixed = scee_rewards(lq, true);
  REQUIRE(fixed.size() == 3);
  CHECK(fixed[0] == -3.0);
  CHECK(fixed[1] == 0.0);
  CHECK(fixed[2] == 1.5);
  CHECK(std::accumulate(fixed.begin(), fixed.end(), 0.0) == doctest::Approx(lq.back()).epsilon(1e-15));
  const auto live = scee_rewards(lq, false);
  CHECK(live[0] == 1.0);
  CHECK(std::accumulate(live.begin(), live.end(), 0.0) == doctest::Approx(lq.back() - lq.front()).epsilon(1e-15));
  CHECK_THROWS_AS(scee_rewards(std::vector<double>{}, true), ContractViolation);
}

TEST_CASE("analytic posterior return matches EIG minus prior entropy") {
  env::ConjugateGaussianTask task(10, 0.0, 0.25, 1.0, 10);
  est::GaussianPosteriorProposal q(task);
  est::ConstantPolicy pol({0.0});
  const auto rs = est::rollout_policy(task, pol, dist::Rng(4), 4000);
  std::vector<double> returns;
  for (const auto& r : rs) {
    std::vector<double> lq;
    for (std::size_t t = 0; t <= r.history.size(); ++t) lq.push_back(q.log_prob(r.theta, r.history.prefix(t)));
    const auto rew = scee_rewards(lq, true);
    returns.push_back(std::accumulate(rew.begin(), rew.end(), 0.0));
  }
  const double mean = std::accumulate(returns.begin(), returns.end(), 0.0) / returns.size();
  CHECK(std::abs(mean - (task.true_eig(10) - task.prior_entropy())) < 4 * stderr_of(returns));
}

TEST_CASE("replay buffer") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) {
    ReplayEntry e;
    e.theta = {static_cast<double>(i)};
    buf.push(e);
  }
  CHECK(buf.size() == 3);
  CHECK(buf.pushed() == 5);
  dist::Rng rng(1);
  auto all = buf.sample(3, rng);
  std::set<double> seen;
  for (const auto& e : all) seen.insert(e.theta[0]);
  CHECK(seen == std::set<double>{2.0, 3.0, 4.0});
  CHECK_THROWS_AS(buf.sample(4, rng), ContractViolation);
  CHECK_THROWS_AS(ReplayBuffer(0), ConfigError);

  std::vector<int> hits(20, 0);
  for (int rep = 0; rep < 2000; ++rep) {
    const auto idx = ReplayBuffer::sample_indices(20, 5, rng);
    CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 5);
    CHECK(std::is_sorted(idx.begin(), idx.end()));
    for (auto i : idx) hits[i] += 1;
  }
  // Each index is picked with probability 1/4: 500 expected, sd about 19.
  for (int h : hits) CHECK(std::abs(h - 500) < 100);
}

TEST_CASE("agent learns a one-step bandit") {
  SUBCASE("continuous") {
    AgentConfig ac;
    ac.state_dim = 1;
    ac.action_dim = 1;
    ac.hidden = 32;
    ac.policy_lr = 3e-3;
    ac.critic_lr = 3e-3;
    ac.alpha_lr = 3e-3;
    ac.init_alpha = 0.01;
    dist::Rng rng(3);
    SacAgent agent(ac, rng);
    for (int it = 0; it < 600; ++it) {
      Transitions b{Tensor(64, 1), Tensor(64, 1), Tensor(64, 1), Tensor(64, 1), Tensor(64, 1)};
      for (int i = 0; i < 64; ++i) {
        const double a = rng.uniform(-1.0, 1.0);
        b.action(i, 0) = a;
        b.reward(i, 0) = -(a - 0.5) * (a - 0.5);
        b.done(i, 0) = 1.0;
      }
      agent.update(b, rng);
      agent.update_targets();
    }
    const Tensor a = agent.act(Tensor(1, 1), rng, true);
    CHECK(std::abs(a(0, 0) - 0.5) < 0.15);
    const Tensor s = agent.act(Tensor(100, 1), rng, false);
    for (std::size_t i = 0; i < 100; ++i) CHECK(std::abs(s(i, 0)) < 1.0);
  }
  SUBCASE("discrete") {
    AgentConfig ac;
    ac.state_dim = 1;
    ac.action_count = 6;
    ac.hidden = 32;
    ac.policy_lr = 3e-3;
    ac.critic_lr = 3e-3;
    ac.alpha_lr = 3e-3;
    dist::Rng rng(3);
    SacAgent agent(ac, rng);
    for (int it = 0; it < 400; ++it) {
      Transitions b{Tensor(64, 1), Tensor(64, 1), Tensor(64, 1), Tensor(64, 1), Tensor(64, 1)};
      for (int i = 0; i < 64; ++i) {
        const auto k = rng.uniform_int(0, 5);
        b.action(i, 0) = static_cast<double>(k);
        b.reward(i, 0) = k == 3 ? 1.0 : 0.0;
        b.done(i, 0) = 1.0;
      }
      agent.update(b, rng);
      agent.update_targets();
    }
    CHECK(agent.act(Tensor(1, 1), rng, true)(0, 0) == 3.0);
    const Tensor s = agent.act(Tensor(200, 1), rng, false);
    for (std::size_t i = 0; i < 200; ++i) {
      CHECK(s(i, 0) == std::round(s(i, 0)));
      CHECK(s(i, 0) >= 0.0);
      CHECK(s(i, 0) <= 5.0);
    }
  }
}

TEST_CASE("config validation and ablation labels") {
  TrainConfig c = default_train_config("source");
  CHECK(c.gamma == 0.9);
  CHECK(c.tau == 1e-3);
  CHECK(c.policy_lr == 1e-4);
  CHECK(c.critic_lr == 3e-4);
  CHECK(default_train_config("prey").gamma == 0.95);
  CHECK(default_train_config("ces").tau == 5e-3);
  CHECK(validate_config(c).empty());
  CHECK(ablation_label(c) == "target_on+fixed_init_on");
  const auto off = ablation_toggles(c, false, false);
  CHECK(ablation_label(off) == "target_off+fixed_init_off");
  CHECK_FALSE(validate_config(off).empty());
  TrainConfig bad = c;
  bad.gamma = 1.5;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = c;
  bad.tau = 0.0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = c;
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
}

TEST_CASE("trainer rewards telescope to the target posterior") {
  auto src = env::make_environment("source", {{"T", 4.0}});
  for (bool fixed : {true, false}) {
    CAPTURE(fixed);
    Trainer tr(*src, ablation_toggles(small_config("source", 10), true, fixed));
    for (int i = 0; i < 6; ++i) tr.step();
    dist::Rng jr(11);
    std::vector<grad::Parameter*> ps;
    tr.target_posterior().collect(ps);
    boed::testing::jitter_parameters(ps, jr, 0.2);
    dist::Rng cr(21);
    for (int k = 0; k < 5; ++k) {
      const auto e = tr.collect(cr, false);
      const auto r = tr.rewards(e);
      const auto lq = tr.reward_log_q(e);
      REQUIRE(r.size() == 4);
      const double sum = std::accumulate(r.begin(), r.end(), 0.0);
      const double expected = fixed ? lq.back() : lq.back() - lq.front();
      CHECK(std::abs(sum - expected) < 1e-10);
      // Rewards are recomputed from the current target, not cached.
      boed::testing::jitter_parameters(ps, jr, 0.05);
      const auto r2 = tr.rewards(e);
      CHECK(r2 != r);
    }
  }
}

TEST_CASE("trainer in sPCE mode stores fixed rewards") {
  auto src = env::make_environment("source", {{"T", 3.0}});
  TrainConfig c = small_config("source", 5);
  c.reward = RewardMode::kSpce;
  c.spce_L = 30;
  Trainer tr(*src, c);
  dist::Rng cr(3);
  const auto e = tr.collect(cr, true);
  REQUIRE(e.fixed_rewards.size() == 3);
  CHECK(tr.rewards(e) == e.fixed_rewards);
  const double ret = std::accumulate(e.fixed_rewards.begin(), e.fixed_rewards.end(), 0.0);
  CHECK(ret <= std::log(31.0) + 1e-12);
  tr.train();
  CHECK(tr.iteration() == 5);
}

TEST_CASE("trainer is deterministic for a fixed seed") {
  auto src = env::make_environment("source", {{"T", 3.0}});
  Trainer a(*src, small_config("source", 8, 42)), b(*src, small_config("source", 8, 42));
  a.train();
  b.train();
  REQUIRE(a.log().size() == b.log().size());
  for (std::size_t i = 0; i < a.log().size(); ++i) {
    CHECK(train_log_row(a.log()[i], false) == train_log_row(b.log()[i], false));
  }
  Trainer c(*src, small_config("source", 8, 43));
  c.train();
  CHECK(train_log_row(a.log().back(), false) != train_log_row(c.log().back(), false));
  CHECK(a.clamp_count() == 0);
}

TEST_CASE("discrete designs stay on the integer grid") {
  auto prey = env::make_environment("prey", {{"T", 3.0}});
  Trainer tr(*prey, small_config("prey", 12));
  tr.train();
  dist::Rng rng(1);
  for (const auto& e : tr.buffer().sample(tr.buffer().size(), rng)) {
    for (std::size_t t = 0; t < e.history.size(); ++t) {
      const double d = e.history.design(t)[0];
      CHECK(d == std::round(d));
      CHECK(d >= 1.0);
      CHECK(d <= 300.0);
    }
  }
  CHECK(tr.clamp_count() == 0);
}

TEST_CASE("all four posterior toggles run without divergence") {
  auto src = env::make_environment("source", {{"T", 3.0}});
  std::set<std::string> labels;
  for (bool target : {true, false}) {
    for (bool fixed : {true, false}) {
      Trainer tr(*src, ablation_toggles(small_config("source", 15), target, fixed));
      CHECK_NOTHROW(tr.train());
      labels.insert(ablation_label(tr.config()));
      const bool warned = std::any_of(tr.warnings().begin(), tr.warnings().end(),
                                      [](const std::string& w) { return w.find("tau") != std::string::npos; });
      CHECK(warned == !target);
    }
  }
  CHECK(labels.size() == 4);
}

TEST_CASE("train log formatting") {
  CHECK(train_log_header() == "iter,return_mean,return_stderr,L_q,policy_loss,critic_loss,eval_eig,eval_stderr,wall_ms");
  LogRow r;
  r.iter = 3;
  r.return_mean = 1.5;
  const auto row = train_log_row(r, false);
  CHECK(row.rfind("3,1.5,", 0) == 0);
  CHECK(row.find(",,,0") != std::string::npos);
}

TEST_CASE("checkpoint round trip") {
  auto src = env::make_environment("source", {{"T", 3.0}});
  Trainer a(*src, small_config("source", 6, 7));
  a.train();
  const auto bytes = grad::serialize(a.checkpoint({{"note", "x"}}));
  const auto ck = grad::deserialize(bytes);
  CHECK(ck.metadata.at("variant") == "target_on+fixed_init_on");
  CHECK(ck.metadata.at("iteration") == "6");
  Trainer b(*src, small_config("source", 6, 99));
  b.restore(ck);
  CHECK(b.iteration() == 6);
  dist::Rng cr(5);
  const auto e = a.collect(cr, true);
  CHECK(a.reward_log_q(e) == b.reward_log_q(e));
  const auto s = a.state_of(e.history.prefix(2));
  dist::Rng r1(1), r2(1);
  CHECK(a.agent().act(Tensor::row(s), r1, true)(0, 0) == b.agent().act(Tensor::row(s), r2, true)(0, 0));

  auto prey = env::make_environment("prey", {{"T", 3.0}});
  Trainer p(*prey, small_config("prey", 1));
  CHECK_THROWS_AS(p.restore(ck), ConfigError);
}
