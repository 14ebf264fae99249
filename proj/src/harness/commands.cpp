#include "boed/harness/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "boed/dist/distributions.hpp"
#include "boed/env/tasks.hpp"
#include "boed/errors.hpp"
#include "boed/est/amortized.hpp"
#include "boed/est/estimators.hpp"
#include "boed/est/parallel.hpp"
#include "boed/harness/history_io.hpp"

namespace boed::harness {

namespace fs = std::filesystem;

namespace {

const char* kLNote = "contrastive L is capped at desk scale (routine runs L <= 1e4) instead of the 1e8 used for the published tables";

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

void write_file(const fs::path& p, const std::string& body) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  out << body;
}

RunManifest start_manifest(const std::string& command, const ExperimentConfig& cfg,
                           const std::vector<std::string>& inputs) {
  RunManifest m;
  m.command = command;
  m.config = to_json(cfg);
  m.input_hash = input_hash(command, m.config, inputs);
  return m;
}

void finish_manifest(const RunManifest& m, const ExperimentConfig& cfg) {
  fs::create_directories(cfg.out);
  write_manifest(m, (fs::path(cfg.out) / "manifest.json").string());
}

std::string resolve_estimator(const std::string& name, const env::LikelihoodModel& env) {
  if (name != "auto") return name;
  return env.explicit_likelihood() ? "spce" : "scee";
}

// Trainer rebuilt with the network shapes recorded in the checkpoint.
std::unique_ptr<rl::Trainer> trainer_from_checkpoint(const env::LikelihoodModel& env, const std::string& path) {
  if (path.empty()) throw ConfigError("a checkpoint path is required");
  const auto ck = grad::load_checkpoint(path);
  if (ck.metadata.count("env") && ck.metadata.at("env") != env.name()) {
    throw ConfigError("checkpoint was trained on " + ck.metadata.at("env") + ", not " + env.name());
  }
  rl::TrainConfig tc = rl::default_train_config(env.name());
  if (ck.metadata.count("config")) {
    tc = trainer_from_json(Json::parse(ck.metadata.at("config")).at("trainer"), tc);
  }
  tc.seed = ck.seed;
  auto tr = std::make_unique<rl::Trainer>(env, tc);
  tr->restore(ck);
  return tr;
}

std::string train_log_csv(const std::vector<rl::LogRow>& rows, bool wall, const std::string& prefix_header,
                          const std::string& prefix) {
  std::string s = prefix_header + rl::train_log_header() + "\n";
  for (const auto& r : rows) s += prefix + rl::train_log_row(r, wall) + "\n";
  return s;
}

struct TrainOutcome {
  std::vector<rl::LogRow> log;
  grad::Checkpoint checkpoint;
  bool diverged = false;
  std::string message;
  std::vector<std::string> warnings;
};

TrainOutcome run_training(const ExperimentConfig& cfg, const rl::TrainConfig& tc) {
  const auto env = env::make_environment(cfg.env_name, cfg.env_params);
  rl::Trainer tr(*env, tc);
  TrainOutcome out;
  out.warnings = tr.warnings();
  try {
    tr.train();
  } catch (const rl::DivergenceError& e) {
    out.diverged = true;
    out.message = e.what();
  }
  out.log = tr.log();
  ExperimentConfig snap = cfg;
  snap.trainer = tc;
  out.checkpoint = tr.checkpoint({{"config", to_json(snap).dump()}});
  return out;
}

}  // namespace

std::vector<std::string> command_names() { return {"estimate", "train", "eval", "posterior", "ablate"}; }

std::string table1_header() {
  return "k,prior_var,noise_var,T,true_eig,estimator,L,n,seed,value,stderr,excluded,wall_ms,note";
}

std::string eig_curve_header() { return "t,estimator,L,n,value,stderr"; }

bool manifest_reports_divergence(const RunManifest& m) {
  return std::any_of(m.notes.begin(), m.notes.end(), [](const std::string& n) { return n.rfind("diverged", 0) == 0; });
}

RunManifest cmd_estimate(const ExperimentConfig& cfg, std::ostream& log) {
  RunManifest m = start_manifest("estimate", cfg, {});
  m.notes.push_back(kLNote);
  const auto& eb = cfg.estimate;
  const std::vector<std::size_t> Ls = eb.L.empty() ? std::vector<std::size_t>{cfg.estimator.L} : eb.L;
  const std::uint64_t seed = cfg.seeds.front();
  std::vector<std::string> blocks(eb.tasks.size());
  std::vector<std::string> notes(eb.tasks.size());

  est::parallel_for(eb.tasks.size(), cfg.workers, [&](std::size_t ti) {
    const auto [kd, pv, nv] = eb.tasks[ti];
    const std::string lead = fmt(kd) + "," + fmt(pv) + "," + fmt(nv) + "," + std::to_string(eb.T) + ",";
    std::string reason;
    if (!(kd >= 1 && kd == std::round(kd))) reason = "k must be a positive integer";
    if (!(pv > 0 && std::isfinite(pv))) reason = "prior variance must be positive";
    if (!(nv > 0 && std::isfinite(nv))) reason = "noise variance must be positive";
    if (eb.T == 0) reason = "T must be positive";
    if (!reason.empty()) {
      blocks[ti] = lead + ",skipped,,,,,,,," + "skipped: " + reason + "\n";
      notes[ti] = "task " + std::to_string(ti) + " skipped: " + reason;
      return;
    }
    const auto k = static_cast<std::size_t>(kd);
    env::ConjugateGaussianTask task(k, 0.0, pv, nv, eb.T);
    const double truth = dist::closed_form_eig(k, pv, nv, eb.T);
    est::ConstantPolicy pol({0.0});
    const dist::Rng root(seed + 7919 * ti);
    const auto rs = est::rollout_policy(task, pol, root.split(0), cfg.estimator.n);
    est::GaussianPosteriorProposal q(task);
    const est::ContrastiveOptions opt{cfg.estimator.chunk, 1};
    std::string out;
    auto emit = [&](const est::EstimateReport& r, const std::string& name, const std::string& note) {
      out += lead + fmt(truth) + "," + name + "," + std::to_string(r.L) + "," + std::to_string(r.n) + "," +
             std::to_string(seed) + "," + fmt(r.value) + "," + fmt(r.stderr_) + "," + std::to_string(r.excluded) +
             "," + fmt(cfg.wall_time ? r.wall_ms : 0.0) + "," + note + "\n";
    };
    for (const auto& name : eb.estimators) {
      if (name == "scee") {
        emit(est::scee(rs, q, task.prior_entropy()), "scee", "analytic proposal");
        continue;
      }
      for (std::size_t L : Ls) {
        const dist::Rng cr = root.split(1);
        if (name == "spce") emit(est::spce(rs, task, L, cr, opt), name, "");
        if (name == "snmc") {
          if (L == 0) continue;
          emit(est::snmc(rs, task, L, cr, opt), name, "");
        }
        if (name == "sace") emit(est::sace(rs, q, task, L, cr, opt), name, "analytic proposal");
      }
    }
    if (eb.learned_flow.enabled) {
      const auto& lf = eb.learned_flow;
      flow::PosteriorConfig pc;
      pc.encoder.embed_dim = lf.embed_dim;
      pc.encoder.heads = lf.heads;
      pc.encoder.hidden = lf.hidden;
      pc.flow.layers = lf.layers;
      pc.flow.hidden = lf.hidden;
      dist::Rng ir = root.split(2);
      flow::PosteriorModel model(task, pc, ir);
      auto fc = lf.fit;
      fc.seed = seed + 31 * ti;
      const auto fit = est::fit_posterior_offline(task, pol, model, fc);
      est::FlowProposal fq(task, model);
      emit(est::scee(rs, fq, task.prior_entropy()), "scee_flow",
           "learned flow; " + std::to_string(fc.samples) + " training samples; best epoch " +
               std::to_string(fit.best_epoch + 1));
    }
    blocks[ti] = out;
  });

  std::string csv = table1_header() + "\n";
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    csv += blocks[i];
    if (!notes[i].empty()) {
      m.notes.push_back(notes[i]);
      log << notes[i] << "\n";
    }
  }
  write_file(fs::path(cfg.out) / "table1.csv", csv);
  m.outputs["estimate"] = {"table1.csv"};
  finish_manifest(m, cfg);
  log << "wrote " << (fs::path(cfg.out) / "table1.csv").string() << "\n";
  return m;
}

RunManifest cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  RunManifest m = start_manifest("train", cfg, {});
  std::vector<TrainOutcome> runs(cfg.seeds.size());
  est::parallel_for(cfg.seeds.size(), cfg.workers, [&](std::size_t i) {
    rl::TrainConfig tc = cfg.trainer;
    tc.seed = cfg.seeds[i];
    tc.record_wall_time = cfg.wall_time;
    runs[i] = run_training(cfg, tc);
  });
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::string dir = "seed_" + std::to_string(cfg.seeds[i]);
    write_file(fs::path(cfg.out) / dir / "train_log.csv", train_log_csv(runs[i].log, cfg.wall_time, "", ""));
    grad::save_checkpoint(runs[i].checkpoint, fs::path(cfg.out) / dir / "checkpoint.bin");
    m.outputs[dir] = {dir + "/train_log.csv", dir + "/checkpoint.bin"};
    for (const auto& w : runs[i].warnings) m.notes.push_back("warning (" + dir + "): " + w);
    if (runs[i].diverged) {
      m.notes.push_back("diverged (" + dir + "): " + runs[i].message);
      log << "seed " << cfg.seeds[i] << " diverged: " << runs[i].message << "\n";
    } else if (!runs[i].log.empty()) {
      const auto& last = runs[i].log.back();
      log << "seed " << cfg.seeds[i] << ": " << last.iter << " iterations, return " << fmt(last.return_mean);
      if (last.eval_eig) log << ", eval " << fmt(*last.eval_eig) << " +- " << fmt(*last.eval_stderr);
      log << "\n";
    }
  }
  finish_manifest(m, cfg);
  return m;
}

RunManifest cmd_eval(const ExperimentConfig& cfg, std::ostream& log) {
  std::vector<std::string> inputs;
  if (!cfg.eval.checkpoint.empty()) inputs.push_back(cfg.eval.checkpoint);
  RunManifest m = start_manifest("eval", cfg, inputs);
  m.notes.push_back(kLNote);
  const auto env = env::make_environment(cfg.env_name, cfg.env_params);
  std::unique_ptr<rl::Trainer> tr;
  if (!cfg.eval.checkpoint.empty()) tr = trainer_from_checkpoint(*env, cfg.eval.checkpoint);
  if (cfg.eval.policy == "learned" && !tr) throw ConfigError("eval with the learned policy needs eval.checkpoint");

  std::unique_ptr<est::DesignPolicy> policy;
  if (cfg.eval.policy == "learned") {
    policy = std::make_unique<rl::LearnedPolicy>(*tr, true);
  } else {
    policy = std::make_unique<est::RandomPolicy>(env->design_space());
  }
  const std::string name = resolve_estimator(cfg.estimator.name, *env);
  std::unique_ptr<est::Proposal> q;
  if (name == "scee" || name == "sace") {
    if (tr) {
      q = std::make_unique<est::FlowProposal>(*env, tr->posterior());
    } else if (const auto* conj = dynamic_cast<const env::ConjugateGaussianTask*>(env.get())) {
      q = std::make_unique<est::GaussianPosteriorProposal>(*conj);
    } else {
      throw ConfigError(name + " evaluation needs a checkpoint with a trained posterior");
    }
  }
  const std::size_t T = cfg.eval.T == 0 ? env->horizon() : cfg.eval.T;
  const std::uint64_t seed = cfg.seeds.front();
  const dist::Rng root(seed);
  const auto full = est::rollout_policy(*env, *policy, root.split(0), cfg.estimator.n, T);
  const std::size_t clamped = est::total_clamped(full);
  if (clamped > 0) m.notes.push_back("clamped designs: " + std::to_string(clamped));
  const est::ContrastiveOptions opt{cfg.estimator.chunk, cfg.workers};
  const std::size_t L = (name == "scee") ? 0 : cfg.estimator.L;

  std::string csv = eig_curve_header() + "\n";
  csv += "0," + name + "," + std::to_string(L) + "," + std::to_string(cfg.estimator.n) + ",0,0\n";
  for (std::size_t t = 1; t <= T; ++t) {
    std::vector<est::Rollout> rs(full.size());
    for (std::size_t i = 0; i < full.size(); ++i) {
      rs[i].theta = full[i].theta;
      rs[i].history = full[i].history.prefix(t);
    }
    const dist::Rng cr = root.split(1);
    est::EstimateReport r;
    if (name == "spce") r = est::spce(rs, *env, L, cr, opt);
    if (name == "snmc") r = est::snmc(rs, *env, L, cr, opt);
    if (name == "sace") r = est::sace(rs, *q, *env, L, cr, opt);
    if (name == "scee") r = est::scee(rs, *q, env->prior_entropy());
    csv += std::to_string(t) + "," + name + "," + std::to_string(L) + "," + std::to_string(r.n) + "," + fmt(r.value) +
           "," + fmt(r.stderr_) + "\n";
    if (r.excluded > 0) m.notes.push_back("t=" + std::to_string(t) + ": " + std::to_string(r.excluded) + " rollouts excluded");
    log << "t=" << t << " " << name << " " << fmt(r.value) << " +- " << fmt(r.stderr_) << "\n";
  }
  write_file(fs::path(cfg.out) / "eig_curve.csv", csv);
  m.outputs["eval"] = {"eig_curve.csv"};
  finish_manifest(m, cfg);
  return m;
}

RunManifest cmd_posterior(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.posterior.history.empty()) throw ConfigError("posterior.history is required");
  std::vector<std::string> inputs = {cfg.posterior.history};
  if (cfg.posterior.mode == "flow") inputs.push_back(cfg.posterior.checkpoint);
  RunManifest m = start_manifest("posterior", cfg, inputs);
  const auto env = env::make_environment(cfg.env_name, cfg.env_params);
  const env::History h = read_history_file(cfg.posterior.history, *env);

  std::unique_ptr<rl::Trainer> tr;
  std::unique_ptr<est::Proposal> q;
  if (cfg.posterior.mode == "analytic") {
    const auto* conj = dynamic_cast<const env::ConjugateGaussianTask*>(env.get());
    if (!conj) throw ConfigError("analytic posterior mode is only available for the conjugate environment");
    q = std::make_unique<est::GaussianPosteriorProposal>(*conj);
  } else {
    tr = trainer_from_checkpoint(*env, cfg.posterior.checkpoint);
    q = std::make_unique<est::FlowProposal>(*env, tr->posterior());
  }
  const std::size_t n = cfg.posterior.n, p = env->theta_dim();
  std::vector<double> thetas(n * p), lq(n);
  dist::Rng rng(cfg.seeds.front());
  if (n > 0) q->sample(h, n, rng, thetas, lq);

  std::string csv;
  for (std::size_t j = 0; j < p; ++j) csv += "theta_" + std::to_string(j) + ",";
  csv += "log_q\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) csv += fmt(thetas[i * p + j]) + ",";
    csv += fmt(lq[i]) + "\n";
  }
  write_file(fs::path(cfg.out) / "samples.csv", csv);
  m.outputs["posterior"] = {"samples.csv"};

  // Relabelling diagnostic for the two-source task: the posterior should not
  // care which source is called first.
  if (env->name() == "source" && n > 1 && cfg.env_params.at("sources") >= 2) {
    const auto dim = static_cast<std::size_t>(cfg.env_params.at("dim"));
    double sum = 0.0, ss = 0.0;
    std::vector<double> sw(p);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(thetas.begin() + i * p, thetas.begin() + (i + 1) * p, sw.begin());
      std::swap_ranges(sw.begin(), sw.begin() + dim, sw.begin() + dim);
      const double d = q->log_prob(sw, h) - lq[i];
      sum += d;
      ss += d * d;
    }
    const double mean = sum / n, sd = std::sqrt(std::max(0.0, ss / n - mean * mean));
    std::ostringstream note;
    note << "exchangeability: mean log q(swapped) - log q = " << fmt(mean) << ", sd " << fmt(sd);
    m.notes.push_back(note.str());
    log << note.str() << "\n";
  }
  finish_manifest(m, cfg);
  log << "wrote " << n << " samples\n";
  return m;
}

RunManifest cmd_ablate(const ExperimentConfig& cfg, std::ostream& log) {
  RunManifest m = start_manifest("ablate", cfg, {});
  struct Job {
    std::string variant;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& v : cfg.ablate.variants) {
    for (auto s : cfg.seeds) jobs.push_back({v, s});
  }
  std::vector<TrainOutcome> runs(jobs.size());
  // Common random numbers: every variant reuses the same seed list.
  est::parallel_for(jobs.size(), cfg.workers, [&](std::size_t i) {
    rl::TrainConfig tc = apply_variant(cfg.trainer, jobs[i].variant);
    tc.seed = jobs[i].seed;
    tc.record_wall_time = cfg.wall_time;
    runs[i] = run_training(cfg, tc);
  });
  std::string merged = "variant,seed," + rl::train_log_header() + "\n";
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const std::string prefix = jobs[i].variant + "," + std::to_string(jobs[i].seed) + ",";
    const std::string dir = "ablate/" + jobs[i].variant + "/seed_" + std::to_string(jobs[i].seed);
    const std::string body = train_log_csv(runs[i].log, cfg.wall_time, "variant,seed,", prefix);
    write_file(fs::path(cfg.out) / dir / "train_log.csv", body);
    merged += body.substr(body.find('\n') + 1);
    m.outputs[jobs[i].variant + "/seed_" + std::to_string(jobs[i].seed)] = {dir + "/train_log.csv"};
    if (runs[i].diverged) {
      m.notes.push_back("diverged (" + jobs[i].variant + ", seed " + std::to_string(jobs[i].seed) + "): " + runs[i].message);
    }
    log << jobs[i].variant << " seed " << jobs[i].seed << (runs[i].diverged ? " diverged" : " completed") << "\n";
  }
  write_file(fs::path(cfg.out) / "ablation.csv", merged);
  m.outputs["ablate"] = {"ablation.csv"};
  finish_manifest(m, cfg);
  return m;
}

RunManifest run_command(const std::string& name, const ExperimentConfig& cfg, std::ostream& log) {
  if (name == "estimate") return cmd_estimate(cfg, log);
  if (name == "train") return cmd_train(cfg, log);
  if (name == "eval") return cmd_eval(cfg, log);
  if (name == "posterior") return cmd_posterior(cfg, log);
  if (name == "ablate") return cmd_ablate(cfg, log);
  throw ConfigError("unknown command '" + name + "'");
}

}  // namespace boed::harness
