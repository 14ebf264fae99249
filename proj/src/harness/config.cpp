#include "boed/harness/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "boed/errors.hpp"

namespace boed::harness {

namespace {

const std::vector<std::string> kEstimators = {"spce", "snmc", "sace", "scee"};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Key of `obj` equal to `key` (exactly, or ignoring case).
const std::string* find_key(const Json& obj, const std::string& key, bool ignore_case) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (it.key() == key || (ignore_case && lower(it.key()) == lower(key))) return &it.key();
  }
  return nullptr;
}

void merge(Json& base, const Json& user, const std::string& path, bool ignore_case) {
  if (!user.is_object()) throw ConfigError("'" + path + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string where = path.empty() ? it.key() : path + "." + it.key();
    const std::string* k = find_key(base, it.key(), ignore_case);
    if (!k) throw ConfigError("unknown config key '" + where + "'");
    Json& slot = base[*k];
    if (slot.is_object()) {
      merge(slot, it.value(), where, ignore_case);
    } else {
      if (it.value().is_object()) throw ConfigError("'" + where + "' must not be an object");
      slot = it.value();
    }
  }
}

template <class T>
T get(const Json& j, const char* key, const std::string& section) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config value '" + section + "." + key + "' is missing or has the wrong type");
  }
}

std::size_t get_count(const Json& j, const char* key, const std::string& section) {
  const Json& v = j.at(key);
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::size_t>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d >= 0 && d == static_cast<double>(static_cast<std::size_t>(d))) return static_cast<std::size_t>(d);
  }
  throw ConfigError("config value '" + section + "." + key + "' must be a non-negative integer");
}

Json parse_value(const std::string& s) {
  try {
    return Json::parse(s);
  } catch (const nlohmann::json::exception&) {
    return Json(s);
  }
}

Json fit_to_json(const LearnedFlowBlock& b) {
  return Json{{"enabled", b.enabled},
              {"samples", b.fit.samples},
              {"validation_fraction", b.fit.validation_fraction},
              {"batch", b.fit.batch},
              {"epochs", b.fit.epochs},
              {"patience", b.fit.patience},
              {"lr", b.fit.lr},
              {"layers", b.layers},
              {"hidden", b.hidden},
              {"embed_dim", b.embed_dim},
              {"heads", b.heads}};
}

}  // namespace

std::vector<std::array<double, 3>> table1_tasks() {
  return {{10, 0.5, 5}, {10, 0.5, 1}, {10, 1, 1}, {10, 2, 1}, {10, 2, 0.5}, {10, 4, 0.5}, {20, 4, 0.5}};
}

std::vector<std::string> all_variant_labels() {
  std::vector<std::string> out;
  for (bool target : {true, false}) {
    for (bool fixed : {true, false}) out.push_back(rl::ablation_label(rl::ablation_toggles({}, target, fixed)));
  }
  return out;
}

rl::TrainConfig apply_variant(rl::TrainConfig cfg, const std::string& label) {
  for (bool target : {true, false}) {
    for (bool fixed : {true, false}) {
      auto c = rl::ablation_toggles(cfg, target, fixed);
      if (rl::ablation_label(c) == label) return c;
    }
  }
  throw ConfigError("unknown ablation variant '" + label + "'");
}

Json trainer_to_json(const rl::TrainConfig& c) {
  return Json{{"iterations", c.iterations},
              {"gamma", c.gamma},
              {"tau", c.tau},
              {"policy_lr", c.policy_lr},
              {"critic_lr", c.critic_lr},
              {"posterior_lr", c.posterior_lr},
              {"buffer_size", c.buffer_size},
              {"batch_size", c.batch_size},
              {"rollouts_per_iter", c.rollouts_per_iter},
              {"updates_per_iter", c.updates_per_iter},
              {"warmup_rollouts", c.warmup_rollouts},
              {"ensemble", c.ensemble},
              {"agent_hidden", c.agent_hidden},
              {"flow_layers", c.flow_layers},
              {"flow_hidden", c.flow_hidden},
              {"flow_hidden_layers", c.flow_hidden_layers},
              {"embed_dim", c.embed_dim},
              {"encoder_hidden", c.encoder_hidden},
              {"attention_heads", c.attention_heads},
              {"reward", c.reward == rl::RewardMode::kSpce ? "spce" : "scee"},
              {"spce_L", c.spce_L},
              {"use_target_posterior", c.use_target_posterior},
              {"fixed_initial_posterior", c.fixed_initial_posterior},
              {"eval_every", c.eval_every},
              {"eval_rollouts", c.eval_rollouts},
              {"eval_L", c.eval_L},
              {"eval_estimator", c.eval_estimator},
              {"log_every", c.log_every},
              {"return_window", c.return_window},
              {"divergence_threshold", c.divergence_threshold}};
}

rl::TrainConfig trainer_from_json(const Json& j, rl::TrainConfig c) {
  const std::string s = "trainer";
  c.iterations = get_count(j, "iterations", s);
  c.gamma = get<double>(j, "gamma", s);
  c.tau = get<double>(j, "tau", s);
  c.policy_lr = get<double>(j, "policy_lr", s);
  c.critic_lr = get<double>(j, "critic_lr", s);
  c.posterior_lr = get<double>(j, "posterior_lr", s);
  c.buffer_size = get_count(j, "buffer_size", s);
  c.batch_size = get_count(j, "batch_size", s);
  c.rollouts_per_iter = get_count(j, "rollouts_per_iter", s);
  c.updates_per_iter = get_count(j, "updates_per_iter", s);
  c.warmup_rollouts = get_count(j, "warmup_rollouts", s);
  c.ensemble = get_count(j, "ensemble", s);
  c.agent_hidden = get_count(j, "agent_hidden", s);
  c.flow_layers = get_count(j, "flow_layers", s);
  c.flow_hidden = get_count(j, "flow_hidden", s);
  c.flow_hidden_layers = get_count(j, "flow_hidden_layers", s);
  c.embed_dim = get_count(j, "embed_dim", s);
  c.encoder_hidden = get_count(j, "encoder_hidden", s);
  c.attention_heads = get_count(j, "attention_heads", s);
  const auto reward = get<std::string>(j, "reward", s);
  if (reward == "scee") {
    c.reward = rl::RewardMode::kScee;
  } else if (reward == "spce") {
    c.reward = rl::RewardMode::kSpce;
  } else {
    throw ConfigError("trainer.reward must be scee or spce, got '" + reward + "'");
  }
  c.spce_L = get_count(j, "spce_L", s);
  c.use_target_posterior = get<bool>(j, "use_target_posterior", s);
  c.fixed_initial_posterior = get<bool>(j, "fixed_initial_posterior", s);
  c.eval_every = get_count(j, "eval_every", s);
  c.eval_rollouts = get_count(j, "eval_rollouts", s);
  c.eval_L = get_count(j, "eval_L", s);
  c.eval_estimator = get<std::string>(j, "eval_estimator", s);
  c.log_every = get_count(j, "log_every", s);
  c.return_window = get_count(j, "return_window", s);
  c.divergence_threshold = get<double>(j, "divergence_threshold", s);
  return c;
}

Json default_config_json(const std::string& env_name) {
  ExperimentConfig c;
  c.env_name = env_name;
  c.env_params = env::default_parameters(env_name);
  c.trainer = rl::default_train_config(env_name);
  c.estimate.tasks = table1_tasks();
  c.estimate.estimators = kEstimators;
  c.ablate.variants = all_variant_labels();
  return to_json(c);
}

Json to_json(const ExperimentConfig& c) {
  Json params = Json::object();
  for (const auto& [k, v] : c.env_params) params[k] = v;
  Json tasks = Json::array();
  for (const auto& t : c.estimate.tasks) tasks.push_back({t[0], t[1], t[2]});
  return Json{
      {"env", {{"name", c.env_name}, {"params", params}}},
      {"estimator", {{"name", c.estimator.name}, {"L", c.estimator.L}, {"n", c.estimator.n}, {"chunk", c.estimator.chunk}}},
      {"trainer", trainer_to_json(c.trainer)},
      {"seeds", c.seeds},
      {"out", c.out},
      {"workers", c.workers},
      {"report", {{"wall_time", c.wall_time}}},
      {"estimate",
       {{"tasks", tasks},
        {"T", c.estimate.T},
        {"estimators", c.estimate.estimators},
        {"L", c.estimate.L},
        {"learned_flow", fit_to_json(c.estimate.learned_flow)}}},
      {"eval", {{"checkpoint", c.eval.checkpoint}, {"policy", c.eval.policy}, {"T", c.eval.T}}},
      {"posterior",
       {{"checkpoint", c.posterior.checkpoint},
        {"history", c.posterior.history},
        {"n", c.posterior.n},
        {"mode", c.posterior.mode}}},
      {"ablate", {{"variants", c.ablate.variants}}},
  };
}

std::map<std::string, std::string> environment_overrides(char** envp) {
  std::map<std::string, std::string> out;
  if (!envp) return out;
  const std::string prefix = kEnvPrefix;
  for (char** e = envp; *e; ++e) {
    const std::string kv = *e;
    const auto eq = kv.find('=');
    if (eq == std::string::npos || kv.compare(0, prefix.size(), prefix) != 0) continue;
    out[kv.substr(0, eq)] = kv.substr(eq + 1);
  }
  return out;
}

ExperimentConfig resolve_config(const Json& raw, const std::map<std::string, std::string>& env_vars) {
  Json user = raw.is_null() ? Json::object() : raw;
  if (user.is_object() && user.contains("manifest_version")) {
    if (!user.contains("config")) throw ConfigError("manifest has no config member");
    user = Json(user.at("config"));
  }
  if (!user.is_object()) throw ConfigError("config must be a JSON object");

  // Overrides as a nested object; section/key matching is case-insensitive.
  Json overrides = Json::object();
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : env_vars) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    std::vector<std::string> path;
    std::string rest = name.substr(prefix.size());
    for (std::size_t pos; (pos = rest.find("__")) != std::string::npos;) {
      path.push_back(rest.substr(0, pos));
      rest = rest.substr(pos + 2);
    }
    path.push_back(rest);
    Json* node = &overrides;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &(*node)[path[i]];
    (*node)[path.back()] = parse_value(value);
  }

  std::string env_name = "conjugate";
  if (user.contains("env") && user["env"].is_object() && user["env"].contains("name")) {
    env_name = get<std::string>(user["env"], "name", "env");
  }
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    if (lower(it.key()) != "env" || !it.value().is_object()) continue;
    for (auto jt = it.value().begin(); jt != it.value().end(); ++jt) {
      if (lower(jt.key()) == "name") env_name = jt.value().is_string() ? jt.value().get<std::string>() : jt.value().dump();
    }
  }

  Json merged = default_config_json(env_name);
  merge(merged, user, "", false);
  merge(merged, overrides, "", true);

  ExperimentConfig c;
  const Json& env = merged["env"];
  c.env_name = get<std::string>(env, "name", "env");
  for (auto it = env["params"].begin(); it != env["params"].end(); ++it) {
    if (!it.value().is_number()) throw ConfigError("env.params." + it.key() + " must be a number");
    c.env_params[it.key()] = it.value().get<double>();
  }
  env::make_environment(c.env_name, c.env_params);

  const Json& e = merged["estimator"];
  c.estimator.name = get<std::string>(e, "name", "estimator");
  c.estimator.L = get_count(e, "L", "estimator");
  c.estimator.n = get_count(e, "n", "estimator");
  c.estimator.chunk = get_count(e, "chunk", "estimator");
  if (c.estimator.name != "auto" && std::find(kEstimators.begin(), kEstimators.end(), c.estimator.name) == kEstimators.end()) {
    throw ConfigError("estimator.name must be auto, spce, snmc, sace or scee");
  }
  if (c.estimator.chunk == 0) throw ConfigError("estimator.chunk must be positive");

  c.trainer = trainer_from_json(merged["trainer"], rl::default_train_config(c.env_name));
  rl::validate_config(c.trainer);

  c.seeds.clear();
  try {
    for (const auto& s : merged["seeds"]) c.seeds.push_back(s.get<std::uint64_t>());
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("seeds must be a list of non-negative integers");
  }
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  c.out = get<std::string>(merged, "out", "");
  c.workers = get_count(merged, "workers", "");
  if (c.workers == 0) throw ConfigError("workers must be positive");
  c.wall_time = get<bool>(merged["report"], "wall_time", "report");

  const Json& est = merged["estimate"];
  try {
    for (const auto& t : est.at("tasks")) {
      if (!t.is_array() || t.size() != 3) throw ConfigError("estimate.tasks entries must be [k, prior_var, noise_var]");
      c.estimate.tasks.push_back({t[0].get<double>(), t[1].get<double>(), t[2].get<double>()});
    }
    c.estimate.estimators = est.at("estimators").get<std::vector<std::string>>();
    for (const auto& l : est.at("L")) c.estimate.L.push_back(l.get<std::size_t>());
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("estimate.tasks, estimate.estimators or estimate.L has the wrong type");
  }
  for (const auto& name : c.estimate.estimators) {
    if (std::find(kEstimators.begin(), kEstimators.end(), name) == kEstimators.end()) {
      throw ConfigError("unknown estimator '" + name + "' in estimate.estimators");
    }
  }
  c.estimate.T = get_count(est, "T", "estimate");
  const Json& lf = est["learned_flow"];
  auto& b = c.estimate.learned_flow;
  b.enabled = get<bool>(lf, "enabled", "estimate.learned_flow");
  b.fit.samples = get_count(lf, "samples", "estimate.learned_flow");
  b.fit.validation_fraction = get<double>(lf, "validation_fraction", "estimate.learned_flow");
  b.fit.batch = get_count(lf, "batch", "estimate.learned_flow");
  b.fit.epochs = get_count(lf, "epochs", "estimate.learned_flow");
  b.fit.patience = get_count(lf, "patience", "estimate.learned_flow");
  b.fit.lr = get<double>(lf, "lr", "estimate.learned_flow");
  b.layers = get_count(lf, "layers", "estimate.learned_flow");
  b.hidden = get_count(lf, "hidden", "estimate.learned_flow");
  b.embed_dim = get_count(lf, "embed_dim", "estimate.learned_flow");
  b.heads = get_count(lf, "heads", "estimate.learned_flow");

  const Json& ev = merged["eval"];
  c.eval.checkpoint = get<std::string>(ev, "checkpoint", "eval");
  c.eval.policy = get<std::string>(ev, "policy", "eval");
  c.eval.T = get_count(ev, "T", "eval");
  if (c.eval.policy != "learned" && c.eval.policy != "random") throw ConfigError("eval.policy must be learned or random");

  const Json& po = merged["posterior"];
  c.posterior.checkpoint = get<std::string>(po, "checkpoint", "posterior");
  c.posterior.history = get<std::string>(po, "history", "posterior");
  c.posterior.n = get_count(po, "n", "posterior");
  c.posterior.mode = get<std::string>(po, "mode", "posterior");
  if (c.posterior.mode != "flow" && c.posterior.mode != "analytic") {
    throw ConfigError("posterior.mode must be flow or analytic");
  }

  c.ablate.variants = get<std::vector<std::string>>(merged["ablate"], "variants", "ablate");
  for (const auto& v : c.ablate.variants) apply_variant(c.trainer, v);
  return c;
}

ExperimentConfig load_config(const std::string& path, const std::map<std::string, std::string>& env_vars) {
  if (path.empty()) return resolve_config(Json::object(), env_vars);
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  Json j;
  try {
    j = Json::parse(ss.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return resolve_config(j, env_vars);
}

}  // namespace boed::harness
