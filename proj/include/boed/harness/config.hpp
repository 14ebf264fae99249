#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "boed/env/model.hpp"
#include "boed/est/amortized.hpp"
#include "boed/rl/trainer.hpp"

namespace boed::harness {

using Json = nlohmann::ordered_json;

struct EstimatorBlock {
  std::string name = "auto";  // auto | spce | snmc | sace | scee
  std::size_t L = 10000;
  std::size_t n = 1000;
  std::size_t chunk = 10000;
};

struct LearnedFlowBlock {
  bool enabled = false;
  est::OfflineFitConfig fit;
  std::size_t layers = 2;
  std::size_t hidden = 32;
  std::size_t embed_dim = 32;
  std::size_t heads = 0;
};

struct EstimateBlock {
  // (k, prior variance, noise variance)
  std::vector<std::array<double, 3>> tasks;
  std::size_t T = 10;
  std::vector<std::string> estimators;
  // Empty means {estimator.L}.
  std::vector<std::size_t> L;
  LearnedFlowBlock learned_flow;
};

struct EvalBlock {
  std::string checkpoint;
  std::string policy = "learned";  // learned | random
  std::size_t T = 0;               // 0: environment horizon
};

struct PosteriorBlock {
  std::string checkpoint;
  std::string history;
  std::size_t n = 1000;
  std::string mode = "flow";  // flow | analytic
};

struct AblateBlock {
  std::vector<std::string> variants;  // ablation labels
};

struct ExperimentConfig {
  std::string env_name = "conjugate";
  env::ParamMap env_params;  // fully resolved
  EstimatorBlock estimator;
  rl::TrainConfig trainer;
  std::vector<std::uint64_t> seeds = {0};
  std::string out = "out";
  std::size_t workers = 1;
  bool wall_time = false;
  EstimateBlock estimate;
  EvalBlock eval;
  PosteriorBlock posterior;
  AblateBlock ablate;
};

// Environment-variable overrides: BOED_<SECTION>__<KEY>[__<KEY>...]=value,
// matched case-insensitively against the schema; values are parsed as JSON,
// falling back to a plain string.
inline constexpr const char* kEnvPrefix = "BOED_";

// Defaults for an environment (trainer and env blocks follow it).
Json default_config_json(const std::string& env_name);
// Merges user JSON and overrides onto the defaults. Unknown keys throw ConfigError.
// A run manifest is accepted in place of a config (its "config" member is used).
ExperimentConfig resolve_config(const Json& user, const std::map<std::string, std::string>& env_vars = {});
ExperimentConfig load_config(const std::string& path, const std::map<std::string, std::string>& env_vars = {});
std::map<std::string, std::string> environment_overrides(char** envp);

Json to_json(const ExperimentConfig& cfg);
Json trainer_to_json(const rl::TrainConfig& c);
rl::TrainConfig trainer_from_json(const Json& j, rl::TrainConfig base);

std::vector<std::array<double, 3>> table1_tasks();
std::vector<std::string> all_variant_labels();
rl::TrainConfig apply_variant(rl::TrainConfig cfg, const std::string& label);

}  // namespace boed::harness
