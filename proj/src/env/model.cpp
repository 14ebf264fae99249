#include "boed/env/model.hpp"

#include <algorithm>
#include <cmath>

#include "boed/env/tasks.hpp"
#include "boed/errors.hpp"

namespace boed::env {

void History::push(std::span<const double> design, std::span<const double> outcome) {
  if (design.size() != design_dim_ || outcome.size() != outcome_dim_) {
    throw ContractViolation("history step has design/outcome sizes " + std::to_string(design.size()) +
                            "/" + std::to_string(outcome.size()) + ", expected " +
                            std::to_string(design_dim_) + "/" + std::to_string(outcome_dim_));
  }
  designs_.insert(designs_.end(), design.begin(), design.end());
  outcomes_.insert(outcomes_.end(), outcome.begin(), outcome.end());
}

void History::pop() {
  if (empty()) throw ContractViolation("pop on empty history");
  designs_.resize(designs_.size() - design_dim_);
  outcomes_.resize(outcomes_.size() - outcome_dim_);
}

History History::prefix(std::size_t t) const {
  if (t > size()) throw ContractViolation("history prefix longer than history");
  History h(design_dim_, outcome_dim_);
  h.designs_.assign(designs_.begin(), designs_.begin() + static_cast<std::ptrdiff_t>(t * design_dim_));
  h.outcomes_.assign(outcomes_.begin(), outcomes_.begin() + static_cast<std::ptrdiff_t>(t * outcome_dim_));
  return h;
}

std::int64_t DesignSpace::count() const {
  if (!discrete) throw ContractViolation("count() on a continuous design space");
  return static_cast<std::int64_t>(upper[0] - lower[0]) + 1;
}

bool DesignSpace::contains(std::span<const double> d) const {
  if (d.size() != dim()) return false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(d[i] >= lower[i] && d[i] <= upper[i])) return false;
    if (discrete && d[i] != std::round(d[i])) return false;
  }
  return true;
}

bool DesignSpace::clamp(std::span<double> d) const {
  if (d.size() != dim()) throw ConfigError("design has wrong dimension");
  bool changed = false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double v = std::isnan(d[i]) ? lower[i] : std::clamp(d[i], lower[i], upper[i]);
    if (discrete) v = std::round(v);
    changed = changed || v != d[i];
    d[i] = v;
  }
  return changed;
}

void LikelihoodModel::set_horizon(std::size_t t) {
  if (t == 0) throw ConfigError("horizon T must be at least 1");
  horizon_ = t;
}

void LikelihoodModel::require_explicit() const {
  if (implicit_) {
    throw CapabilityError("environment '" + name() + "' is configured with an implicit likelihood");
  }
}

double LikelihoodModel::log_lik(std::span<const double> outcome, std::span<const double> theta,
                                std::span<const double> design) const {
  require_explicit();
  return log_lik_impl(outcome, theta, design);
}

void LikelihoodModel::log_lik_many(std::span<const double> outcome, std::span<const double> design,
                                   std::span<const double> thetas, std::span<double> out) const {
  require_explicit();
  const std::size_t p = theta_dim();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = log_lik_impl(outcome, thetas.subspan(i * p, p), design);
  }
}

void LikelihoodModel::history_log_lik(const History& h, std::span<const double> thetas,
                                      std::span<double> out) const {
  require_explicit();
  std::fill(out.begin(), out.end(), 0.0);
  const std::size_t p = theta_dim();
  for (std::size_t t = 0; t < h.size(); ++t) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] += log_lik_impl(h.outcome(t), thetas.subspan(i * p, p), h.design(t));
    }
  }
}

namespace {

std::size_t as_count(const ParamMap& m, const std::string& key, std::size_t min_value) {
  const double v = m.at(key);
  if (v != std::floor(v) || v < static_cast<double>(min_value)) {
    throw ConfigError("parameter '" + key + "' must be an integer >= " + std::to_string(min_value));
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

std::vector<std::string> environment_names() { return {"conjugate", "source", "ces", "prey"}; }

ParamMap default_parameters(const std::string& name) {
  if (name == "conjugate") {
    return {{"k", 10}, {"prior_mean", 0.0}, {"prior_var", 0.5}, {"noise_var", 1.0}, {"T", 10}, {"implicit", 0}};
  }
  if (name == "source") {
    return {{"sources", 2}, {"dim", 2},     {"b", 0.1}, {"m", 1e-4},
            {"sigma", 0.5}, {"bound", 4.0}, {"T", 30},  {"implicit", 0}};
  }
  if (name == "ces") {
    return {{"tau", 0.005},     {"epsilon", 0x1p-22}, {"design_max", 100.0}, {"rho_a", 1.0},
            {"rho_b", 1.0},     {"alpha", 1.0},       {"log_u_mean", 1.0},    {"log_u_sd", 3.0},
            {"T", 10},          {"implicit", 0}};
  }
  if (name == "prey") {
    return {{"log_a_mean", -1.4}, {"log_a_sd", 1.35},       {"log_th_mean", -1.4},
            {"log_th_sd", 1.35},  {"hours", 24.0},          {"max_population", 300},
            {"ode_steps", 200},   {"T", 10},                {"implicit", 0}};
  }
  throw ConfigError("unknown environment '" + name + "'");
}

std::unique_ptr<LikelihoodModel> make_environment(const std::string& name, const ParamMap& overrides) {
  ParamMap m = default_parameters(name);
  for (const auto& [key, value] : overrides) {
    auto it = m.find(key);
    if (it == m.end()) throw ConfigError("unknown parameter '" + key + "' for environment '" + name + "'");
    it->second = value;
  }
  const std::size_t horizon = as_count(m, "T", 1);
  std::unique_ptr<LikelihoodModel> env;
  if (name == "conjugate") {
    env = std::make_unique<ConjugateGaussianTask>(as_count(m, "k", 1), m["prior_mean"], m["prior_var"],
                                                  m["noise_var"], horizon);
  } else if (name == "source") {
    SourceParams p;
    p.sources = as_count(m, "sources", 1);
    p.dim = as_count(m, "dim", 1);
    p.background = m["b"];
    p.max_signal = m["m"];
    p.noise_sd = m["sigma"];
    p.bound = m["bound"];
    env = std::make_unique<SourceLocationTask>(p, horizon);
  } else if (name == "ces") {
    CesParams p;
    p.tau = m["tau"];
    p.epsilon = m["epsilon"];
    p.design_max = m["design_max"];
    p.rho_a = m["rho_a"];
    p.rho_b = m["rho_b"];
    p.alpha_concentration = m["alpha"];
    p.log_u_mean = m["log_u_mean"];
    p.log_u_sd = m["log_u_sd"];
    env = std::make_unique<CesTask>(p, horizon);
  } else {
    PreyParams p;
    p.log_a_mean = m["log_a_mean"];
    p.log_a_sd = m["log_a_sd"];
    p.log_th_mean = m["log_th_mean"];
    p.log_th_sd = m["log_th_sd"];
    p.hours = m["hours"];
    p.max_population = static_cast<std::int64_t>(as_count(m, "max_population", 1));
    p.ode_steps = static_cast<int>(as_count(m, "ode_steps", 1));
    env = std::make_unique<PreyPopulationTask>(p, horizon);
  }
  const double implicit = m["implicit"];
  if (implicit != 0.0 && implicit != 1.0) throw ConfigError("parameter 'implicit' must be 0 or 1");
  env->set_implicit(implicit == 1.0);
  return env;
}

}  // namespace boed::env
