#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "boed/est/proposal.hpp"
#include "boed/est/rollout.hpp"

namespace boed::est {

struct EstimateReport {
  std::string estimator;
  std::string env;
  std::size_t T = 0;
  std::size_t L = 0;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t excluded = 0;
  double wall_ms = 0.0;
  // Per-rollout values; NaN marks an excluded rollout.
  std::vector<double> samples;
};

std::string csv_header();
// wall_ms is written as 0 unless with_wall_time is set, so reruns are byte-identical.
std::string csv_row(const EstimateReport& r, bool with_wall_time = false);

// Mean and standard error (sample sd / sqrt(n)) over finite entries; the rest
// are counted as excluded.
void summarize(EstimateReport& r);

// Running log(sum exp(x)) without storing the terms.
class LogSumExp {
 public:
  void add(double x);
  void add(std::span<const double> xs);
  double value() const;

 private:
  double max_ = -std::numeric_limits<double>::infinity();
  double sum_ = 0.0;
};

struct ContrastiveOptions {
  std::size_t chunk = 10000;
  std::size_t workers = 1;
};

// log p(h|theta_0) and log sum_{l=1..L} p(h|theta_l) with theta_{1:L} fresh
// prior draws from rng, streamed in chunks.
struct ContrastiveTerms {
  double log_lik0 = 0.0;
  double lse_contrast = -std::numeric_limits<double>::infinity();
};
ContrastiveTerms contrastive_terms(const env::LikelihoodModel& env, const Rollout& r, std::size_t L,
                                   dist::Rng& rng, std::size_t chunk = 10000);

// Per-rollout integrands from shared terms.
double spce_integrand(const ContrastiveTerms& c, std::size_t L);
double snmc_integrand(const ContrastiveTerms& c, std::size_t L);

// Rollout i uses rng.split(i) for its contrastive draws, so spce and snmc
// called with equal rng see the same theta_{1:L}.
EstimateReport spce(std::span<const Rollout> rollouts, const env::LikelihoodModel& env, std::size_t L,
                    const dist::Rng& rng, const ContrastiveOptions& opt = {});
EstimateReport snmc(std::span<const Rollout> rollouts, const env::LikelihoodModel& env, std::size_t L,
                    const dist::Rng& rng, const ContrastiveOptions& opt = {});
// Contrastive draws from q(.|h_T); L = 0 gives log q(theta_0|h) - log p(theta_0).
EstimateReport sace(std::span<const Rollout> rollouts, const Proposal& q, const env::LikelihoodModel& env,
                    std::size_t L, const dist::Rng& rng, const ContrastiveOptions& opt = {});
// mean of log q(theta_0|h_T) + H[p]; rollouts where q is -inf are excluded.
EstimateReport scee(std::span<const Rollout> rollouts, const Proposal& q, double prior_entropy);

struct SweepRow {
  std::size_t n = 0;
  double value = 0.0;
  double abs_error = 0.0;
  double stderr_ = 0.0;
};
struct SweepResult {
  std::vector<SweepRow> rows;
  // Least-squares slope of log(stderr) against log(n).
  double slope = 0.0;
};
// estimate(n, seed) is called `repeats` times per n with distinct seeds.
SweepResult convergence_sweep(const std::function<EstimateReport(std::size_t, std::uint64_t)>& estimate,
                              double truth, std::span<const std::size_t> n_grid, std::size_t repeats = 1,
                              std::uint64_t seed = 0);

}  // namespace boed::est
