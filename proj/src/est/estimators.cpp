#include "boed/est/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "boed/errors.hpp"
#include "boed/est/parallel.hpp"

namespace boed::est {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void require_explicit(const env::LikelihoodModel& env) {
  if (!env.explicit_likelihood()) {
    throw CapabilityError("contrastive estimators need an explicit likelihood (" + env.name() + " is implicit)");
  }
}

EstimateReport base_report(const std::string& name, std::span<const Rollout> rollouts,
                           const env::LikelihoodModel* env, std::size_t L, std::uint64_t seed) {
  EstimateReport r;
  r.estimator = name;
  if (env) r.env = env->name();
  r.T = rollouts.empty() ? 0 : rollouts.front().history.size();
  r.L = L;
  r.n = rollouts.size();
  r.seed = seed;
  r.samples.assign(rollouts.size(), 0.0);
  return r;
}

template <class F>
EstimateReport contrastive(const std::string& name, std::span<const Rollout> rollouts,
                           const env::LikelihoodModel& env, std::size_t L, const dist::Rng& rng,
                           const ContrastiveOptions& opt, F integrand) {
  require_explicit(env);
  const auto start = Clock::now();
  EstimateReport r = base_report(name, rollouts, &env, L, rng.key());
  parallel_for(rollouts.size(), opt.workers, [&](std::size_t i) {
    dist::Rng ri = rng.split(i);
    r.samples[i] = integrand(contrastive_terms(env, rollouts[i], L, ri, opt.chunk));
  });
  summarize(r);
  r.wall_ms = elapsed_ms(start);
  return r;
}

}  // namespace

std::string csv_header() { return "estimator,env,T,L,n,seed,value,stderr,excluded,wall_ms"; }

std::string csv_row(const EstimateReport& r, bool with_wall_time) {
  std::ostringstream os;
  os << r.estimator << ',' << r.env << ',' << r.T << ',' << r.L << ',' << r.n << ',' << r.seed << ','
     << std::setprecision(10) << r.value << ',' << r.stderr_ << ',' << r.excluded << ','
     << std::setprecision(6) << (with_wall_time ? r.wall_ms : 0.0);
  return os.str();
}

void summarize(EstimateReport& r) {
  double sum = 0.0;
  std::size_t used = 0;
  for (double v : r.samples) {
    if (std::isfinite(v)) {
      sum += v;
      ++used;
    }
  }
  r.excluded = r.samples.size() - used;
  if (used == 0) {
    r.value = std::numeric_limits<double>::quiet_NaN();
    r.stderr_ = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  const double mean = sum / static_cast<double>(used);
  double ss = 0.0;
  for (double v : r.samples) {
    if (std::isfinite(v)) ss += (v - mean) * (v - mean);
  }
  r.value = mean;
  r.stderr_ = used > 1 ? std::sqrt(ss / static_cast<double>(used - 1) / static_cast<double>(used)) : 0.0;
}

void LogSumExp::add(double x) {
  if (x == kNegInf) return;
  if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) {
    max_ = x;
    sum_ = 1.0;
    return;
  }
  if (std::isnan(max_) || max_ == std::numeric_limits<double>::infinity()) return;
  if (x <= max_) {
    sum_ += std::exp(x - max_);
  } else {
    sum_ = sum_ * std::exp(max_ - x) + 1.0;
    max_ = x;
  }
}

void LogSumExp::add(std::span<const double> xs) {
  for (double x : xs) add(x);
}

double LogSumExp::value() const {
  if (sum_ == 0.0) return kNegInf;
  return max_ + std::log(sum_);
}

ContrastiveTerms contrastive_terms(const env::LikelihoodModel& env, const Rollout& r, std::size_t L,
                                   dist::Rng& rng, std::size_t chunk) {
  require_explicit(env);
  if (chunk == 0) throw ConfigError("chunk size must be positive");
  const std::size_t p = env.theta_dim();
  ContrastiveTerms c;
  double ll0 = 0.0;
  env.history_log_lik(r.history, r.theta, std::span<double>(&ll0, 1));
  c.log_lik0 = ll0;
  const std::size_t m = std::min(chunk, L);
  std::vector<double> thetas(m * p), ll(m);
  LogSumExp acc;
  for (std::size_t done = 0; done < L; done += m) {
    const std::size_t b = std::min(m, L - done);
    for (std::size_t i = 0; i < b; ++i) env.sample_prior(rng, std::span<double>(thetas).subspan(i * p, p));
    env.history_log_lik(r.history, std::span<const double>(thetas).first(b * p), std::span<double>(ll).first(b));
    acc.add(std::span<const double>(ll).first(b));
  }
  c.lse_contrast = acc.value();
  return c;
}

double spce_integrand(const ContrastiveTerms& c, std::size_t L) {
  LogSumExp all;
  all.add(c.log_lik0);
  all.add(c.lse_contrast);
  return c.log_lik0 - all.value() + std::log(static_cast<double>(L) + 1.0);
}

double snmc_integrand(const ContrastiveTerms& c, std::size_t L) {
  if (L == 0) throw ConfigError("sNMC needs at least one contrastive sample");
  return c.log_lik0 - c.lse_contrast + std::log(static_cast<double>(L));
}

EstimateReport spce(std::span<const Rollout> rollouts, const env::LikelihoodModel& env, std::size_t L,
                    const dist::Rng& rng, const ContrastiveOptions& opt) {
  return contrastive("spce", rollouts, env, L, rng, opt,
                     [L](const ContrastiveTerms& c) { return spce_integrand(c, L); });
}

EstimateReport snmc(std::span<const Rollout> rollouts, const env::LikelihoodModel& env, std::size_t L,
                    const dist::Rng& rng, const ContrastiveOptions& opt) {
  if (L == 0) throw ConfigError("sNMC needs at least one contrastive sample");
  return contrastive("snmc", rollouts, env, L, rng, opt,
                     [L](const ContrastiveTerms& c) { return snmc_integrand(c, L); });
}

EstimateReport sace(std::span<const Rollout> rollouts, const Proposal& q, const env::LikelihoodModel& env,
                    std::size_t L, const dist::Rng& rng, const ContrastiveOptions& opt) {
  require_explicit(env);
  if (opt.chunk == 0) throw ConfigError("chunk size must be positive");
  const auto start = Clock::now();
  EstimateReport r = base_report("sace", rollouts, &env, L, rng.key());
  const std::size_t p = env.theta_dim();
  parallel_for(rollouts.size(), opt.workers, [&](std::size_t i) {
    const Rollout& ro = rollouts[i];
    dist::Rng ri = rng.split(i);
    double ll0 = 0.0;
    env.history_log_lik(ro.history, ro.theta, std::span<double>(&ll0, 1));
    const double lq0 = q.log_prob(ro.theta, ro.history);
    if (!std::isfinite(lq0)) {
      r.samples[i] = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    LogSumExp acc;
    acc.add(ll0 + env.prior_log_prob(ro.theta) - lq0);
    const std::size_t m = std::min(opt.chunk, L);
    std::vector<double> thetas(m * p), lq(m), ll(m);
    for (std::size_t done = 0; done < L; done += m) {
      const std::size_t b = std::min(m, L - done);
      q.sample(ro.history, b, ri, std::span<double>(thetas).first(b * p), std::span<double>(lq).first(b));
      env.history_log_lik(ro.history, std::span<const double>(thetas).first(b * p), std::span<double>(ll).first(b));
      for (std::size_t l = 0; l < b; ++l) {
        acc.add(ll[l] + env.prior_log_prob(std::span<const double>(thetas).subspan(l * p, p)) - lq[l]);
      }
    }
    r.samples[i] = ll0 - (acc.value() - std::log(static_cast<double>(L) + 1.0));
  });
  summarize(r);
  r.wall_ms = elapsed_ms(start);
  return r;
}

EstimateReport scee(std::span<const Rollout> rollouts, const Proposal& q, double prior_entropy) {
  const auto start = Clock::now();
  EstimateReport r = base_report("scee", rollouts, nullptr, 0, 0);
  q.log_prob_rollouts(rollouts, r.samples);
  for (double& v : r.samples) {
    v = std::isfinite(v) ? v + prior_entropy : std::numeric_limits<double>::quiet_NaN();
  }
  summarize(r);
  r.wall_ms = elapsed_ms(start);
  return r;
}

SweepResult convergence_sweep(const std::function<EstimateReport(std::size_t, std::uint64_t)>& estimate,
                              double truth, std::span<const std::size_t> n_grid, std::size_t repeats,
                              std::uint64_t seed) {
  if (n_grid.size() < 2) throw ConfigError("convergence sweep needs at least two sample sizes");
  if (repeats == 0) throw ConfigError("convergence sweep needs at least one repeat");
  SweepResult out;
  std::vector<double> lx, ly;
  for (std::size_t g = 0; g < n_grid.size(); ++g) {
    for (std::size_t k = 0; k < repeats; ++k) {
      const auto rep = estimate(n_grid[g], seed + 1000 * g + k);
      out.rows.push_back({n_grid[g], rep.value, std::abs(rep.value - truth), rep.stderr_});
      lx.push_back(std::log(static_cast<double>(n_grid[g])));
      ly.push_back(std::log(rep.stderr_));
    }
  }
  const double n = static_cast<double>(lx.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    mx += lx[i] / n;
    my += ly[i] / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  out.slope = sxy / sxx;
  return out;
}

}  // namespace boed::est
