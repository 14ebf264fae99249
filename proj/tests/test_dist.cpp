#include <cmath>
#include <numbers>
#include <vector>

#include "boed/dist/distributions.hpp"
#include "boed/dist/rng.hpp"
#include "boed/errors.hpp"
#include "doctest.h"

using namespace boed;
using namespace boed::dist;

TEST_CASE("rng streams are reproducible and split streams differ") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
  Rng c(42);
  c();
  c();
  Rng s1 = Rng(42).split(7), s2 = c.split(7), s3 = Rng(42).split(8);
  const auto x1 = s1(), x2 = s2(), x3 = s3();
  CHECK(x1 == x2);
  CHECK(x1 != x3);
  double lo = 1.0, hi = 0.0;
  Rng u(1);
  for (int i = 0; i < 100000; ++i) {
    const double v = u.uniform();
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
}

TEST_CASE("split streams are uncorrelated") {
  Rng root(9);
  Rng a = root.split(0), b = root.split(1);
  const int n = 100000;
  double sab = 0, sa = 0, sb = 0, saa = 0, sbb = 0;
  for (int i = 0; i < n; ++i) {
    const double x = a.normal(), y = b.normal();
    sab += x * y;
    sa += x;
    sb += y;
    saa += x * x;
    sbb += y * y;
  }
  const double cov = sab / n - (sa / n) * (sb / n);
  const double corr = cov / std::sqrt((saa / n - sa * sa / n / n) * (sbb / n - sb * sb / n / n));
  CHECK(std::abs(corr) < 4.0 / std::sqrt(n));
}

TEST_CASE("sampling") {
  Rng rng(1);
  SUBCASE("degenerate binomial") {
    Binomial b(10, 0.0);
    for (int i = 0; i < 100; ++i) CHECK(b.sample(rng) == 0);
  }
  SUBCASE("binomial support") {
    Binomial b(7, 0.3);
    for (int i = 0; i < 1000; ++i) {
      const auto y = b.sample(rng);
      CHECK(y >= 0);
      CHECK(y <= 7);
    }
  }
  SUBCASE("dirichlet on the simplex") {
    Dirichlet d({1, 1, 1});
    std::vector<double> x(3);
    for (int i = 0; i < 1000; ++i) {
      d.sample(rng, x);
      CHECK(std::abs(x[0] + x[1] + x[2] - 1.0) < 1e-12);
      CHECK(d.in_support(x));
    }
  }
  SUBCASE("beta(1,1) mean") {
    Beta b(1, 1);
    double s = 0;
    for (int i = 0; i < 100000; ++i) s += b.sample(rng);
    CHECK(std::abs(s / 1e5 - 0.5) < 0.01);
  }
  SUBCASE("beta(2,5) mean") {
    Beta b(2, 5);
    double s = 0;
    for (int i = 0; i < 100000; ++i) s += b.sample(rng);
    CHECK(std::abs(s / 1e5 - 2.0 / 7.0) < 0.01);
  }
  SUBCASE("invalid parameters") {
    CHECK_THROWS_AS(Beta(0, 1), ConfigError);
    CHECK_THROWS_AS(Binomial(3, 1.5), ConfigError);
    CHECK_THROWS_AS(Dirichlet({1.0}), ConfigError);
    CHECK_THROWS_AS(IsotropicGaussian(2, 0.0, -1.0), ConfigError);
  }
}

TEST_CASE("log densities") {
  CHECK(Normal(0, 1).log_prob(0) == doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)));
  CHECK(Normal(0, 1).log_prob(0) == doctest::Approx(-0.9189).epsilon(1e-4));
  CHECK(Binomial(2, 0.5).log_prob(1) == doctest::Approx(std::log(0.5)));
  CHECK(Binomial(2, 0.5).log_prob(3) == -std::numeric_limits<double>::infinity());
  CHECK(Beta(1, 1).log_prob(1.5) == -std::numeric_limits<double>::infinity());

  // density vs numerical derivative of the CDF Phi((log x - 1)/3)
  const double x = std::numbers::e, h = 1e-5;
  auto cdf = [](double v) { return 0.5 * std::erfc(-(std::log(v) - 1.0) / 3.0 / std::numbers::sqrt2); };
  const double numeric = (cdf(x + h) - cdf(x - h)) / (2 * h);
  CHECK(std::exp(LogNormal(1, 3).log_prob(x)) == doctest::Approx(numeric).epsilon(1e-7));

  SUBCASE("1-D gaussian integrates to one") {
    IsotropicGaussian g(std::vector<double>{0.7}, 0.3);
    double s = 0;
    const double step = 1e-3;
    for (double t = -10; t < 10; t += step) {
      const double v = t + 0.5 * step;
      s += std::exp(g.log_prob(std::span<const double>(&v, 1))) * step;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-8));
  }
  SUBCASE("dirichlet with implied coordinate integrates to one") {
    Dirichlet d({2.0, 3.0, 1.5});
    const int m = 800;
    double s = 0;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; i + j < m; ++j) {
        const double p[2] = {(i + 0.5) / m, (j + 0.5) / m};
        if (p[0] + p[1] < 1.0) s += std::exp(d.log_prob(p)) / (double(m) * m);
      }
    }
    CHECK(s == doctest::Approx(1.0).epsilon(5e-3));
    const double three[3] = {0.2, 0.3, 0.5};
    const double two[2] = {0.2, 0.3};
    CHECK(d.log_prob(three) == d.log_prob(two));
  }
  SUBCASE("log_ndtr is continuous across the asymptotic switch and matches direct form") {
    for (double v : {-5.0, -1.0, 0.0, 2.0, 8.0}) {
      CHECK(log_ndtr(v) == doctest::Approx(std::log(0.5 * std::erfc(-v / std::numbers::sqrt2))));
    }
    CHECK(log_ndtr(-20.0 + 1e-9) == doctest::Approx(log_ndtr(-20.0 - 1e-9)).epsilon(1e-9));
    CHECK(std::isfinite(log_ndtr(-1e3)));
  }
}

TEST_CASE("entropies") {
  CHECK(gaussian_entropy(1, 1.0) == doctest::Approx(1.4189).epsilon(1e-4));
  CHECK(gaussian_entropy(2, 1.0) == doctest::Approx(2 * gaussian_entropy(1, 1.0)));
  CHECK_THROWS_AS(gaussian_entropy(1, 0.0), ConfigError);

  Rng rng(3);
  SUBCASE("k=10, var=0.5 against Monte Carlo") {
    IsotropicGaussian g(10, 0.0, 0.5);
    std::vector<double> x(10);
    double s = 0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
      g.sample(rng, x);
      s -= g.log_prob(x);
    }
    CHECK(std::abs(s / n - gaussian_entropy(10, 0.5)) < 0.01);
  }
  SUBCASE("beta, dirichlet and lognormal against Monte Carlo") {
    Beta b(2.0, 3.5);
    Dirichlet d({1.0, 2.0, 0.7});
    LogNormal ln(1.0, 3.0);
    const int n = 200000;
    double sb = 0, sd = 0, sl = 0;
    std::vector<double> x(3);
    for (int i = 0; i < n; ++i) {
      sb -= b.log_prob(b.sample(rng));
      d.sample(rng, x);
      sd -= d.log_prob(x);
      sl -= ln.log_prob(ln.sample(rng));
    }
    CHECK(std::abs(sb / n - b.entropy()) < 0.01);
    CHECK(std::abs(sd / n - d.entropy()) < 0.02);
    CHECK(std::abs(sl / n - ln.entropy()) < 0.03);
    CHECK(Beta(1, 1).entropy() == doctest::Approx(0.0));
    CHECK(Dirichlet({1, 1, 1}).entropy() == doctest::Approx(-std::log(2.0)));
  }
}

TEST_CASE("conjugate posterior") {
  IsotropicGaussian prior(3, 0.2, 1.0);
  SUBCASE("no observations") {
    const std::vector<std::vector<double>> none;
    auto post = conjugate_posterior(prior, 1.0, none);
    CHECK(post.var() == prior.var());
    CHECK(post.mean() == prior.mean());
  }
  SUBCASE("equal precisions halve the variance") {
    const std::vector<std::vector<double>> one = {{1.0, 2.0, 3.0}};
    auto post = conjugate_posterior(prior, 1.0, one);
    CHECK(post.var() == doctest::Approx(0.5));
    CHECK(post.mean()[1] == doctest::Approx((0.2 + 2.0) / 2));
  }
  SUBCASE("k=10, prior var 2, noise var 1, n=10") {
    IsotropicGaussian p10(10, 0.0, 2.0);
    const std::vector<std::vector<double>> obs(10, std::vector<double>(10, 0.3));
    CHECK(conjugate_posterior(p10, 1.0, obs).var() == doctest::Approx(1.0 / (0.5 + 10.0)));
  }
  SUBCASE("dimension mismatch") {
    const std::vector<std::vector<double>> bad = {{1.0}};
    CHECK_THROWS_AS(conjugate_posterior(prior, 1.0, bad), ConfigError);
  }
  SUBCASE("sequential updates equal one batch update") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
      IsotropicGaussian p(4, rng.normal(), rng.uniform(0.1, 5.0));
      const double noise = rng.uniform(0.1, 5.0);
      std::vector<std::vector<double>> obs(1 + trial % 7, std::vector<double>(4));
      for (auto& y : obs) {
        for (auto& v : y) v = rng.normal(0, 3);
      }
      IsotropicGaussian seq = p;
      for (const auto& y : obs) seq = conjugate_posterior(seq, noise, std::span(&y, 1));
      const auto batch = conjugate_posterior(p, noise, obs);
      CHECK(std::abs(seq.var() - batch.var()) < 1e-12);
      for (int i = 0; i < 4; ++i) CHECK(std::abs(seq.mean()[i] - batch.mean()[i]) < 1e-12);
    }
  }
}

TEST_CASE("closed-form EIG") {
  CHECK(closed_form_eig(10, 0.5, 5.0, 10) == doctest::Approx(3.47).epsilon(0.01 / 3.47));
  CHECK(closed_form_eig(20, 4.0, 0.5, 10) == doctest::Approx(43.94).epsilon(0.01 / 43.94));
  CHECK(closed_form_eig(10, 1.0, 1.0, 0) == 0.0);

  SUBCASE("monotone in n, prior var; decreasing in noise var") {
    for (std::size_t n = 1; n < 20; ++n) CHECK(closed_form_eig(5, 1, 1, n) > closed_form_eig(5, 1, 1, n - 1));
    for (double v = 0.1; v < 10; v *= 1.5) {
      CHECK(closed_form_eig(5, v * 1.5, 1, 3) > closed_form_eig(5, v, 1, 3));
      CHECK(closed_form_eig(5, 1, v * 1.5, 3) < closed_form_eig(5, 1, v, 3));
    }
  }
  SUBCASE("prior entropy minus posterior entropy") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t k = 1 + rng.uniform_int(0, 20);
      const double v0 = rng.uniform(0.05, 8), s = rng.uniform(0.05, 8);
      const std::size_t n = rng.uniform_int(0, 30);
      IsotropicGaussian prior(k, 0.0, v0);
      std::vector<double> sum(k, 0.0);
      const auto post = conjugate_posterior(prior, s, n, sum);
      CHECK(std::abs(prior.entropy() - post.entropy() - closed_form_eig(k, v0, s, n)) < 1e-12);
    }
  }
}

TEST_CASE("gaussian KL") {
  IsotropicGaussian a(3, 0.5, 1.3);
  CHECK(gaussian_kl(a, a) == doctest::Approx(0.0));
  CHECK(gaussian_kl(IsotropicGaussian(1, 0, 1), IsotropicGaussian(1, 0, 2)) ==
        doctest::Approx(0.5 * (0.5 + std::log(2.0) - 1.0)));
  CHECK_THROWS_AS(gaussian_kl(a, IsotropicGaussian(2, 0, 1)), ConfigError);

  Rng rng(12);
  IsotropicGaussian p(std::vector<double>{0.3, -0.2}, 0.8), q(std::vector<double>{0.0, 0.4}, 1.7);
  std::vector<double> x(2);
  double s = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    p.sample(rng, x);
    s += p.log_prob(x) - q.log_prob(x);
  }
  CHECK(std::abs(s / n - gaussian_kl(p, q)) < 0.01);
}
