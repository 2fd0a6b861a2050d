#include <cmath>
#include <vector>

#include "doctest.h"
#include "pnrd/analytics.hpp"
#include "pnrd/error.hpp"
#include "pnrd/montecarlo.hpp"

using namespace pnrd;

TEST_CASE("sample_poisson") {
  RandomStream rng(1);
  for (int i = 0; i < 100; ++i) CHECK(sample_poisson(0.0, rng) == 0);

  for (double mean : {5.0, 80.0}) {
    CAPTURE(mean);
    const int draws = 1000000;
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < draws; ++i) {
      const auto k = static_cast<double>(sample_poisson(mean, rng));
      sum += k;
      sum_sq += k * k;
    }
    const double m = sum / draws;
    const double var = sum_sq / draws - m * m;
    CHECK(std::abs(m - mean) < 5.0 * std::sqrt(mean / draws));
    CHECK(var / m > 0.98);
    CHECK(var / m < 1.02);
  }
  CHECK_THROWS_AS(sample_poisson(-1.0, rng), DomainError);
}

TEST_CASE("sample_poisson pmf on the rejection branch") {
  // Chi-square-free check: each central cell within 5 SE of the exact pmf.
  RandomStream rng(7);
  const double mean = 40.0;
  const int draws = 400000;
  std::vector<int> hist(200, 0);
  for (int i = 0; i < draws; ++i) ++hist[static_cast<std::size_t>(sample_poisson(mean, rng))];
  for (int k = 25; k <= 55; ++k) {
    const double p = std::exp(-mean + k * std::log(mean) - std::lgamma(k + 1.0));
    const double se = std::sqrt(p * (1 - p) / draws);
    CHECK(std::abs(hist[static_cast<std::size_t>(k)] / double(draws) - p) < 5.0 * se);
  }
}

TEST_CASE("binomial_thin") {
  RandomStream rng(3);
  CHECK(binomial_thin(17, 1.0, rng) == 17);
  CHECK(binomial_thin(17, 0.0, rng) == 0);
  CHECK(binomial_thin(500, 1.0, rng) == 500);
  CHECK(binomial_thin(500, 0.0, rng) == 0);

  const int draws = 1000000;
  int ones = 0;
  for (int i = 0; i < draws; ++i) ones += binomial_thin(2, 0.5, rng) == 1;
  CHECK(std::abs(ones / double(draws) - 0.5) < 5.0 * std::sqrt(0.25 / draws));

  // Inversion branch, both sides of the eta = 1/2 flip.
  for (double eta : {0.2, 0.9}) {
    const std::int64_t n = 300;
    double sum = 0.0;
    double sum_sq = 0.0;
    const int reps = 200000;
    for (int i = 0; i < reps; ++i) {
      const auto k = static_cast<double>(binomial_thin(n, eta, rng));
      sum += k;
      sum_sq += k * k;
    }
    const double m = sum / reps;
    const double var = sum_sq / reps - m * m;
    const double exact_var = n * eta * (1 - eta);
    CHECK(std::abs(m - n * eta) < 5.0 * std::sqrt(exact_var / reps));
    CHECK(std::abs(var / exact_var - 1.0) < 0.02);
  }
  CHECK_THROWS_AS(binomial_thin(-1, 0.5, rng), DomainError);
}

TEST_CASE("simulate_counts trivial cases") {
  const SimConfig cfg{11, 20000, 1};
  const DetectorModel perfect(1.0, 1000);
  const auto twb = make_source(SourceKind::twb, 6.0, 1000);
  const auto stats = simulate_counts(twb, perfect, perfect, cfg);
  CHECK(stats.vdp == 0.0);
  CHECK(stats.mean1 == stats.mean2);

  const auto vac = simulate_counts(make_source(SourceKind::tmc, 0.0), DetectorModel(0.5, 3),
                                   DetectorModel(0.5, 3), cfg);
  CHECK(vac.mean1 == 0.0);
  CHECK(vac.mean2 == 0.0);
  CHECK(vac.max_count1 == 0);
  CHECK(vac.freq1.at(0) == 1.0);

  CHECK_THROWS_AS(simulate_counts(twb, perfect, perfect, SimConfig{1, 0, 1}), DomainError);
  CHECK_THROWS_AS(simulate_counts(twb, perfect, perfect, SimConfig{1, 10, 0}), DomainError);
}

TEST_CASE("simulate_counts is deterministic in (seed, trials, workers)") {
  const auto tmc = make_source(SourceKind::tmc, 2.0, 4);
  const DetectorModel d1(0.7, 4);
  const DetectorModel d2(0.4, 2);
  const SimConfig cfg{42, 50000, 3};
  const auto a = simulate_counts(tmc, d1, d2, cfg);
  const auto b = simulate_counts(tmc, d1, d2, cfg);
  CHECK(a == b);
  const auto c = simulate_counts(tmc, d1, d2, SimConfig{43, 50000, 3});
  CHECK_FALSE(a == c);
}

TEST_CASE("simulate_counts agrees with the analytic oracle") {
  const DetectorModel half(0.5, 50);
  const auto tmc = make_source(SourceKind::tmc, 1.0, 50);
  const auto stats = simulate_counts(tmc, half, half, SimConfig{2024, 1000000, 2});
  CHECK(stats.se_vdp > 0.0);
  CHECK(std::abs(stats.vdp - 1.0) < 5.0 * stats.se_vdp);
  CHECK(std::abs(stats.nrf - 1.0) < 5.0 * stats.se_nrf);

  const DetectorModel d1(0.8, 3);
  const DetectorModel d2(0.6, 2);
  for (auto kind : {SourceKind::tmc, SourceKind::twb}) {
    const double mean = 2.5;
    const auto source = make_source(kind, mean, 3);
    const auto s = simulate_counts(source, d1, d2, SimConfig{5, 400000, 1});
    const auto exact = count_statistics(kind, d1, d2, mean);
    CHECK(std::abs(s.mean1 - exact.mean1) < 5.0 * s.se_mean1);
    CHECK(std::abs(s.mean2 - exact.mean2) < 5.0 * s.se_mean2);
    CHECK(std::abs(s.second1 - exact.second1) < 5.0 * s.se_second1);
    CHECK(std::abs(s.cross - exact.cross) < 5.0 * s.se_cross);
    CHECK(std::abs(s.vdp - exact.vdp) < 5.0 * s.se_vdp);
    CHECK(std::abs(s.nrf - exact.nrf) < 5.0 * s.se_nrf);

    // Marginal count distributions in total variation.
    const auto p1 = apply_detector(d1, source.weights);
    double tv = 0.0;
    for (int m = 0; m <= d1.max_count(); ++m) {
      const double f = m < static_cast<int>(s.freq1.size()) ? s.freq1[static_cast<std::size_t>(m)] : 0.0;
      tv += std::abs(f - p1[m]);
    }
    CHECK(0.5 * tv < 5.0 * std::sqrt(d1.max_count() / double(s.trials)));
  }
}

TEST_CASE("expected_sample_stats matches the closed forms") {
  const DetectorModel d1(0.6, 10);
  const DetectorModel d2(0.4, 10);
  const auto e = expected_sample_stats(make_source(SourceKind::twb, 0.5, 10), d1, d2, 1000000);
  CHECK(std::abs(e.vdp - vdp_twb(d1, d2, 0.5)) < 1e-12);
  CHECK(std::abs(e.mean1 - poisson_mean_count(d1, 0.5)) < 1e-12);
  CHECK(e.se_vdp > 0.0);
  CHECK(e.se_nrf > 0.0);
  CHECK(e.trials == 1000000);
}
