#include <cmath>
#include <vector>

#include "doctest.h"
#include "pnrd/analytics.hpp"
#include "pnrd/error.hpp"
#include "pnrd/povm.hpp"
#include "pnrd/states.hpp"

using namespace pnrd;

namespace {

// <m1 m2> for a diagonal source from conditional independence of the two
// arms' losses given n.
double cross_moment_brute(const DetectorModel& d1, const DetectorModel& d2,
                          const NumberDistribution& w) {
  double sum = 0.0;
  for (std::int64_t n = 0; n <= w.cutoff(); ++n) {
    sum += w[n] * fock_moment(1, n, d1) * fock_moment(1, n, d2);
  }
  return sum;
}

}  // namespace

TEST_CASE("exp_sum") {
  CHECK(exp_sum(0, 3.7) == 1.0);
  CHECK(exp_sum(2, 1.0) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(exp_sum(-1, 4.0) == 0.0);
  CHECK_THROWS_AS(exp_sum(-2, 1.0), DomainError);
}

TEST_CASE("poisson_mean_count examples") {
  CHECK(poisson_mean_count(DetectorModel(0.5, 1), 2.0) ==
        doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-14));
  CHECK(poisson_mean_count(DetectorModel(0.0, 4), 10.0) == 0.0);
  CHECK(std::abs(poisson_mean_count(DetectorModel(0.5, 50), 1.0) - 0.5) < 1e-12);
}

TEST_CASE("poisson_mean_count is the literal exponential-sum formula") {
  for (int cap : {1, 2, 5, 9}) {
    for (double x : {0.05, 0.7, 3.0, 12.0}) {
      const double literal =
          cap - (cap * exp_sum(cap - 1, x) - x * exp_sum(cap - 2, x)) * std::exp(-x);
      const double literal2 = cap * cap -
                              std::pow(x, cap) * (cap + x) * std::exp(-x) / std::tgamma(cap) +
                              (x * x + x - cap * cap) * std::exp(-x) * exp_sum(cap - 1, x);
      const DetectorModel det(0.5, cap);
      CHECK(poisson_mean_count(det, 2.0 * x) == doctest::Approx(literal).epsilon(1e-11));
      CHECK(poisson_second_moment(det, 2.0 * x) == doctest::Approx(literal2).epsilon(1e-11));
    }
  }
}

TEST_CASE("monotone and bounded response curve") {
  const DetectorModel det(0.6, 4);
  double previous = 0.0;
  for (double mean = 0.0; mean < 60.0; mean += 0.37) {
    const double m = poisson_mean_count(det, mean);
    CHECK(m >= previous);
    CHECK(m <= 4.0);
    previous = m;
  }
}

TEST_CASE("poisson_second_moment examples") {
  for (double eta : {0.2, 0.5, 0.9}) {
    for (double mean : {0.1, 1.0, 7.0}) {
      const DetectorModel det(eta, 1);
      CHECK(poisson_second_moment(det, mean) ==
            doctest::Approx(poisson_mean_count(det, mean)).epsilon(1e-13));
    }
  }
  const DetectorModel wide(0.5, 80);
  const double x = 0.5 * 3.0;
  CHECK(std::abs(poisson_second_moment(wide, 3.0) - (x * x + x)) < 1e-10);
  for (int cap : {1, 3, 10}) {
    const DetectorModel det(0.5, cap);
    const double mean = 10.0 * (cap + 1) / 0.5;
    CHECK(std::abs(poisson_second_moment(det, mean) - cap * cap) < 1e-6);
  }
}

TEST_CASE("closed forms match the direct POVM average") {
  for (double eta : {0.1, 0.5, 1.0}) {
    for (int cap : {1, 3, 10}) {
      for (double mean : {0.1, 5.0, 50.0}) {
        const DetectorModel det(eta, cap);
        const auto input = poisson_distribution(mean, cap);
        CHECK(std::abs(poisson_mean_count(det, mean) - expectation_moment(1, det, input)) < 1e-10);
        CHECK(std::abs(poisson_second_moment(det, mean) - expectation_moment(2, det, input)) < 1e-10);
      }
    }
  }
}

TEST_CASE("asymptotic expansions") {
  const DetectorModel det(0.5, 3);
  CHECK(asymptotic_mean(det, 200.0, Regime::large) == doctest::Approx(3.0));
  CHECK(std::abs(asymptotic_mean(det, 60.0, Regime::large) - poisson_mean_count(det, 60.0)) < 1e-9);
  CHECK(asymptotic_mean(det, 0.0, Regime::small) == 0.0);
  CHECK(asymptotic_mean(det, 0.02, Regime::small) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(std::abs(asymptotic_mean(det, 0.2, Regime::small) - poisson_mean_count(det, 0.2)) < 1e-6);
}

TEST_CASE("vdp_tmc") {
  const DetectorModel half(0.5, 50);
  CHECK(vdp_tmc(half, half, 0.0) == 0.0);
  CHECK(std::abs(vdp_tmc(half, half, 1.0) - 1.0) < 1e-6);
  const DetectorModel sat(0.5, 3);
  CHECK(vdp_tmc(sat, sat, 200.0) < 1e-12);
}

TEST_CASE("cross_moment_twb") {
  const DetectorModel perfect(1.0, 200);
  const auto weights = poisson_distribution(4.0, 200);
  CHECK(cross_moment_twb(perfect, perfect, weights) == doctest::Approx(4.0 * 5.0).epsilon(1e-12));
  CHECK(cross_moment_twb(DetectorModel(0.4, 2), DetectorModel(0.6, 3),
                         NumberDistribution::vacuum()) == 0.0);

  for (double eta1 : {0.3, 0.8}) {
    for (double eta2 : {0.5, 1.0}) {
      for (int n1 : {1, 4}) {
        for (int n2 : {2, 7}) {
          for (double mean : {0.3, 4.0, 25.0}) {
            const DetectorModel d1(eta1, n1);
            const DetectorModel d2(eta2, n2);
            const auto w = poisson_distribution(mean, std::max(n1, n2));
            CHECK(std::abs(cross_moment_twb(d1, d2, w) - cross_moment_brute(d1, d2, w)) < 1e-10);
          }
        }
      }
    }
  }

  // Non-Poissonian weights use sum |b_n|^2 n^2 in the leading term.
  const auto custom = NumberDistribution::from_probabilities({0.1, 0.0, 0.3, 0.0, 0.0, 0.6});
  const DetectorModel d1(0.7, 2);
  const DetectorModel d2(0.4, 3);
  CHECK(std::abs(cross_moment_twb(d1, d2, custom) - cross_moment_brute(d1, d2, custom)) < 1e-12);
}

TEST_CASE("vdp_twb") {
  const DetectorModel perfect(1.0, 400);
  for (double mean : {0.5, 5.0, 60.0}) CHECK(std::abs(vdp_twb(perfect, perfect, mean)) < 1e-10);
  const DetectorModel d1(0.6, 60);
  const DetectorModel d2(0.4, 60);
  const double mean = 0.8;
  CHECK(std::abs(vdp_twb(d1, d2, mean) - ((0.6 + 0.4) * mean - 2 * 0.6 * 0.4 * mean)) < 1e-6);
  CHECK(vdp_twb(d1, d2, 0.0) == 0.0);
}

TEST_CASE("nrf limits") {
  const DetectorModel a(0.6, 50);
  const DetectorModel b(0.4, 50);
  CHECK(std::abs(nrf(SourceKind::tmc, a, b, 0.05) - 1.0) < 1e-6);
  CHECK(std::abs(nrf(SourceKind::twb, a, b, 0.05) - (1.0 - 2 * 0.6 * 0.4 / (0.6 + 0.4))) < 1e-6);
  const DetectorModel perfect(1.0, 50);
  CHECK(std::abs(nrf(SourceKind::twb, perfect, perfect, 0.05)) < 1e-10);
  CHECK_THROWS_AS(nrf(SourceKind::tmc, a, b, 0.0), DomainError);
}

TEST_CASE("q_measure") {
  const DetectorModel d(0.5, 50);
  CHECK(q_measure(d, d, 0.0) == 0.0);
  CHECK(std::abs(q_measure(d, d, 0.4) - 2 * 0.5 * 0.5 * 0.4) < 1e-6);

  SUBCASE("Q is nonnegative and vanishes at large mean") {
    for (double eta : {0.2, 0.5, 0.9, 1.0}) {
      for (int cap : {1, 3, 10}) {
        const DetectorModel det(eta, cap);
        for (double mean : {0.01, 0.3, 1.0, 4.0, 15.0, 60.0}) {
          CHECK(q_measure(det, det, mean) >= -1e-10);
          CHECK(vdp_twb(det, det, mean) <= vdp_tmc(det, det, mean) + 1e-10);
        }
        CHECK(vdp_tmc(det, det, 400.0) < 1e-8);
        CHECK(vdp_twb(det, det, 400.0) < 1e-8);
      }
    }
  }
}

TEST_CASE("optimize_q") {
  const DetectorModel t(0.5, 3);
  const auto zero = optimize_q(t, t, QVariable::mean, 0.0, {0.1, 20.0});
  CHECK(zero.max_value == 0.0);

  const auto over_mean = optimize_q(t, t, QVariable::mean, 0.5, {0.01, 30.0});
  const DetectorModel at(0.5, 3);
  const double q0 = q_measure(at, at, over_mean.argmax);
  CHECK(q0 == doctest::Approx(over_mean.max_value));
  CHECK(q0 >= q_measure(at, at, over_mean.argmax + 1e-3));
  CHECK(q0 >= q_measure(at, at, over_mean.argmax - 1e-3));
  CHECK_FALSE(over_mean.multimodal);

  const auto over_eta = optimize_q(t, t, QVariable::efficiency, 10.0, {0.01, 1.0});
  CHECK(over_eta.argmax < 1.0);
  CHECK(over_eta.argmax > 0.01);

  CHECK_THROWS_AS(optimize_q(t, t, QVariable::mean, 0.5, {1.0, 1.0}), DomainError);
  CHECK_THROWS_AS(optimize_q(t, t, QVariable::efficiency, 2.0, {0.1, 1.5}), DomainError);
}

TEST_CASE("difference_distribution") {
  const DetectorModel d1(0.7, 3);
  const DetectorModel d2(0.4, 5);

  const auto vac = difference_distribution(make_source(SourceKind::tmc, 0.0, 5), d1, d2);
  CHECK(vac.probability(0) == doctest::Approx(1.0));

  const auto sym = difference_distribution(make_source(SourceKind::tmc, 2.3, 3), d1, d1);
  for (int d = -3; d <= 3; ++d) CHECK(std::abs(sym.probability(d) - sym.probability(-d)) < 1e-12);

  for (double mean : {0.2, 2.0, 9.0}) {
    const auto tmc = difference_distribution(make_source(SourceKind::tmc, mean, 5), d1, d2);
    const auto twb = difference_distribution(make_source(SourceKind::twb, mean, 5), d1, d2);
    CHECK(std::abs(tmc.variance() - vdp_tmc(d1, d2, mean)) < 1e-10);
    CHECK(std::abs(twb.variance() - vdp_twb(d1, d2, mean)) < 1e-10);
    CHECK(std::abs(tmc.mean() - (poisson_mean_count(d1, mean) - poisson_mean_count(d2, mean))) < 1e-10);
    CHECK(tmc.min_d() == -5);
    CHECK(tmc.max_d() == 3);
  }
}

TEST_CASE("count_statistics invariants") {
  const DetectorModel d1(0.8, 2);
  const DetectorModel d2(0.3, 6);
  for (auto kind : {SourceKind::tmc, SourceKind::twb}) {
    for (double mean : {0.5, 3.0, 20.0}) {
      const auto s = count_statistics(kind, d1, d2, mean);
      CHECK(s.second1 >= s.mean1 * s.mean1 - 1e-10);
      CHECK(s.second2 >= s.mean2 * s.mean2 - 1e-10);
      const double diff = s.mean1 - s.mean2;
      CHECK(std::abs(s.vdp - (s.second1 + s.second2 - 2 * s.cross - diff * diff)) < 1e-10);
      const double vdp = kind == SourceKind::tmc ? vdp_tmc(d1, d2, mean) : vdp_twb(d1, d2, mean);
      CHECK(std::abs(s.vdp - vdp) < 1e-10);
    }
  }
}
