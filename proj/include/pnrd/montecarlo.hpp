#pragma once

#include <cstdint>
#include <vector>

#include "pnrd/povm.hpp"
#include "pnrd/random.hpp"
#include "pnrd/states.hpp"

namespace pnrd {

struct SimConfig {
  std::uint64_t seed = 0;
  std::uint64_t trials = 0;
  unsigned workers = 1;
};

/// Empirical (or expected) photocount statistics with standard errors.
///
/// `vdp` is the unbiased sample variance of m1 - m2 for simulated data.
/// Standard errors of second-order quantities use fourth moments; the NRF
/// error is propagated through the ratio with the VDP/count-sum covariance.
struct SampleStats {
  std::uint64_t trials = 0;

  double mean1 = 0.0;
  double mean2 = 0.0;
  double second1 = 0.0;
  double second2 = 0.0;
  double cross = 0.0;
  double mean_diff = 0.0;
  double vdp = 0.0;
  double nrf = 0.0;

  double se_mean1 = 0.0;
  double se_mean2 = 0.0;
  double se_second1 = 0.0;
  double se_second2 = 0.0;
  double se_cross = 0.0;
  double se_vdp = 0.0;
  double se_nrf = 0.0;
  double cov_means = 0.0;  // covariance of the two mean-count estimators

  std::vector<double> freq1;  // empirical marginal count distributions
  std::vector<double> freq2;
  int max_count1 = 0;  // largest photocount observed on each arm
  int max_count2 = 0;

  bool operator==(const SampleStats&) const = default;
};

/// Exact Poisson variate: sequential inversion below mean 30, transformed
/// rejection (PTRS) above.
std::int64_t sample_poisson(double mean, RandomStream& rng);

/// Binomial(n, efficiency) variate: one Bernoulli draw per photon for
/// n <= 64, inversion of the binomial CDF otherwise.
std::int64_t binomial_thin(std::int64_t n, double efficiency, RandomStream& rng);

/// Per-trial photodetection: draw photon numbers from the source, thin each
/// arm binomially, clip at the detector's max count.
///
/// Trials are split into `workers` contiguous blocks and worker w draws from
/// make_stream(seed, w), so the result depends only on (seed, trials, workers).
SampleStats simulate_counts(const TwoModeSource& source, const DetectorModel& det1,
                            const DetectorModel& det2, const SimConfig& cfg);

/// The statistics a run of `trials` trials would report in expectation,
/// computed from the exact joint count distribution. `max_count*` is the
/// largest count whose expected frequency in `trials` trials is at least one.
SampleStats expected_sample_stats(const TwoModeSource& source, const DetectorModel& det1,
                                  const DetectorModel& det2, std::uint64_t trials);

}  // namespace pnrd
