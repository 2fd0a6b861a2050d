#pragma once

#include <cstdint>
#include <vector>

#include "pnrd/povm.hpp"
#include "pnrd/states.hpp"

namespace pnrd {

/// Joint photocount statistics of a two-detector measurement.
struct CountStatistics {
  SourceKind source_kind = SourceKind::tmc;
  double mean1 = 0.0;
  double mean2 = 0.0;
  double second1 = 0.0;
  double second2 = 0.0;
  double cross = 0.0;
  double vdp = 0.0;
  double nrf = 0.0;  // NaN when both mean counts vanish
};

/// Partial exponential series e_n(x) = sum_{k=0}^{n} x^k / k!; e_{-1}(x) = 0.
double exp_sum(int n, double x);

/// Mean photocount for Poisson light of mean photon number `mean`:
/// N - [N e_{N-1}(x) - x e_{N-2}(x)] e^{-x}, x = eta * mean.
double poisson_mean_count(const DetectorModel& det, double mean);

/// Second photocount moment for Poisson light:
/// N^2 - x^N (N + x) e^{-x} / Gamma(N) + [x^2 + x - N^2] e^{-x} e_{N-1}(x).
double poisson_second_moment(const DetectorModel& det, double mean);

/// Photocount variance for Poisson light.
double poisson_count_variance(const DetectorModel& det, double mean);

enum class Regime { large, small };

/// Leading behaviour of poisson_mean_count.
///   large: N - e^{-x} x^{N-1} / (N-1)!
///   small: x - x^{N+1} / (N+1)!
double asymptotic_mean(const DetectorModel& det, double mean, Regime regime);

/// Variance of the photocount difference for the two-mode coherent state.
double vdp_tmc(const DetectorModel& det1, const DetectorModel& det2, double mean);

/// <m1 m2> for a photon-number-correlated source with diagonal weights |b_n|^2,
/// assembled from the four sums of the twin-beam cross moment.
double cross_moment_twb(const DetectorModel& det1, const DetectorModel& det2,
                        const NumberDistribution& weights);

/// Variance of the photocount difference for the twin beam with Poisson
/// weights at `mean`.
double vdp_twb(const DetectorModel& det1, const DetectorModel& det2, double mean);

/// Noise reduction factor, VDP / (<m1> + <m2>). Requires mean > 0.
double nrf(SourceKind kind, const DetectorModel& det1, const DetectorModel& det2, double mean);

/// Q = vdp_tmc - vdp_twb.
double q_measure(const DetectorModel& det1, const DetectorModel& det2, double mean);

/// Closed-form statistics for a TMC or TWB source.
CountStatistics count_statistics(SourceKind kind, const DetectorModel& det1,
                                 const DetectorModel& det2, double mean);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

enum class QVariable { mean, efficiency };

struct QOptimum {
  double argmax = 0.0;
  double max_value = 0.0;
  bool multimodal = false;  // grid scan found more than one local maximum
};

/// Maximizes Q over one variable for a balanced pair (both efficiencies equal).
///
/// The max counts come from the two templates. With `vary == mean`,
/// `fixed_value` is the shared efficiency; with `vary == efficiency` it is the
/// mean photon number. A 128-point scan brackets the best grid maximum, which
/// golden-section search refines to 1e-6 in the argument.
QOptimum optimize_q(const DetectorModel& det1, const DetectorModel& det2, QVariable vary,
                    double fixed_value, Interval search);

/// Joint photocount probabilities p(m1, m2), row-major over m1.
class JointCountDistribution {
 public:
  JointCountDistribution(int max1, int max2);

  int max1() const { return max1_; }
  int max2() const { return max2_; }
  double operator()(int m1, int m2) const { return probs_[index(m1, m2)]; }
  double& at(int m1, int m2) { return probs_[index(m1, m2)]; }
  double total() const;

 private:
  std::size_t index(int m1, int m2) const {
    return static_cast<std::size_t>(m1) * static_cast<std::size_t>(max2_ + 1) +
           static_cast<std::size_t>(m2);
  }
  int max1_;
  int max2_;
  std::vector<double> probs_;
};

JointCountDistribution joint_count_distribution(const TwoModeSource& source,
                                                const DetectorModel& det1,
                                                const DetectorModel& det2);

/// p(d) for d = m1 - m2 over [-N2, N1].
class DifferenceDistribution {
 public:
  DifferenceDistribution(int min_d, std::vector<double> probs);

  int min_d() const { return min_d_; }
  int max_d() const { return min_d_ + static_cast<int>(probs_.size()) - 1; }
  double probability(int d) const;
  double mean() const;
  double variance() const;

 private:
  int min_d_;
  std::vector<double> probs_;
};

DifferenceDistribution difference_distribution(const TwoModeSource& source,
                                               const DetectorModel& det1,
                                               const DetectorModel& det2);

}  // namespace pnrd
