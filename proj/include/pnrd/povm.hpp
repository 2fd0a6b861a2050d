#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pnrd/states.hpp"

namespace pnrd {

/// A lossy photon-number-resolving detector that saturates at `max_count`.
class DetectorModel {
 public:
  DetectorModel(double efficiency, int max_count);

  double efficiency() const { return efficiency_; }
  int max_count() const { return max_count_; }

  /// x = eta / (1 - eta); throws DomainError at eta = 1.
  double odds() const;

  DetectorModel with_efficiency(double efficiency) const {
    return DetectorModel(efficiency, max_count_);
  }

 private:
  double efficiency_;
  int max_count_;
};

/// Photocount probabilities for m = 0..N.
class CountDistribution {
 public:
  explicit CountDistribution(std::vector<double> probs);

  std::span<const double> probs() const { return probs_; }
  double operator[](std::size_t m) const { return probs_[m]; }
  int max_count() const { return static_cast<int>(probs_.size()) - 1; }

  double moment(int p) const;

 private:
  std::vector<double> probs_;
};

/// w_{m,n}(eta) = C(n, m) eta^m (1 - eta)^(n - m), zero for m > n.
double loss_conditional_prob(std::int64_t m, std::int64_t n, double efficiency);

/// <n|Pi_m|n> for m = 0..N: binomial loss with all m >= N clipped onto N.
CountDistribution fock_count_distribution(std::int64_t n, const DetectorModel& det);

/// p'(m) = sum_n w_{m,n} p_n with saturation clipping at N.
CountDistribution apply_detector(const DetectorModel& det, const NumberDistribution& input);

/// Saturation deficit of the first moment operator,
/// C_n = sum_{m=N+1}^{n} (m - N) w_{m,n}(eta).
double coefficient_C(std::int64_t n, const DetectorModel& det);

/// Saturation term of the second moment operator,
/// D_n = 1/2 sum_{m=N+2}^{n} (m - N)(m - N - 1) w_{m,n}(eta).
double coefficient_D(std::int64_t n, const DetectorModel& det);

/// Closed form C(n, N+1) x^{N+1} (1-eta)^n 2F1(2, N-n+1; N+2; -x).
/// Cross-check of coefficient_C only; refuses eta = 1.
double coefficient_C_hypergeometric(std::int64_t n, const DetectorModel& det);

/// Closed form C(n, N+2) x^{N+2} (1-eta)^n 2F1(3, N-n+2; N+3; -x).
double coefficient_D_hypergeometric(std::int64_t n, const DetectorModel& det);

/// Gauss 2F1(a, b; c; z) for a nonpositive integer b, where the series stops
/// after k = -b.
double terminating_hypergeometric(double a, std::int64_t b, double c, double z);

/// <n| m^p |n> for the POVM moment operator (saturated outcome counts as N).
double fock_moment(int p, std::int64_t n, const DetectorModel& det);

/// sum_n p_n <n| m^p |n>.
double expectation_moment(int p, const DetectorModel& det, const NumberDistribution& input);

}  // namespace pnrd
