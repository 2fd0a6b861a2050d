#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace pnrd {

/// Photon-number probabilities p_n for n = 0..cutoff.
///
/// Always normalized and nonnegative. `mean_hint` carries the nominal mean
/// photon number when the distribution was built from one (Poisson weights).
class NumberDistribution {
 public:
  /// Accepts any nonnegative vector whose sum is within `tolerance` of one and
  /// renormalizes it exactly.
  static NumberDistribution from_probabilities(std::vector<double> probs,
                                               double tolerance = 1e-9);

  /// Reduces amplitudes b_n to |b_n|^2; phases are discarded.
  static NumberDistribution from_amplitudes(
      std::span<const std::complex<double>> amplitudes,
      double tolerance = 1e-9);

  static NumberDistribution vacuum();
  static NumberDistribution fock(std::int64_t n);

  std::span<const double> probs() const { return probs_; }
  double operator[](std::size_t n) const { return n < probs_.size() ? probs_[n] : 0.0; }
  std::int64_t cutoff() const { return static_cast<std::int64_t>(probs_.size()) - 1; }
  double mean_hint() const { return mean_hint_; }

  double mean() const;
  double second_moment() const;

 private:
  NumberDistribution(std::vector<double> probs, double mean_hint);
  friend NumberDistribution poisson_distribution(double, std::int64_t, std::int64_t);

  std::vector<double> probs_;
  double mean_hint_ = 0.0;
};

/// Cutoff used for Poisson weights at the given mean:
/// ceil(mean + 12 sqrt(mean + 1)) + detector_max_count + 30.
/// Callers extend it further until the tail is negligible.
std::int64_t poisson_base_cutoff(double mean, std::int64_t detector_max_count);

/// Poisson(mean) photon-number distribution, e^{-mean} mean^n / n!.
///
/// The support starts from poisson_base_cutoff() (or `min_cutoff`, whichever
/// is larger) and is extended until the next term falls below 1e-16 of the
/// running sum; the result is then renormalized.
NumberDistribution poisson_distribution(double mean,
                                        std::int64_t detector_max_count = 0,
                                        std::int64_t min_cutoff = 0);

enum class SourceKind { tmc, twb, custom };

std::string_view to_string(SourceKind kind);
SourceKind parse_source_kind(std::string_view text);

/// Diagonal two-mode photon statistics.
///
/// TMC: independent Poisson marginals, `weights` holds the common marginal.
/// TWB / custom: joint weight sits on n1 == n2, `weights` holds |b_n|^2.
struct TwoModeSource {
  SourceKind kind = SourceKind::tmc;
  double mean_photons = 0.0;
  NumberDistribution weights = NumberDistribution::vacuum();

  /// Marginal photon-number distribution of either arm.
  const NumberDistribution& marginal() const { return weights; }
  double joint_probability(std::int64_t n1, std::int64_t n2) const;
  bool is_diagonal() const { return kind != SourceKind::tmc; }
};

/// TMC or TWB source at the given mean photon number per arm.
TwoModeSource make_source(SourceKind kind, double mean,
                          std::int64_t detector_max_count = 0);

/// Photon-number-correlated source with arbitrary diagonal weights.
TwoModeSource make_custom_source(NumberDistribution weights);

}  // namespace pnrd
