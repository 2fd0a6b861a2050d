#include "pnrd/states.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pnrd/error.hpp"

namespace pnrd {

NumberDistribution::NumberDistribution(std::vector<double> probs, double mean_hint)
    : probs_(std::move(probs)), mean_hint_(mean_hint) {}

NumberDistribution NumberDistribution::from_probabilities(std::vector<double> probs,
                                                          double tolerance) {
  if (probs.empty()) throw ValidationError("number distribution is empty");
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw ValidationError("number distribution has a negative or non-finite entry");
    }
  }
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  if (std::abs(total - 1.0) > tolerance) {
    throw ValidationError("number distribution is not normalized (sum = " +
                          std::to_string(total) + ")");
  }
  for (double& p : probs) p /= total;
  NumberDistribution out(std::move(probs), 0.0);
  out.mean_hint_ = out.mean();
  return out;
}

NumberDistribution NumberDistribution::from_amplitudes(
    std::span<const std::complex<double>> amplitudes, double tolerance) {
  std::vector<double> probs;
  probs.reserve(amplitudes.size());
  for (const auto& b : amplitudes) probs.push_back(std::norm(b));
  return from_probabilities(std::move(probs), tolerance);
}

NumberDistribution NumberDistribution::vacuum() { return NumberDistribution({1.0}, 0.0); }

NumberDistribution NumberDistribution::fock(std::int64_t n) {
  if (n < 0) throw DomainError("Fock state with negative photon number");
  std::vector<double> probs(static_cast<std::size_t>(n) + 1, 0.0);
  probs.back() = 1.0;
  return NumberDistribution(std::move(probs), static_cast<double>(n));
}

double NumberDistribution::mean() const {
  double sum = 0.0;
  for (std::size_t n = 0; n < probs_.size(); ++n) sum += static_cast<double>(n) * probs_[n];
  return sum;
}

double NumberDistribution::second_moment() const {
  double sum = 0.0;
  for (std::size_t n = 0; n < probs_.size(); ++n) {
    const double dn = static_cast<double>(n);
    sum += dn * dn * probs_[n];
  }
  return sum;
}

std::int64_t poisson_base_cutoff(double mean, std::int64_t detector_max_count) {
  return static_cast<std::int64_t>(std::ceil(mean + 12.0 * std::sqrt(mean + 1.0))) +
         std::max<std::int64_t>(detector_max_count, 0) + 30;
}

NumberDistribution poisson_distribution(double mean, std::int64_t detector_max_count,
                                        std::int64_t min_cutoff) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) {
    throw DomainError("Poisson mean must be finite and nonnegative");
  }
  const std::int64_t base =
      std::max(poisson_base_cutoff(mean, detector_max_count), min_cutoff);
  if (mean == 0.0) {
    std::vector<double> probs(static_cast<std::size_t>(base) + 1, 0.0);
    probs[0] = 1.0;
    return NumberDistribution(std::move(probs), 0.0);
  }

  const double log_mean = std::log(mean);
  auto term = [&](std::int64_t n) {
    return std::exp(-mean + static_cast<double>(n) * log_mean -
                    std::lgamma(static_cast<double>(n) + 1.0));
  };

  std::vector<double> probs;
  probs.reserve(static_cast<std::size_t>(base) + 16);
  double sum = 0.0;
  for (std::int64_t n = 0; n <= base; ++n) {
    probs.push_back(term(n));
    sum += probs.back();
  }
  for (std::int64_t n = base + 1;; ++n) {
    const double next = term(n);
    if (next < 1e-16 * sum) break;
    probs.push_back(next);
    sum += next;
  }
  for (double& p : probs) p /= sum;
  return NumberDistribution(std::move(probs), mean);
}

std::string_view to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::tmc: return "tmc";
    case SourceKind::twb: return "twb";
    case SourceKind::custom: return "custom";
  }
  return "unknown";
}

SourceKind parse_source_kind(std::string_view text) {
  if (text == "tmc") return SourceKind::tmc;
  if (text == "twb") return SourceKind::twb;
  if (text == "custom") return SourceKind::custom;
  throw ValidationError("unknown source kind: " + std::string(text));
}

double TwoModeSource::joint_probability(std::int64_t n1, std::int64_t n2) const {
  if (n1 < 0 || n2 < 0) return 0.0;
  const auto i1 = static_cast<std::size_t>(n1);
  const auto i2 = static_cast<std::size_t>(n2);
  if (kind == SourceKind::tmc) return weights[i1] * weights[i2];
  return n1 == n2 ? weights[i1] : 0.0;
}

TwoModeSource make_source(SourceKind kind, double mean, std::int64_t detector_max_count) {
  if (kind == SourceKind::custom) {
    throw ValidationError("custom sources are built from explicit weights");
  }
  return TwoModeSource{kind, mean, poisson_distribution(mean, detector_max_count)};
}

TwoModeSource make_custom_source(NumberDistribution weights) {
  const double mean = weights.mean();
  return TwoModeSource{SourceKind::custom, mean, std::move(weights)};
}

}  // namespace pnrd
