#include "pnrd/povm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "pnrd/error.hpp"
#include "pnrd/special.hpp"

namespace pnrd {
namespace {

void check_efficiency(double efficiency) {
  if (!(efficiency >= 0.0 && efficiency <= 1.0)) {
    throw DomainError("efficiency must lie in [0, 1], got " + std::to_string(efficiency));
  }
}

// Visits (m, w_{m,n}) for m >= start. Terms further than ~40 standard
// deviations below the mean are below the smallest double and are skipped;
// above the mode the walk stops once the remaining tail is negligible even
// after weighting by a factor up to n^2.
template <class Visitor>
void for_each_binomial_term(std::int64_t n, double eta, std::int64_t start, Visitor&& visit) {
  start = std::max<std::int64_t>(start, 0);
  if (start > n) return;
  if (eta == 0.0) {
    if (start == 0) visit(std::int64_t{0}, 1.0);
    return;
  }
  if (eta == 1.0) {
    visit(n, 1.0);
    return;
  }

  const double dn = static_cast<double>(n);
  const double sd = std::sqrt(dn * eta * (1.0 - eta));
  const auto floor_window = static_cast<std::int64_t>(std::floor(dn * eta - 40.0 * sd - 10.0));
  const std::int64_t lo = std::max(start, floor_window);
  if (lo > n) return;

  const std::int64_t mode = std::min(n, static_cast<std::int64_t>(std::floor((dn + 1.0) * eta)));
  const double log_eta = std::log(eta);
  const double log_loss = std::log1p(-eta);
  const double log_odds = log_eta - log_loss;
  const double weight_bound = (dn + 1.0) * (dn + 1.0);

  double log_term = special::log_binomial(n, lo) + static_cast<double>(lo) * log_eta +
                    static_cast<double>(n - lo) * log_loss;
  double sum = 0.0;
  for (std::int64_t m = lo; m <= n; ++m) {
    const double term = std::exp(log_term);
    visit(m, term);
    sum += term;
    if (m == n) break;
    const double ratio_log = std::log(static_cast<double>(n - m) / static_cast<double>(m + 1)) + log_odds;
    if (m >= mode && sum > 0.0) {
      const double ratio = std::exp(ratio_log);
      if (ratio < 1.0 && term * ratio / (1.0 - ratio) * weight_bound < 1e-17 * sum) break;
    }
    log_term += ratio_log;
  }
}

}  // namespace

DetectorModel::DetectorModel(double efficiency, int max_count)
    : efficiency_(efficiency), max_count_(max_count) {
  check_efficiency(efficiency);
  if (max_count < 1) throw DomainError("max_count must be at least 1");
}

double DetectorModel::odds() const {
  if (efficiency_ >= 1.0) throw DomainError("odds eta/(1-eta) is undefined at eta = 1");
  return efficiency_ / (1.0 - efficiency_);
}

CountDistribution::CountDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) throw ValidationError("count distribution needs at least two outcomes");
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("count probability outside [0, 1]");
  }
  const double total = std::accumulate(probs_.begin(), probs_.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) throw ValidationError("count distribution is not normalized");
}

double CountDistribution::moment(int p) const {
  double sum = 0.0;
  for (std::size_t m = 0; m < probs_.size(); ++m) {
    sum += std::pow(static_cast<double>(m), p) * probs_[m];
  }
  return sum;
}

double loss_conditional_prob(std::int64_t m, std::int64_t n, double efficiency) {
  check_efficiency(efficiency);
  if (m < 0 || n < 0) throw DomainError("photon numbers must be nonnegative");
  if (m > n) return 0.0;
  if (efficiency == 0.0) return m == 0 ? 1.0 : 0.0;
  if (efficiency == 1.0) return m == n ? 1.0 : 0.0;
  return std::exp(special::log_binomial(n, m) + static_cast<double>(m) * std::log(efficiency) +
                  static_cast<double>(n - m) * std::log1p(-efficiency));
}

CountDistribution fock_count_distribution(std::int64_t n, const DetectorModel& det) {
  if (n < 0) throw DomainError("photon number must be nonnegative");
  const std::int64_t cap = det.max_count();
  std::vector<double> probs(static_cast<std::size_t>(cap) + 1, 0.0);
  for_each_binomial_term(n, det.efficiency(), 0, [&](std::int64_t m, double w) {
    probs[static_cast<std::size_t>(std::min(m, cap))] += w;
  });
  for (double& p : probs) p = std::clamp(p, 0.0, 1.0);
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (double& p : probs) p /= total;
  return CountDistribution(std::move(probs));
}

CountDistribution apply_detector(const DetectorModel& det, const NumberDistribution& input) {
  auto in = input.probs();
  const double total_in = std::accumulate(in.begin(), in.end(), 0.0);
  if (std::abs(total_in - 1.0) > 1e-9) {
    throw ValidationError("input photon-number distribution is not normalized");
  }
  const std::int64_t cap = det.max_count();
  std::vector<double> out(static_cast<std::size_t>(cap) + 1, 0.0);
  for (std::size_t n = 0; n < in.size(); ++n) {
    const double pn = in[n];
    if (pn == 0.0) continue;
    for_each_binomial_term(static_cast<std::int64_t>(n), det.efficiency(), 0,
                           [&](std::int64_t m, double w) {
                             out[static_cast<std::size_t>(std::min(m, cap))] += pn * w;
                           });
  }
  for (double& p : out) p = std::clamp(p, 0.0, 1.0);
  const double total = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& p : out) p /= total;
  return CountDistribution(std::move(out));
}

double coefficient_C(std::int64_t n, const DetectorModel& det) {
  if (n < 0) throw DomainError("photon number must be nonnegative");
  const std::int64_t cap = det.max_count();
  if (n <= cap) return 0.0;
  double sum = 0.0;
  for_each_binomial_term(n, det.efficiency(), cap + 1, [&](std::int64_t m, double w) {
    sum += static_cast<double>(m - cap) * w;
  });
  return sum;
}

double coefficient_D(std::int64_t n, const DetectorModel& det) {
  if (n < 0) throw DomainError("photon number must be nonnegative");
  const std::int64_t cap = det.max_count();
  if (n <= cap + 1) return 0.0;
  double sum = 0.0;
  for_each_binomial_term(n, det.efficiency(), cap + 2, [&](std::int64_t m, double w) {
    const auto excess = static_cast<double>(m - cap);
    sum += 0.5 * excess * (excess - 1.0) * w;
  });
  return sum;
}

double terminating_hypergeometric(double a, std::int64_t b, double c, double z) {
  if (b > 0) throw DomainError("hypergeometric series does not terminate for b > 0");
  if (c <= 0.0 && c == std::floor(c) && c >= static_cast<double>(b)) {
    throw DomainError("hypergeometric c is a nonpositive integer within the series range");
  }
  double term = 1.0;
  double sum = 1.0;
  for (std::int64_t k = 0; k < -b; ++k) {
    const auto dk = static_cast<double>(k);
    term *= (a + dk) * (static_cast<double>(b) + dk) * z / ((c + dk) * (dk + 1.0));
    sum += term;
  }
  return sum;
}

namespace {

double hypergeometric_coefficient(std::int64_t n, const DetectorModel& det, int order) {
  if (n < 0) throw DomainError("photon number must be nonnegative");
  const std::int64_t cap = det.max_count();
  const double eta = det.efficiency();
  const std::int64_t lowest = cap + order;
  if (n < lowest) return 0.0;
  const double x = det.odds();
  if (eta == 0.0) return 0.0;
  const double log_prefactor = special::log_binomial(n, lowest) +
                               static_cast<double>(lowest) * std::log(x) +
                               static_cast<double>(n) * std::log1p(-eta);
  const double series = terminating_hypergeometric(static_cast<double>(order + 1), lowest - n,
                                                   static_cast<double>(lowest + 1), -x);
  return std::exp(log_prefactor) * series;
}

}  // namespace

double coefficient_C_hypergeometric(std::int64_t n, const DetectorModel& det) {
  return hypergeometric_coefficient(n, det, 1);
}

double coefficient_D_hypergeometric(std::int64_t n, const DetectorModel& det) {
  return hypergeometric_coefficient(n, det, 2);
}

double fock_moment(int p, std::int64_t n, const DetectorModel& det) {
  if (p < 1) throw DomainError("moment order must be positive");
  return fock_count_distribution(n, det).moment(p);
}

double expectation_moment(int p, const DetectorModel& det, const NumberDistribution& input) {
  if (p < 1) throw DomainError("moment order must be positive");
  auto in = input.probs();
  const double total_in = std::accumulate(in.begin(), in.end(), 0.0);
  if (std::abs(total_in - 1.0) > 1e-9) {
    throw ValidationError("input photon-number distribution is not normalized");
  }
  double sum = 0.0;
  for (std::size_t n = 0; n < in.size(); ++n) {
    if (in[n] == 0.0) continue;
    sum += in[n] * fock_moment(p, static_cast<std::int64_t>(n), det);
  }
  return sum;
}

}  // namespace pnrd
