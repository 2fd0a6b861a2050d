#include "pnrd/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "pnrd/error.hpp"
#include "pnrd/special.hpp"

namespace pnrd {
namespace {

void check_mean(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) {
    throw DomainError("mean photon number must be finite and nonnegative");
  }
}

// e^{-x} e_n(x) = Q(n + 1, x); zero for the empty sum n = -1.
double scaled_exp_sum(int n, double x) {
  if (n < 0) return 0.0;
  return special::regularized_gamma_q(static_cast<double>(n) + 1.0, x);
}

// 1 - e^{-x} e_n(x) = P(n + 1, x), computed without subtraction.
double scaled_exp_sum_complement(int n, double x) {
  if (n < 0) return 1.0;
  return special::regularized_gamma_p(static_cast<double>(n) + 1.0, x);
}

}  // namespace

double exp_sum(int n, double x) {
  if (n < -1) throw DomainError("exp_sum order must be at least -1");
  double term = 1.0;
  double sum = n >= 0 ? 1.0 : 0.0;
  for (int k = 1; k <= n; ++k) {
    term *= x / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

double poisson_mean_count(const DetectorModel& det, double mean) {
  check_mean(mean);
  const double x = det.efficiency() * mean;
  if (x == 0.0) return 0.0;
  const int cap = det.max_count();
  // N - N e^{-x} e_{N-1}(x) + x e^{-x} e_{N-2}(x)
  return cap * scaled_exp_sum_complement(cap - 1, x) + x * scaled_exp_sum(cap - 2, x);
}

double poisson_second_moment(const DetectorModel& det, double mean) {
  check_mean(mean);
  const double x = det.efficiency() * mean;
  if (x == 0.0) return 0.0;
  const int cap = det.max_count();
  const double n2 = static_cast<double>(cap) * cap;
  const double log_middle = cap * std::log(x) + std::log(cap + x) - x -
                            std::lgamma(static_cast<double>(cap));
  const double value = n2 * scaled_exp_sum_complement(cap - 1, x) - std::exp(log_middle) +
                       (x * x + x) * scaled_exp_sum(cap - 1, x);
  return std::clamp(value, 0.0, n2);
}

double poisson_count_variance(const DetectorModel& det, double mean) {
  const double m = poisson_mean_count(det, mean);
  return std::max(0.0, poisson_second_moment(det, mean) - m * m);
}

double asymptotic_mean(const DetectorModel& det, double mean, Regime regime) {
  check_mean(mean);
  const double x = det.efficiency() * mean;
  const int cap = det.max_count();
  if (regime == Regime::large) {
    return cap - std::exp(-x) * std::pow(x, cap - 1) / std::exp(special::log_factorial(cap - 1));
  }
  return x - std::pow(x, cap + 1) / std::exp(special::log_factorial(cap + 1));
}

double vdp_tmc(const DetectorModel& det1, const DetectorModel& det2, double mean) {
  return poisson_count_variance(det1, mean) + poisson_count_variance(det2, mean);
}

// The four sums  eta1 eta2 sum w n^2 - eta1 sum w n C2 - eta2 sum w n C1 + sum w C1 C2
// collapse per n into (eta1 n - C1)(eta2 n - C2) = <m1|n><m2|n>. Summing them
// separately cancels terms of size (eta n)^2 deep in saturation, so the
// conditional means are evaluated directly.
namespace {

struct ConditionalMeans {
  std::vector<double> w, f1, f2;
};

ConditionalMeans conditional_means(const DetectorModel& det1, const DetectorModel& det2,
                                   const NumberDistribution& weights) {
  ConditionalMeans out;
  auto probs = weights.probs();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] == 0.0) continue;
    const auto n = static_cast<std::int64_t>(i);
    out.w.push_back(probs[i]);
    out.f1.push_back(fock_moment(1, n, det1));
    out.f2.push_back(fock_moment(1, n, det2));
  }
  return out;
}

}  // namespace

double cross_moment_twb(const DetectorModel& det1, const DetectorModel& det2,
                        const NumberDistribution& weights) {
  const auto c = conditional_means(det1, det2, weights);
  double sum = 0.0;
  for (std::size_t i = 0; i < c.w.size(); ++i) sum += c.w[i] * c.f1[i] * c.f2[i];
  return sum;
}

double vdp_twb(const DetectorModel& det1, const DetectorModel& det2, double mean) {
  check_mean(mean);
  if (mean == 0.0) return 0.0;
  const auto weights =
      poisson_distribution(mean, std::max(det1.max_count(), det2.max_count()));
  // Both arms see the same Poisson marginal, so VDP_TWB = VDP_TMC - 2 cov(m1, m2)
  // with the covariance taken over the shared photon number. Both conditional
  // means rise with n, which keeps cov >= 0 term by term in sign.
  const auto c = conditional_means(det1, det2, weights);
  double m1 = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < c.w.size(); ++i) {
    m1 += c.w[i] * c.f1[i];
    m2 += c.w[i] * c.f2[i];
  }
  double cov = 0.0;
  for (std::size_t i = 0; i < c.w.size(); ++i) cov += c.w[i] * (c.f1[i] - m1) * (c.f2[i] - m2);
  return std::max(0.0, vdp_tmc(det1, det2, mean) - 2.0 * std::max(0.0, cov));
}

double nrf(SourceKind kind, const DetectorModel& det1, const DetectorModel& det2, double mean) {
  check_mean(mean);
  if (mean == 0.0) throw DomainError("NRF is 0/0 at zero mean photon number");
  const double counts = poisson_mean_count(det1, mean) + poisson_mean_count(det2, mean);
  if (counts == 0.0) throw DomainError("NRF is 0/0 when no photocounts are expected");
  switch (kind) {
    case SourceKind::tmc: return vdp_tmc(det1, det2, mean) / counts;
    case SourceKind::twb: return vdp_twb(det1, det2, mean) / counts;
    case SourceKind::custom: break;
  }
  throw ValidationError("closed-form NRF is available for TMC and TWB sources only");
}

double q_measure(const DetectorModel& det1, const DetectorModel& det2, double mean) {
  return vdp_tmc(det1, det2, mean) - vdp_twb(det1, det2, mean);
}

CountStatistics count_statistics(SourceKind kind, const DetectorModel& det1,
                                 const DetectorModel& det2, double mean) {
  check_mean(mean);
  CountStatistics s;
  s.source_kind = kind;
  s.mean1 = poisson_mean_count(det1, mean);
  s.mean2 = poisson_mean_count(det2, mean);
  s.second1 = poisson_second_moment(det1, mean);
  s.second2 = poisson_second_moment(det2, mean);
  switch (kind) {
    case SourceKind::tmc:
      s.cross = s.mean1 * s.mean2;
      break;
    case SourceKind::twb: {
      const auto weights =
          poisson_distribution(mean, std::max(det1.max_count(), det2.max_count()));
      s.cross = cross_moment_twb(det1, det2, weights);
      break;
    }
    case SourceKind::custom:
      throw ValidationError("closed-form statistics are available for TMC and TWB sources only");
  }
  s.vdp = kind == SourceKind::tmc ? vdp_tmc(det1, det2, mean) : vdp_twb(det1, det2, mean);
  const double counts = s.mean1 + s.mean2;
  s.nrf = counts > 0.0 ? s.vdp / counts : std::numeric_limits<double>::quiet_NaN();
  return s;
}

QOptimum optimize_q(const DetectorModel& det1, const DetectorModel& det2, QVariable vary,
                    double fixed_value, Interval search) {
  if (!std::isfinite(search.lo) || !std::isfinite(search.hi) || !(search.hi > search.lo) ||
      search.lo < 0.0) {
    throw DomainError("Q search interval must be finite, nonnegative and nondegenerate");
  }
  if (vary == QVariable::efficiency && search.hi > 1.0) {
    throw DomainError("efficiency search interval must lie within [0, 1]");
  }

  auto objective = [&](double v) {
    if (vary == QVariable::mean) {
      return q_measure(det1.with_efficiency(fixed_value), det2.with_efficiency(fixed_value), v);
    }
    return q_measure(det1.with_efficiency(v), det2.with_efficiency(v), fixed_value);
  };

  constexpr int kGrid = 128;
  std::vector<double> args(kGrid);
  std::vector<double> values(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    args[i] = search.lo + (search.hi - search.lo) * i / (kGrid - 1);
    values[i] = objective(args[i]);
  }

  int peaks = 0;
  for (int i = 0; i < kGrid; ++i) {
    const bool above_left = i == 0 || values[i] > values[i - 1];
    const bool above_right = i == kGrid - 1 || values[i] >= values[i + 1];
    if (above_left && above_right && (i > 0 || values[0] > values[1])) ++peaks;
  }

  const auto best_it = std::max_element(values.begin(), values.end());
  const int best = static_cast<int>(best_it - values.begin());
  QOptimum out{args[best], values[best], peaks > 1};

  double a = args[std::max(best - 1, 0)];
  double b = args[std::min(best + 1, kGrid - 1)];
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = objective(c);
  double fd = objective(d);
  while (b - a > 1e-6) {
    if (fc >= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = objective(d);
    }
  }
  const double refined = 0.5 * (a + b);
  const double refined_value = objective(refined);
  if (refined_value >= out.max_value) {
    out.argmax = refined;
    out.max_value = refined_value;
  }
  return out;
}

JointCountDistribution::JointCountDistribution(int max1, int max2)
    : max1_(max1),
      max2_(max2),
      probs_(static_cast<std::size_t>(max1 + 1) * static_cast<std::size_t>(max2 + 1), 0.0) {}

double JointCountDistribution::total() const {
  return std::accumulate(probs_.begin(), probs_.end(), 0.0);
}

JointCountDistribution joint_count_distribution(const TwoModeSource& source,
                                                const DetectorModel& det1,
                                                const DetectorModel& det2) {
  JointCountDistribution joint(det1.max_count(), det2.max_count());
  if (source.kind == SourceKind::tmc) {
    const auto p1 = apply_detector(det1, source.weights);
    const auto p2 = apply_detector(det2, source.weights);
    for (int m1 = 0; m1 <= det1.max_count(); ++m1) {
      for (int m2 = 0; m2 <= det2.max_count(); ++m2) joint.at(m1, m2) = p1[m1] * p2[m2];
    }
    return joint;
  }
  auto weights = source.weights.probs();
  for (std::size_t n = 0; n < weights.size(); ++n) {
    const double w = weights[n];
    if (w == 0.0) continue;
    const auto p1 = fock_count_distribution(static_cast<std::int64_t>(n), det1);
    const auto p2 = fock_count_distribution(static_cast<std::int64_t>(n), det2);
    for (int m1 = 0; m1 <= det1.max_count(); ++m1) {
      if (p1[m1] == 0.0) continue;
      for (int m2 = 0; m2 <= det2.max_count(); ++m2) joint.at(m1, m2) += w * p1[m1] * p2[m2];
    }
  }
  return joint;
}

DifferenceDistribution::DifferenceDistribution(int min_d, std::vector<double> probs)
    : min_d_(min_d), probs_(std::move(probs)) {
  const double total = std::accumulate(probs_.begin(), probs_.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-12) throw ValidationError("difference distribution is not normalized");
}

double DifferenceDistribution::probability(int d) const {
  if (d < min_d_ || d > max_d()) return 0.0;
  return probs_[static_cast<std::size_t>(d - min_d_)];
}

double DifferenceDistribution::mean() const {
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    sum += (min_d_ + static_cast<int>(i)) * probs_[i];
  }
  return sum;
}

double DifferenceDistribution::variance() const {
  const double mu = mean();
  double sum = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double dev = (min_d_ + static_cast<int>(i)) - mu;
    sum += dev * dev * probs_[i];
  }
  return sum;
}

DifferenceDistribution difference_distribution(const TwoModeSource& source,
                                               const DetectorModel& det1,
                                               const DetectorModel& det2) {
  const auto joint = joint_count_distribution(source, det1, det2);
  const int min_d = -det2.max_count();
  std::vector<double> probs(static_cast<std::size_t>(det1.max_count() + det2.max_count()) + 1, 0.0);
  for (int m1 = 0; m1 <= det1.max_count(); ++m1) {
    for (int m2 = 0; m2 <= det2.max_count(); ++m2) {
      probs[static_cast<std::size_t>(m1 - m2 - min_d)] += joint(m1, m2);
    }
  }
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (double& p : probs) p /= total;
  return DifferenceDistribution(min_d, std::move(probs));
}

}  // namespace pnrd
