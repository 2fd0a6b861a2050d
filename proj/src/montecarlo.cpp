#include "pnrd/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "pnrd/analytics.hpp"
#include "pnrd/error.hpp"

namespace pnrd {
namespace {

// Averages of the per-trial products the estimators need.
struct RawMoments {
  double e1 = 0, e2 = 0;        // m1, m2
  double e11 = 0, e22 = 0;      // m1^2, m2^2
  double e12 = 0;               // m1 m2
  double e1111 = 0, e2222 = 0;  // m1^4, m2^4
  double e1212 = 0;             // (m1 m2)^2
  double ed3 = 0, ed4 = 0;      // d^3, d^4
  double ed2s = 0;              // d^2 (m1 + m2)
  std::vector<double> freq1, freq2;
  int max1 = 0, max2 = 0;
};

// Exact integer sums accumulated by one worker.
struct IntegerSums {
  std::int64_t s1 = 0, s2 = 0, s11 = 0, s22 = 0, s12 = 0;
  std::int64_t s1111 = 0, s2222 = 0, s1212 = 0;
  std::int64_t sd3 = 0, sd4 = 0, sd2s = 0;
  std::vector<std::uint64_t> hist1, hist2;

  IntegerSums(int max1, int max2)
      : hist1(static_cast<std::size_t>(max1) + 1, 0), hist2(static_cast<std::size_t>(max2) + 1, 0) {}

  void add(std::int64_t m1, std::int64_t m2) {
    const std::int64_t d = m1 - m2;
    const std::int64_t p = m1 * m2;
    s1 += m1;
    s2 += m2;
    s11 += m1 * m1;
    s22 += m2 * m2;
    s12 += p;
    s1111 += m1 * m1 * m1 * m1;
    s2222 += m2 * m2 * m2 * m2;
    s1212 += p * p;
    sd3 += d * d * d;
    sd4 += d * d * d * d;
    sd2s += d * d * (m1 + m2);
    ++hist1[static_cast<std::size_t>(m1)];
    ++hist2[static_cast<std::size_t>(m2)];
  }

  void merge(const IntegerSums& o) {
    s1 += o.s1; s2 += o.s2; s11 += o.s11; s22 += o.s22; s12 += o.s12;
    s1111 += o.s1111; s2222 += o.s2222; s1212 += o.s1212;
    sd3 += o.sd3; sd4 += o.sd4; sd2s += o.sd2s;
    for (std::size_t i = 0; i < hist1.size(); ++i) hist1[i] += o.hist1[i];
    for (std::size_t i = 0; i < hist2.size(); ++i) hist2[i] += o.hist2[i];
  }

  RawMoments averages(std::uint64_t trials) const {
    const auto n = static_cast<double>(trials);
    auto avg = [n](std::int64_t s) { return static_cast<double>(s) / n; };
    RawMoments r;
    r.e1 = avg(s1); r.e2 = avg(s2); r.e11 = avg(s11); r.e22 = avg(s22); r.e12 = avg(s12);
    r.e1111 = avg(s1111); r.e2222 = avg(s2222); r.e1212 = avg(s1212);
    r.ed3 = avg(sd3); r.ed4 = avg(sd4); r.ed2s = avg(sd2s);
    auto fill = [&](const std::vector<std::uint64_t>& hist, std::vector<double>& freq, int& top) {
      freq.resize(hist.size());
      for (std::size_t m = 0; m < hist.size(); ++m) {
        freq[m] = static_cast<double>(hist[m]) / n;
        if (hist[m] > 0) top = static_cast<int>(m);
      }
    };
    fill(hist1, r.freq1, r.max1);
    fill(hist2, r.freq2, r.max2);
    return r;
  }
};

SampleStats finalize(const RawMoments& r, std::uint64_t trials, bool sample) {
  const auto n = static_cast<double>(trials);
  SampleStats s;
  s.trials = trials;
  s.mean1 = r.e1;
  s.mean2 = r.e2;
  s.second1 = r.e11;
  s.second2 = r.e22;
  s.cross = r.e12;

  const double mu_d = r.e1 - r.e2;
  const double ed2 = r.e11 + r.e22 - 2.0 * r.e12;
  const double var_d = std::max(0.0, ed2 - mu_d * mu_d);
  s.mean_diff = mu_d;
  s.vdp = (sample && trials >= 2) ? var_d * n / (n - 1.0) : var_d;

  const double counts = r.e1 + r.e2;
  s.nrf = counts > 0.0 ? s.vdp / counts : std::numeric_limits<double>::quiet_NaN();

  auto se = [n](double variance) { return std::sqrt(std::max(0.0, variance) / n); };
  s.se_mean1 = se(r.e11 - r.e1 * r.e1);
  s.se_mean2 = se(r.e22 - r.e2 * r.e2);
  s.se_second1 = se(r.e1111 - r.e11 * r.e11);
  s.se_second2 = se(r.e2222 - r.e22 * r.e22);
  s.se_cross = se(r.e1212 - r.e12 * r.e12);
  s.cov_means = (r.e12 - r.e1 * r.e2) / n;

  // Central fourth moment of d for the variance estimator's own error.
  const double mu4 = r.ed4 - 4.0 * mu_d * r.ed3 + 6.0 * mu_d * mu_d * ed2 -
                     3.0 * mu_d * mu_d * mu_d * mu_d;
  const double var_vdp = std::max(0.0, mu4 - var_d * var_d) / n;
  s.se_vdp = std::sqrt(var_vdp);

  if (counts > 0.0) {
    const double var_s = std::max(0.0, r.e11 + r.e22 + 2.0 * r.e12 - counts * counts);
    const double e_ds = r.e11 - r.e22;
    const double third = r.ed2s - 2.0 * mu_d * e_ds + mu_d * mu_d * counts - counts * var_d;
    const double ratio = s.nrf;
    const double var_nrf =
        (var_vdp - 2.0 * ratio * third / n + ratio * ratio * var_s / n) / (counts * counts);
    s.se_nrf = std::sqrt(std::max(0.0, var_nrf));
  }

  s.freq1 = r.freq1;
  s.freq2 = r.freq2;
  s.max_count1 = r.max1;
  s.max_count2 = r.max2;
  return s;
}

void check_efficiency(double efficiency) {
  if (!(efficiency >= 0.0 && efficiency <= 1.0)) throw DomainError("efficiency must lie in [0, 1]");
}

// Hormann's PTRS transformed rejection, valid for mean >= 10.
std::int64_t poisson_ptrs(double mean, RandomStream& rng) {
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const auto k = static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
    if (us >= 0.07 && v <= vr) return k;
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        -mean + static_cast<double>(k) * loglam - std::lgamma(static_cast<double>(k) + 1.0)) {
      return k;
    }
  }
}

class SourceSampler {
 public:
  explicit SourceSampler(const TwoModeSource& source) : source_(source) {
    if (source.kind == SourceKind::custom) {
      auto probs = source.weights.probs();
      cdf_.resize(probs.size());
      double acc = 0.0;
      for (std::size_t i = 0; i < probs.size(); ++i) cdf_[i] = (acc += probs[i]);
      cdf_.back() = 1.0;
    }
  }

  std::pair<std::int64_t, std::int64_t> draw(RandomStream& rng) const {
    switch (source_.kind) {
      case SourceKind::tmc: {
        const auto n1 = sample_poisson(source_.mean_photons, rng);
        const auto n2 = sample_poisson(source_.mean_photons, rng);
        return {n1, n2};
      }
      case SourceKind::twb: {
        const auto n = sample_poisson(source_.mean_photons, rng);
        return {n, n};
      }
      case SourceKind::custom: {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        const auto n = static_cast<std::int64_t>(std::min<std::ptrdiff_t>(
            it - cdf_.begin(), static_cast<std::ptrdiff_t>(cdf_.size()) - 1));
        return {n, n};
      }
    }
    return {0, 0};
  }

 private:
  const TwoModeSource& source_;
  std::vector<double> cdf_;
};

}  // namespace

std::int64_t sample_poisson(double mean, RandomStream& rng) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw DomainError("Poisson mean must be finite and nonnegative");
  if (mean == 0.0) return 0;
  if (mean >= 30.0) return poisson_ptrs(mean, rng);
  double p = std::exp(-mean);
  double cdf = p;
  const double u = rng.uniform();
  std::int64_t k = 0;
  while (u > cdf && p > 0.0) {
    ++k;
    p *= mean / static_cast<double>(k);
    cdf += p;
  }
  return k;
}

std::int64_t binomial_thin(std::int64_t n, double efficiency, RandomStream& rng) {
  if (n < 0) throw DomainError("photon number must be nonnegative");
  check_efficiency(efficiency);
  if (n == 0 || efficiency == 0.0) return 0;
  if (efficiency == 1.0) return n;
  if (n <= 64) {
    std::int64_t hits = 0;
    for (std::int64_t i = 0; i < n; ++i) hits += rng.uniform() < efficiency ? 1 : 0;
    return hits;
  }
  const bool flip = efficiency > 0.5;
  const double p = flip ? 1.0 - efficiency : efficiency;
  const double log_p0 = static_cast<double>(n) * std::log1p(-p);
  if (log_p0 < -600.0) {
    // Starting mass would underflow; a sum of two independent binomials is exact.
    const std::int64_t half = n / 2;
    return binomial_thin(half, efficiency, rng) + binomial_thin(n - half, efficiency, rng);
  }
  const double odds = p / (1.0 - p);
  double pk = std::exp(log_p0);
  double u = rng.uniform();
  std::int64_t k = 0;
  while (u > pk && k < n) {
    u -= pk;
    pk *= static_cast<double>(n - k) / static_cast<double>(k + 1) * odds;
    ++k;
  }
  return flip ? n - k : k;
}

SampleStats simulate_counts(const TwoModeSource& source, const DetectorModel& det1,
                            const DetectorModel& det2, const SimConfig& cfg) {
  if (cfg.trials == 0) throw DomainError("simulation needs at least one trial");
  if (cfg.workers == 0) throw DomainError("simulation needs at least one worker");
  const double top = static_cast<double>(std::max(det1.max_count(), det2.max_count()));
  if (top * top * top * top * static_cast<double>(cfg.trials) * 4.0 > 9.0e18) {
    throw DomainError("trials x max_count^4 overflows the exact accumulators");
  }

  const SourceSampler sampler(source);
  const unsigned workers = cfg.workers;
  std::vector<IntegerSums> partial(workers, IntegerSums(det1.max_count(), det2.max_count()));

  auto run_block = [&](unsigned w) {
    const std::uint64_t begin = cfg.trials * w / workers;
    const std::uint64_t end = cfg.trials * (w + 1) / workers;
    RandomStream rng = make_stream(cfg.seed, w);
    IntegerSums& acc = partial[w];
    const std::int64_t cap1 = det1.max_count();
    const std::int64_t cap2 = det2.max_count();
    for (std::uint64_t t = begin; t < end; ++t) {
      const auto [n1, n2] = sampler.draw(rng);
      const auto m1 = std::min(binomial_thin(n1, det1.efficiency(), rng), cap1);
      const auto m2 = std::min(binomial_thin(n2, det2.efficiency(), rng), cap2);
      acc.add(m1, m2);
    }
  };

  if (workers == 1) {
    run_block(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(run_block, w);
    for (auto& t : threads) t.join();
  }

  IntegerSums total(det1.max_count(), det2.max_count());
  for (const auto& p : partial) total.merge(p);
  return finalize(total.averages(cfg.trials), cfg.trials, true);
}

SampleStats expected_sample_stats(const TwoModeSource& source, const DetectorModel& det1,
                                  const DetectorModel& det2, std::uint64_t trials) {
  if (trials == 0) throw DomainError("expected statistics need a positive trial count");
  const auto joint = joint_count_distribution(source, det1, det2);
  RawMoments r;
  r.freq1.assign(static_cast<std::size_t>(det1.max_count()) + 1, 0.0);
  r.freq2.assign(static_cast<std::size_t>(det2.max_count()) + 1, 0.0);
  for (int m1 = 0; m1 <= det1.max_count(); ++m1) {
    for (int m2 = 0; m2 <= det2.max_count(); ++m2) {
      const double p = joint(m1, m2);
      if (p == 0.0) continue;
      const double a = m1;
      const double b = m2;
      const double d = a - b;
      r.e1 += p * a;
      r.e2 += p * b;
      r.e11 += p * a * a;
      r.e22 += p * b * b;
      r.e12 += p * a * b;
      r.e1111 += p * a * a * a * a;
      r.e2222 += p * b * b * b * b;
      r.e1212 += p * a * a * b * b;
      r.ed3 += p * d * d * d;
      r.ed4 += p * d * d * d * d;
      r.ed2s += p * d * d * (a + b);
      r.freq1[static_cast<std::size_t>(m1)] += p;
      r.freq2[static_cast<std::size_t>(m2)] += p;
    }
  }
  const auto n = static_cast<double>(trials);
  for (std::size_t m = 0; m < r.freq1.size(); ++m) {
    if (r.freq1[m] * n >= 1.0) r.max1 = static_cast<int>(m);
  }
  for (std::size_t m = 0; m < r.freq2.size(); ++m) {
    if (r.freq2[m] * n >= 1.0) r.max2 = static_cast<int>(m);
  }
  return finalize(r, trials, false);
}

}  // namespace pnrd
