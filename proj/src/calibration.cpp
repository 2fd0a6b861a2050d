#include "pnrd/calibration.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include "pnrd/analytics.hpp"
#include "pnrd/error.hpp"
#include "pnrd/montecarlo.hpp"
#include "pnrd/random.hpp"
#include "pnrd/special.hpp"
#include "simplex.hpp"

namespace pnrd {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_grid(std::span<const double> grid) {
  if (grid.empty()) throw ValidationError("mean-photon grid is empty");
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] > 0.0) || !std::isfinite(grid[i])) {
      throw ValidationError("mean-photon grid values must be positive and finite");
    }
    if (i > 0 && !(grid[i] > grid[i - 1])) {
      throw ValidationError("mean-photon grid must be strictly increasing");
    }
  }
}

RunPoint point_from_stats(int index, double mean_photons, const SampleStats& s) {
  RunPoint p;
  p.pump_setting = index;
  p.mean_photons = mean_photons;
  p.mean_count1 = s.mean1;
  p.se_mean_count1 = s.se_mean1;
  p.mean_count2 = s.mean2;
  p.se_mean_count2 = s.se_mean2;
  p.cov_mean_counts = s.cov_means;
  p.vdp = s.vdp;
  p.se_vdp = s.se_vdp;
  p.nrf = s.nrf;
  p.se_nrf = s.se_nrf;
  p.max_count1 = s.max_count1;
  p.max_count2 = s.max_count2;
  p.trials = s.trials;
  return p;
}

void check_trials(const CalibrationRun& run) {
  for (const auto& p : run.points) {
    if (p.trials < 1000) {
      throw ValidationError("calibration points need at least 1000 trials each");
    }
  }
}

struct WeightedMean {
  double value = 0.0;
  double se = 0.0;
  double chi2 = 0.0;
};

// Inverse-variance weighted mean; equal weights when any error is zero.
WeightedMean weighted_mean(const std::vector<double>& values, const std::vector<double>& errors) {
  const bool usable = std::all_of(errors.begin(), errors.end(),
                                  [](double e) { return e > 0.0 && std::isfinite(e); });
  double sw = 0.0;
  double swx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double w = usable ? 1.0 / (errors[i] * errors[i]) : 1.0;
    sw += w;
    swx += w * values[i];
  }
  WeightedMean out;
  out.value = swx / sw;
  if (usable) {
    out.se = 1.0 / std::sqrt(sw);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double z = (values[i] - out.value) / errors[i];
      out.chi2 += z * z;
    }
  }
  return out;
}

double ratio_error(const RunPoint& p) {
  const double r = p.mean_count1 / p.mean_count2;
  const double rel1 = p.se_mean_count1 / p.mean_count1;
  const double rel2 = p.se_mean_count2 / p.mean_count2;
  const double var =
      rel1 * rel1 + rel2 * rel2 - 2.0 * p.cov_mean_counts / (p.mean_count1 * p.mean_count2);
  return std::abs(r) * std::sqrt(std::max(0.0, var));
}

struct LinearEstimate {
  WeightedMean k;
  WeightedMean nrf;
  std::vector<const RunPoint*> used;
};

LinearEstimate linear_estimate(const std::vector<const RunPoint*>& points) {
  std::vector<double> ratios, ratio_errors, nrfs, nrf_errors;
  for (const RunPoint* p : points) {
    ratios.push_back(p->mean_count1 / p->mean_count2);
    ratio_errors.push_back(ratio_error(*p));
    nrfs.push_back(p->nrf);
    nrf_errors.push_back(p->se_nrf);
  }
  return {weighted_mean(ratios, ratio_errors), weighted_mean(nrfs, nrf_errors), points};
}

}  // namespace

bool CalibrationRun::blind() const {
  return std::any_of(points.begin(), points.end(),
                     [](const RunPoint& p) { return std::isnan(p.mean_photons); });
}

std::string_view to_string(CalibrationMethod method) {
  return method == CalibrationMethod::twb_linear ? "twb-linear" : "tmc-nonlinear";
}

CalibrationMethod parse_calibration_method(std::string_view text) {
  if (text == "twb-linear") return CalibrationMethod::twb_linear;
  if (text == "tmc-nonlinear") return CalibrationMethod::tmc_nonlinear;
  throw ValidationError("unknown calibration method: " + std::string(text));
}

double linear_regime_bound(const DetectorModel& det, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw DomainError("linear-regime threshold must lie in (0, 1)");
  }
  if (det.efficiency() == 0.0) throw DomainError("linear regime is unbounded at zero efficiency");
  const int cap = det.max_count();
  const double log_bound = (std::log(threshold) + special::log_factorial(cap + 1)) / cap;
  return std::exp(log_bound) / det.efficiency();
}

CalibrationRun generate_synthetic_run(SourceKind kind, const DetectorModel& det1,
                                      const DetectorModel& det2, std::span<const double> mean_grid,
                                      std::uint64_t trials, std::uint64_t seed, unsigned workers,
                                      bool blind) {
  check_grid(mean_grid);
  CalibrationRun run;
  run.source = kind;
  run.truth = SealedTruth{det1.efficiency(), det2.efficiency(), det1.max_count(), det2.max_count()};
  const auto cap = std::max(det1.max_count(), det2.max_count());
  for (std::size_t i = 0; i < mean_grid.size(); ++i) {
    const auto source = make_source(kind, mean_grid[i], cap);
    SplitMix64 mix(seed ^ (0xA0761D6478BD642FULL * (i + 1)));
    const SimConfig cfg{mix.next(), trials, workers};
    const auto stats = simulate_counts(source, det1, det2, cfg);
    run.points.push_back(
        point_from_stats(static_cast<int>(i), blind ? kNaN : mean_grid[i], stats));
  }
  return run;
}

CalibrationRun generate_analytic_run(SourceKind kind, const DetectorModel& det1,
                                     const DetectorModel& det2, std::span<const double> mean_grid,
                                     std::uint64_t trials) {
  check_grid(mean_grid);
  CalibrationRun run;
  run.source = kind;
  run.truth = SealedTruth{det1.efficiency(), det2.efficiency(), det1.max_count(), det2.max_count()};
  const auto cap = std::max(det1.max_count(), det2.max_count());
  for (std::size_t i = 0; i < mean_grid.size(); ++i) {
    const auto source = make_source(kind, mean_grid[i], cap);
    const auto stats = expected_sample_stats(source, det1, det2, trials);
    run.points.push_back(point_from_stats(static_cast<int>(i), mean_grid[i], stats));
  }
  return run;
}

SaturationEstimate detect_saturation(const CalibrationRun& run, double flat_tolerance) {
  if (!(flat_tolerance > 0.0)) throw DomainError("flat tolerance must be positive");
  if (run.points.size() < 2) {
    throw SaturationNotReachedError("plateau detection needs at least two grid points");
  }
  const RunPoint& last = run.points.back();
  const RunPoint& prev = run.points[run.points.size() - 2];
  auto flat = [&](double now, double before) {
    return now > 0.0 && std::abs(now - before) / now < flat_tolerance;
  };
  if (!flat(last.mean_count1, prev.mean_count1) || !flat(last.mean_count2, prev.mean_count2)) {
    throw SaturationNotReachedError(
        "mean photocounts still change between the last two grid points; extend the grid");
  }
  const auto n1 = static_cast<int>(std::lround(last.mean_count1));
  const auto n2 = static_cast<int>(std::lround(last.mean_count2));
  if (n1 < 1 || n2 < 1) {
    throw SaturationNotReachedError("plateau photocount rounds to zero");
  }
  return {n1, n2};
}

CalibrationResult calibrate_twb_linear(const CalibrationRun& run, double regime_threshold) {
  if (run.source != SourceKind::twb) {
    throw ValidationError("the linear protocol needs a twin-beam run");
  }
  if (!(regime_threshold > 0.0)) throw DomainError("regime threshold must be positive");
  check_trials(run);

  CalibrationResult result;
  result.method = CalibrationMethod::twb_linear;

  int plateau1 = 0;
  int plateau2 = 0;
  try {
    const auto sat = detect_saturation(run);
    plateau1 = sat.n1_hat;
    plateau2 = sat.n2_hat;
    result.n1_hat = plateau1;
    result.n2_hat = plateau2;
  } catch (const SaturationNotReachedError&) {
    for (const auto& p : run.points) {
      plateau1 = std::max(plateau1, p.max_count1);
      plateau2 = std::max(plateau2, p.max_count2);
    }
  }
  plateau1 = std::max(plateau1, 1);
  plateau2 = std::max(plateau2, 1);

  std::vector<const RunPoint*> linear;
  for (const auto& p : run.points) {
    if (!(p.mean_count1 > 0.0 && p.mean_count2 > 0.0) || !std::isfinite(p.nrf)) continue;
    if (p.mean_count1 / plateau1 < regime_threshold && p.mean_count2 / plateau2 < regime_threshold) {
      linear.push_back(&p);
    }
  }
  if (linear.size() < 2) {
    throw InsufficientDataError("fewer than two grid points lie in the linear regime");
  }

  LinearEstimate est = linear_estimate(linear);
  std::vector<const RunPoint*> consistent;
  for (const RunPoint* p : linear) {
    const double se = ratio_error(*p);
    const double dev = std::abs(p->mean_count1 / p->mean_count2 - est.k.value);
    if (se == 0.0 || dev <= 5.0 * se) consistent.push_back(p);
  }
  if (consistent.size() >= 2 && consistent.size() < linear.size()) {
    est = linear_estimate(consistent);
  }

  const double k = est.k.value;
  const double nrf_bar = est.nrf.value;
  if (!(nrf_bar < 1.0)) {
    throw NonQuantumDataError("mean NRF is not below one; the source is not photon-number correlated");
  }
  const double eta1 = (1.0 - nrf_bar) * (1.0 + k) / 2.0;
  const double eta2 = eta1 / k;

  const double d1_nrf = (1.0 + k) / 2.0;
  const double d1_k = (1.0 - nrf_bar) / 2.0;
  const double d2_nrf = (1.0 + k) / (2.0 * k);
  const double d2_k = -(1.0 - nrf_bar) / (2.0 * k * k);
  const double se_nrf = est.nrf.se;
  const double se_k = est.k.se;

  result.k_ratio = k;
  result.se_k_ratio = se_k;
  result.eta1 = eta1;
  result.eta2 = eta2;
  result.se_eta1 = std::hypot(d1_nrf * se_nrf, d1_k * se_k);
  result.se_eta2 = std::hypot(d2_nrf * se_nrf, d2_k * se_k);
  result.points_used = static_cast<int>(est.used.size());
  result.fit_residual = est.k.chi2 + est.nrf.chi2;
  result.degrees_of_freedom = 2 * result.points_used - 2;
  return result;
}

double infer_mean_photons(const DetectorModel& det, double mean_count) {
  if (!(mean_count >= 0.0) || !(mean_count < det.max_count())) {
    throw DomainError("mean count must lie in [0, N) to invert the response curve");
  }
  if (det.efficiency() == 0.0) throw DomainError("response curve is flat at zero efficiency");
  if (mean_count == 0.0) return 0.0;
  double lo = 0.0;
  double hi = std::max(1.0, mean_count / det.efficiency());
  while (poisson_mean_count(det, hi) < mean_count) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e12) throw DomainError("mean count too close to saturation to invert");
  }
  for (int i = 0; i < 400 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (poisson_mean_count(det, mid) < mean_count) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

namespace {

struct NonlinearObjective {
  const CalibrationRun& run;
  int n1;
  int n2;
  MeanPhotonSource nbar_source;

  // Chi-square and number of residual terms at (eta1, eta2).
  std::pair<double, int> evaluate(double eta1, double eta2) const {
    if (!(eta1 > 0.0 && eta1 <= 1.0 && eta2 > 0.0 && eta2 <= 1.0)) {
      return {std::numeric_limits<double>::infinity(), 0};
    }
    const DetectorModel det1(eta1, n1);
    const DetectorModel det2(eta2, n2);
    double chi2 = 0.0;
    int terms = 0;
    auto add = [&](double measured, double model, double se) {
      if (se > 0.0 && std::isfinite(se)) {
        const double z = (measured - model) / se;
        chi2 += z * z;
        ++terms;
      }
    };
    for (const auto& p : run.points) {
      double nbar = p.mean_photons;
      const bool inferred = nbar_source == MeanPhotonSource::inferred_from_arm1;
      if (inferred) {
        if (!(p.mean_count1 < n1)) continue;
        nbar = infer_mean_photons(det1, p.mean_count1);
      }
      if (!(nbar > 0.0)) continue;
      const double m1 = poisson_mean_count(det1, nbar);
      const double m2 = poisson_mean_count(det2, nbar);
      if (m1 + m2 > 0.0 && std::isfinite(p.nrf)) {
        const double model_nrf = vdp_tmc(det1, det2, nbar) / (m1 + m2);
        add(p.nrf, model_nrf, p.se_nrf);
      }
      if (!inferred) add(p.mean_count1, m1, p.se_mean_count1);
      add(p.mean_count2, m2, p.se_mean_count2);
    }
    return {chi2, terms};
  }

  double operator()(const std::array<double, 2>& x) const { return evaluate(x[0], x[1]).first; }
};

}  // namespace

CalibrationResult calibrate_tmc_nonlinear(const CalibrationRun& run,
                                          const NonlinearFitOptions& options) {
  if (run.source != SourceKind::tmc) {
    throw ValidationError("the nonlinear protocol needs a two-mode coherent run");
  }
  if (run.points.size() < 3) throw InsufficientDataError("the nonlinear fit needs at least three points");
  check_trials(run);
  if (options.mean_photons == MeanPhotonSource::recorded && run.blind()) {
    throw InsufficientDataError("blind run: recorded mean photon numbers are unavailable");
  }

  const auto sat = detect_saturation(run, options.flat_tolerance);
  const NonlinearObjective objective{run, sat.n1_hat, sat.n2_hat, options.mean_photons};

  constexpr std::array<double, 4> kStart1 = {0.15, 0.4, 0.65, 0.9};
  constexpr std::array<double, 2> kStart2 = {0.25, 0.75};
  std::vector<detail::SimplexResult<2>> ends;
  for (double a : kStart1) {
    for (double b : kStart2) {
      ends.push_back(detail::nelder_mead<2>(objective, {a, b}, 0.1, 1e-8, 4000));
    }
  }
  const auto best = *std::min_element(ends.begin(), ends.end(), [](const auto& x, const auto& y) {
    return x.value < y.value;
  });

  CalibrationResult result;
  result.method = CalibrationMethod::tmc_nonlinear;
  result.n1_hat = sat.n1_hat;
  result.n2_hat = sat.n2_hat;
  result.eta1 = best.x[0];
  result.eta2 = best.x[1];
  result.k_ratio = result.eta1 / result.eta2;
  result.fit_residual = best.value;
  const int terms = objective.evaluate(best.x[0], best.x[1]).second;
  result.points_used = static_cast<int>(run.points.size());
  result.degrees_of_freedom = terms - 2;

  for (const auto& e : ends) {
    const double dist = std::hypot(e.x[0] - best.x[0], e.x[1] - best.x[1]);
    if (dist > 1e-2 && std::abs(e.value - best.value) <= 0.01 * best.value + 1e-9) {
      result.degenerate = true;
    }
  }

  // Curvature of chi^2 / 2 gives the parameter covariance.
  const double h = 1e-4;
  const double c1 = std::min(best.x[0], 1.0 - h);
  const double c2 = std::min(best.x[1], 1.0 - h);
  auto f = [&](double a, double b) { return objective.evaluate(a, b).first; };
  const double f0 = f(c1, c2);
  const double h11 = (f(c1 + h, c2) - 2.0 * f0 + f(c1 - h, c2)) / (h * h);
  const double h22 = (f(c1, c2 + h) - 2.0 * f0 + f(c1, c2 - h)) / (h * h);
  const double h12 =
      (f(c1 + h, c2 + h) - f(c1 + h, c2 - h) - f(c1 - h, c2 + h) + f(c1 - h, c2 - h)) /
      (4.0 * h * h);
  const double det = h11 * h22 - h12 * h12;
  if (det > 0.0 && h11 > 0.0) {
    const double cov11 = 2.0 * h22 / det;
    const double cov22 = 2.0 * h11 / det;
    const double cov12 = -2.0 * h12 / det;
    result.se_eta1 = std::sqrt(cov11);
    result.se_eta2 = std::sqrt(cov22);
    const double k = result.k_ratio;
    const double rel = cov11 / (result.eta1 * result.eta1) + cov22 / (result.eta2 * result.eta2) -
                       2.0 * cov12 / (result.eta1 * result.eta2);
    result.se_k_ratio = k * std::sqrt(std::max(0.0, rel));
  } else {
    result.se_eta1 = result.se_eta2 = result.se_k_ratio = std::numeric_limits<double>::infinity();
  }

  if (result.degrees_of_freedom > 0) {
    const double limit = special::chi_square_quantile(0.99, result.degrees_of_freedom);
    if (result.fit_residual > limit) {
      throw ModelMismatchError(fmt::format(
          "fit residual {:.6g} exceeds the 99% chi-square bound {:.6g} ({} dof)",
          result.fit_residual, limit, result.degrees_of_freedom));
    }
  }
  return result;
}

namespace {

constexpr std::array<std::string_view, 14> kRunColumns = {
    "pump_setting", "mean_photons", "mean_count1", "se_mean_count1", "mean_count2",
    "se_mean_count2", "cov_mean_counts", "vdp", "se_vdp", "nrf", "se_nrf",
    "max_count1", "max_count2", "trials"};

double parse_double(const std::string& text) {
  if (text == "nan" || text == "NaN" || text.empty()) return kNaN;
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size()) throw ValidationError("malformed number in run CSV: " + text);
  return v;
}

}  // namespace

void write_run_csv(std::ostream& out, const CalibrationRun& run) {
  for (std::size_t i = 0; i < kRunColumns.size(); ++i) {
    out << (i ? "," : "") << kRunColumns[i];
  }
  out << '\n';
  for (const auto& p : run.points) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},"
                       "{:.17g},{:.17g},{},{},{}\n",
                       p.pump_setting, p.mean_photons, p.mean_count1, p.se_mean_count1,
                       p.mean_count2, p.se_mean_count2, p.cov_mean_counts, p.vdp, p.se_vdp,
                       p.nrf, p.se_nrf, p.max_count1, p.max_count2, p.trials);
  }
}

CalibrationRun read_run_csv(std::istream& in, SourceKind source) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("run CSV is empty");
  std::map<std::string, std::size_t> column;
  {
    std::stringstream header(line);
    std::string name;
    for (std::size_t i = 0; std::getline(header, name, ','); ++i) column[name] = i;
  }
  for (auto name : kRunColumns) {
    if (!column.count(std::string(name))) {
      throw ValidationError("run CSV lacks column " + std::string(name));
    }
  }

  CalibrationRun run;
  run.source = source;
  while (std::getline(in, line)) {
    if (line.empty()) break;  // a result block may follow after a blank line
    std::vector<std::string> cells;
    std::stringstream row(line);
    std::string cell;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() < column.size()) throw ValidationError("short row in run CSV");
    auto get = [&](std::string_view name) { return cells[column.at(std::string(name))]; };
    RunPoint p;
    p.pump_setting = std::stoi(get("pump_setting"));
    p.mean_photons = parse_double(get("mean_photons"));
    p.mean_count1 = parse_double(get("mean_count1"));
    p.se_mean_count1 = parse_double(get("se_mean_count1"));
    p.mean_count2 = parse_double(get("mean_count2"));
    p.se_mean_count2 = parse_double(get("se_mean_count2"));
    p.cov_mean_counts = parse_double(get("cov_mean_counts"));
    p.vdp = parse_double(get("vdp"));
    p.se_vdp = parse_double(get("se_vdp"));
    p.nrf = parse_double(get("nrf"));
    p.se_nrf = parse_double(get("se_nrf"));
    p.max_count1 = std::stoi(get("max_count1"));
    p.max_count2 = std::stoi(get("max_count2"));
    p.trials = std::stoull(get("trials"));
    run.points.push_back(p);
  }
  return run;
}

}  // namespace pnrd
