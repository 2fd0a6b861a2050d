#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pnrd/povm.hpp"
#include "pnrd/states.hpp"

namespace pnrd {

/// One pump setting of a calibration experiment.
struct RunPoint {
  int pump_setting = 0;
  /// Incident mean photon number per arm as set by the experimenter; NaN in
  /// blind runs.
  double mean_photons = 0.0;
  double mean_count1 = 0.0;
  double se_mean_count1 = 0.0;
  double mean_count2 = 0.0;
  double se_mean_count2 = 0.0;
  double cov_mean_counts = 0.0;
  double vdp = 0.0;
  double se_vdp = 0.0;
  double nrf = 0.0;
  double se_nrf = 0.0;
  int max_count1 = 0;
  int max_count2 = 0;
  std::uint64_t trials = 0;
};

/// True detector parameters behind a synthetic run; only used for scoring.
struct SealedTruth {
  double eta1 = 0.0;
  double eta2 = 0.0;
  int n1 = 0;
  int n2 = 0;
};

struct CalibrationRun {
  SourceKind source = SourceKind::twb;
  std::vector<RunPoint> points;
  std::optional<SealedTruth> truth;

  bool blind() const;
};

enum class CalibrationMethod { twb_linear, tmc_nonlinear };

std::string_view to_string(CalibrationMethod method);
CalibrationMethod parse_calibration_method(std::string_view text);

struct CalibrationResult {
  CalibrationMethod method = CalibrationMethod::twb_linear;
  double k_ratio = 0.0;
  double se_k_ratio = 0.0;
  double eta1 = 0.0;
  double se_eta1 = 0.0;
  double eta2 = 0.0;
  double se_eta2 = 0.0;
  std::optional<int> n1_hat;
  std::optional<int> n2_hat;
  double fit_residual = 0.0;
  int degrees_of_freedom = 0;
  int points_used = 0;
  bool degenerate = false;
};

/// Largest mean photon number with (eta n)^N / (N+1)! <= threshold.
double linear_regime_bound(const DetectorModel& det, double threshold);

/// Monte Carlo run: one simulate_counts call per grid point, each with its
/// own seed derived from `seed` and the point index.
CalibrationRun generate_synthetic_run(SourceKind kind, const DetectorModel& det1,
                                      const DetectorModel& det2, std::span<const double> mean_grid,
                                      std::uint64_t trials, std::uint64_t seed,
                                      unsigned workers = 1, bool blind = false);

/// Noise-free run: exact expected statistics, with the standard errors a run
/// of `trials` trials per point would have.
CalibrationRun generate_analytic_run(SourceKind kind, const DetectorModel& det1,
                                     const DetectorModel& det2, std::span<const double> mean_grid,
                                     std::uint64_t trials);

struct SaturationEstimate {
  int n1_hat = 0;
  int n2_hat = 0;
};

/// Plateau counts from the last two grid points. Throws
/// SaturationNotReachedError unless both arms changed by less than
/// `flat_tolerance` (relative) between them.
SaturationEstimate detect_saturation(const CalibrationRun& run, double flat_tolerance = 1e-3);

/// Twin-beam protocol in the linear regime: k from count ratios, then
/// eta1 = (1 - NRF)(1 + k) / 2 and eta2 = eta1 / k.
///
/// A point is used when each arm's mean count is below `regime_threshold`
/// times that arm's plateau estimate (detected plateau, or else the largest
/// count observed in the run). A second pass drops points whose count ratio
/// sits more than five standard errors from the first-pass k.
CalibrationResult calibrate_twb_linear(const CalibrationRun& run, double regime_threshold = 0.1);

enum class MeanPhotonSource {
  recorded,           // incident mean photon number recorded with each point
  inferred_from_arm1  // solve poisson_mean_count = arm-1 mean for each trial (eta1, N1)
};

struct NonlinearFitOptions {
  MeanPhotonSource mean_photons = MeanPhotonSource::recorded;
  double flat_tolerance = 1e-3;
};

/// Coherent-state protocol beyond the linear regime.
///
/// Saturation counts come from detect_saturation. The chi-square of the
/// measured NRF (and, with recorded mean photon numbers, both arms' mean
/// counts) against the closed forms is minimized over (eta1, eta2) in (0, 1]^2
/// by Nelder-Mead from 8 fixed starts. `degenerate` is set when two starts end
/// more than 1e-2 apart with residuals within 1% of each other.
CalibrationResult calibrate_tmc_nonlinear(const CalibrationRun& run,
                                          const NonlinearFitOptions& options = {});

/// Mean photon number whose Poisson mean count equals `mean_count`.
double infer_mean_photons(const DetectorModel& det, double mean_count);

/// Run record CSV: a header row then one row per point.
void write_run_csv(std::ostream& out, const CalibrationRun& run);
CalibrationRun read_run_csv(std::istream& in, SourceKind source);

}  // namespace pnrd
