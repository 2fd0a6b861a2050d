#include "pnrd/cli.hpp"

#include <fmt/format.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pnrd/analytics.hpp"
#include "pnrd/calibration.hpp"
#include "pnrd/error.hpp"
#include "pnrd/montecarlo.hpp"

namespace pnrd::cli {
namespace {

enum ExitCode {
  kOk = 0,
  kIo = 1,
  kUsage = 2,
  kInsufficientData = 3,
  kSaturationNotReached = 4,
  kModelMismatch = 5,
  kNonQuantum = 6,
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Boolean switches; every other config key takes a value.
const std::set<std::string> kSwitches = {"analytic", "blind", "infer-nbar"};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  return fmt::format("{:.17g}", v);
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_number(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ValidationError("not a number: '" + text + "'");
  }
  if (used != text.size()) throw ValidationError("not a number: '" + text + "'");
  return v;
}

// "min:max:points" (log-spaced when `log_spaced`, else linear) or "a,b,c".
std::vector<double> parse_grid(const std::string& text, bool log_spaced) {
  std::vector<double> grid;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream in(text);
    for (std::string part; std::getline(in, part, ':');) parts.push_back(trim(part));
    if (parts.size() != 3) throw ValidationError("grid range must look like min:max:points");
    const double lo = parse_number(parts[0]);
    const double hi = parse_number(parts[1]);
    const double count = parse_number(parts[2]);
    if (!(count >= 1.0) || count != std::floor(count)) {
      throw ValidationError("grid point count must be a positive integer");
    }
    if (!(hi >= lo)) throw ValidationError("grid range needs max >= min");
    if (log_spaced && !(lo > 0.0)) throw ValidationError("log-spaced grid needs min > 0");
    const auto n = static_cast<int>(count);
    for (int i = 0; i < n; ++i) {
      const double t = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
      grid.push_back(log_spaced ? lo * std::pow(hi / lo, t) : lo + t * (hi - lo));
    }
    grid.front() = lo;
    if (n > 1) grid.back() = hi;
  } else {
    std::stringstream in(text);
    for (std::string part; std::getline(in, part, ',');) {
      if (!trim(part).empty()) grid.push_back(parse_number(trim(part)));
    }
  }
  if (grid.empty()) throw ValidationError("grid is empty");
  for (double v : grid) {
    if (!std::isfinite(v)) throw ValidationError("grid values must be finite");
  }
  return grid;
}

void require_nonnegative(const std::vector<double>& grid, const char* what) {
  for (double v : grid) {
    if (v < 0.0) throw ValidationError(fmt::format("{} grid values must be nonnegative", what));
  }
}

void write_output(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file " + path);
  out << content;
  out.close();
  if (!out) throw IoError("failed writing output file " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Splices a key=value config file into the argument list. Keys already given
// on the command line are skipped so that flags win.
std::vector<std::string> apply_config(std::vector<std::string> args) {
  std::string config_path;
  for (auto it = args.begin(); it != args.end();) {
    if (*it == "--config") {
      if (it + 1 == args.end()) throw ValidationError("--config needs a file name");
      config_path = *(it + 1);
      it = args.erase(it, it + 2);
    } else if (it->rfind("--config=", 0) == 0) {
      config_path = it->substr(9);
      it = args.erase(it);
    } else {
      ++it;
    }
  }
  if (config_path.empty()) return args;

  auto given = [&](const std::string& key) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
      return a == "--" + key || a.rfind("--" + key + "=", 0) == 0;
    });
  };
  std::stringstream in(read_file(config_path));
  std::vector<std::string> extra;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError(fmt::format("{}:{}: expected key=value", config_path, line_no));
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ValidationError(fmt::format("{}:{}: empty key", config_path, line_no));
    if (given(key)) continue;
    if (kSwitches.count(key)) {
      if (value == "true" || value == "1" || value == "yes" || value == "on") {
        extra.push_back("--" + key);
      }
    } else {
      extra.push_back("--" + key);
      extra.push_back(value);
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

// ---------------------------------------------------------------------------

struct ResponseCurveArgs {
  double eta = 0.0;
  int max_count = 0;
  double nbar_min = 0.01;
  double nbar_max = 100.0;
  int points = 200;
  std::string out = "-";
};

void response_curve(const ResponseCurveArgs& a) {
  if (!(a.nbar_min > 0.0 && a.nbar_max > a.nbar_min)) {
    throw ValidationError("need 0 < nbar-min < nbar-max");
  }
  if (a.points < 2) throw ValidationError("need at least two points");
  const DetectorModel det(a.eta, a.max_count);
  const auto grid =
      parse_grid(fmt::format("{:.17g}:{:.17g}:{}", a.nbar_min, a.nbar_max, a.points), true);
  std::string csv = "nbar,mean_count,no_saturation_reference\n";
  for (double nbar : grid) {
    csv += fmt::format("{},{},{}\n", num(nbar), num(poisson_mean_count(det, nbar)),
                       num(a.eta * nbar));
  }
  write_output(a.out, csv);
}

struct VdpCurveArgs {
  double eta1 = 0.0;
  double eta2 = 0.0;
  int n1 = 0;
  int n2 = 0;
  std::string grid = "0.01:200:120";
  std::string out = "-";
};

void vdp_curve(const VdpCurveArgs& a) {
  const DetectorModel d1(a.eta1, a.n1);
  const DetectorModel d2(a.eta2, a.n2);
  const auto grid = parse_grid(a.grid, true);
  require_nonnegative(grid, "nbar");
  std::string csv = "nbar,vdp_tmc,vdp_twb,nrf_tmc,nrf_twb,q\n";
  for (double nbar : grid) {
    const auto tmc = count_statistics(SourceKind::tmc, d1, d2, nbar);
    const auto twb = count_statistics(SourceKind::twb, d1, d2, nbar);
    csv += fmt::format("{},{},{},{},{},{}\n", num(nbar), num(tmc.vdp), num(twb.vdp), num(tmc.nrf),
                       num(twb.nrf), num(tmc.vdp - twb.vdp));
  }
  write_output(a.out, csv);
}

struct QMapArgs {
  int max_count = 0;
  std::string nbar_grid = "0.01:50:100";
  std::string eta_grid = "0:1:101";
  std::string out;
};

std::string ridge_path(const std::string& out, const char* suffix) {
  std::string stem = out;
  if (stem.size() > 4 && stem.substr(stem.size() - 4) == ".csv") stem.resize(stem.size() - 4);
  return stem + suffix;
}

void q_map(const QMapArgs& a) {
  const auto nbars = parse_grid(a.nbar_grid, true);
  const auto etas = parse_grid(a.eta_grid, false);
  require_nonnegative(nbars, "nbar");
  for (double eta : etas) {
    if (eta < 0.0 || eta > 1.0) throw ValidationError("eta grid values must lie in [0, 1]");
  }
  if (a.max_count < 1) throw ValidationError("n-max-count must be at least 1");

  // q[i][j] at eta i, nbar j
  std::vector<std::vector<double>> q(etas.size(), std::vector<double>(nbars.size()));
  std::string csv = "nbar,eta,q\n";
  for (std::size_t i = 0; i < etas.size(); ++i) {
    const DetectorModel det(etas[i], a.max_count);
    for (std::size_t j = 0; j < nbars.size(); ++j) {
      q[i][j] = q_measure(det, det, nbars[j]);
      csv += fmt::format("{},{},{}\n", num(nbars[j]), num(etas[i]), num(q[i][j]));
    }
  }

  std::string by_eta = "eta,optimal_nbar,q\n";
  for (std::size_t i = 0; i < etas.size(); ++i) {
    const auto best = std::max_element(q[i].begin(), q[i].end()) - q[i].begin();
    by_eta += fmt::format("{},{},{}\n", num(etas[i]), num(nbars[static_cast<std::size_t>(best)]),
                          num(q[i][static_cast<std::size_t>(best)]));
  }
  std::string by_nbar = "nbar,optimal_eta,q\n";
  for (std::size_t j = 0; j < nbars.size(); ++j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < etas.size(); ++i) {
      if (q[i][j] > q[best][j]) best = i;
    }
    by_nbar += fmt::format("{},{},{}\n", num(nbars[j]), num(etas[best]), num(q[best][j]));
  }
  write_output(a.out, csv);
  write_output(ridge_path(a.out, "_ridge_nbar.csv"), by_eta);
  write_output(ridge_path(a.out, "_ridge_eta.csv"), by_nbar);
}

struct SimulateArgs {
  std::string source = "twb";
  double eta1 = 0.0;
  double eta2 = 0.0;
  int n1 = 0;
  int n2 = 0;
  double nbar = 1.0;
  std::uint64_t trials = 1000000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string out = "-";
};

void simulate(const SimulateArgs& a) {
  const SourceKind kind = parse_source_kind(a.source);
  if (kind == SourceKind::custom) throw ValidationError("simulate supports tmc and twb sources");
  const DetectorModel d1(a.eta1, a.n1);
  const DetectorModel d2(a.eta2, a.n2);
  const auto source = make_source(kind, a.nbar, std::max(a.n1, a.n2));
  const auto s = simulate_counts(source, d1, d2, SimConfig{a.seed, a.trials, a.workers});
  const auto exact = count_statistics(kind, d1, d2, a.nbar);

  struct Column {
    const char* name;
    double empirical;
    double analytic;
    double se;
  };
  const std::vector<Column> columns = {
      {"mean1", s.mean1, exact.mean1, s.se_mean1},
      {"mean2", s.mean2, exact.mean2, s.se_mean2},
      {"second1", s.second1, exact.second1, s.se_second1},
      {"second2", s.second2, exact.second2, s.se_second2},
      {"cross", s.cross, exact.cross, s.se_cross},
      {"vdp", s.vdp, exact.vdp, s.se_vdp},
      {"nrf", s.nrf, exact.nrf, s.se_nrf},
  };
  std::string header = "source,nbar,trials,seed,workers";
  std::string row = fmt::format("{},{},{},{},{}", to_string(kind), num(a.nbar), a.trials, a.seed,
                                a.workers);
  for (const auto& c : columns) {
    header += fmt::format(",{0},{0}_analytic,se_{0},z_{0}", c.name);
    double z = 0.0;
    if (c.se > 0.0) {
      z = (c.empirical - c.analytic) / c.se;
    } else if (c.empirical != c.analytic) {
      z = std::numeric_limits<double>::quiet_NaN();
    }
    row += fmt::format(",{},{},{},{}", num(c.empirical), num(c.analytic), num(c.se), num(z));
  }
  write_output(a.out, header + "\n" + row + "\n");
}

struct CalibrateArgs {
  std::string method;
  double eta1 = 0.0;
  double eta2 = 0.0;
  int n1 = 0;
  int n2 = 0;
  std::string grid;
  std::uint64_t trials = 0;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  bool analytic = false;
  bool blind = false;
  bool infer_nbar = false;
  double regime_threshold = 0.1;
  std::string run_path;
  std::string out = "-";
};

void calibrate(const CalibrateArgs& a, bool have_truth) {
  const auto method = parse_calibration_method(a.method);
  const SourceKind kind =
      method == CalibrationMethod::twb_linear ? SourceKind::twb : SourceKind::tmc;

  CalibrationRun run;
  if (!a.run_path.empty()) {
    std::stringstream in(read_file(a.run_path));
    run = read_run_csv(in, kind);
  } else {
    if (!have_truth) {
      throw ValidationError("synthetic mode needs --true-eta1 --true-eta2 --true-n1 --true-n2");
    }
    const DetectorModel d1(a.eta1, a.n1);
    const DetectorModel d2(a.eta2, a.n2);
    std::string grid_text = a.grid;
    if (grid_text.empty()) {
      grid_text = method == CalibrationMethod::twb_linear
                      ? "0.01,0.02,0.05,0.1,0.2,0.5,1,2,5,10,20,50,100"
                      : "0.5,1,2,3,5,8,12,16,20,30,40,60,100,150,200";
    }
    const auto grid = parse_grid(grid_text, true);
    std::uint64_t trials = a.trials;
    if (trials == 0) trials = method == CalibrationMethod::twb_linear ? 1000000 : 100000;
    run = a.analytic ? generate_analytic_run(kind, d1, d2, grid, trials)
                     : generate_synthetic_run(kind, d1, d2, grid, trials, a.seed, a.workers,
                                              a.blind);
  }

  std::ostringstream csv;
  write_run_csv(csv, run);

  CalibrationResult result;
  if (method == CalibrationMethod::twb_linear) {
    result = calibrate_twb_linear(run, a.regime_threshold);
  } else {
    NonlinearFitOptions options;
    if (a.infer_nbar || run.blind()) options.mean_photons = MeanPhotonSource::inferred_from_arm1;
    result = calibrate_tmc_nonlinear(run, options);
  }

  auto opt_int = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
  csv << "\nkey,value\n";
  csv << "method," << to_string(result.method) << '\n';
  csv << "k_ratio," << num(result.k_ratio) << '\n';
  csv << "se_k_ratio," << num(result.se_k_ratio) << '\n';
  csv << "eta1," << num(result.eta1) << '\n';
  csv << "se_eta1," << num(result.se_eta1) << '\n';
  csv << "eta2," << num(result.eta2) << '\n';
  csv << "se_eta2," << num(result.se_eta2) << '\n';
  csv << "n1_hat," << opt_int(result.n1_hat) << '\n';
  csv << "n2_hat," << opt_int(result.n2_hat) << '\n';
  csv << "fit_residual," << num(result.fit_residual) << '\n';
  csv << "degrees_of_freedom," << result.degrees_of_freedom << '\n';
  csv << "points_used," << result.points_used << '\n';
  csv << "degenerate," << (result.degenerate ? "true" : "false") << '\n';
  if (run.truth) {
    csv << "abs_error_eta1," << num(std::abs(result.eta1 - run.truth->eta1)) << '\n';
    csv << "abs_error_eta2," << num(std::abs(result.eta2 - run.truth->eta2)) << '\n';
  }
  write_output(a.out, csv.str());
}

int dispatch(int argc, char** argv) {
  CLI::App app{"Photon-number-resolving detector modelling and calibration"};
  app.name("pnrd");
  app.require_subcommand(1);

  ResponseCurveArgs rc;
  auto* rc_cmd = app.add_subcommand("response-curve", "Mean photocount versus mean photon number");
  rc_cmd->add_option("--eta", rc.eta, "Quantum efficiency")->required();
  rc_cmd->add_option("--n-max-count", rc.max_count, "Saturation count N")->required();
  rc_cmd->add_option("--nbar-min", rc.nbar_min, "Smallest mean photon number");
  rc_cmd->add_option("--nbar-max", rc.nbar_max, "Largest mean photon number");
  rc_cmd->add_option("--points", rc.points, "Number of log-spaced points");
  rc_cmd->add_option("--out", rc.out, "Output CSV (default stdout)");

  VdpCurveArgs vc;
  auto* vc_cmd = app.add_subcommand("vdp-curve", "VDP, NRF and Q for TMC and TWB light");
  vc_cmd->add_option("--eta1", vc.eta1)->required();
  vc_cmd->add_option("--eta2", vc.eta2)->required();
  vc_cmd->add_option("--n1", vc.n1)->required();
  vc_cmd->add_option("--n2", vc.n2)->required();
  vc_cmd->add_option("--nbar-grid", vc.grid, "min:max:points (log) or a comma list");
  vc_cmd->add_option("--out", vc.out);

  QMapArgs qm;
  auto* qm_cmd = app.add_subcommand("q-map", "Q over (nbar, eta) for identical detectors");
  qm_cmd->add_option("--n-max-count", qm.max_count)->required();
  qm_cmd->add_option("--nbar-grid", qm.nbar_grid, "min:max:points (log) or a comma list");
  qm_cmd->add_option("--eta-grid", qm.eta_grid, "min:max:points (linear) or a comma list");
  qm_cmd->add_option("--out", qm.out, "Output CSV; ridge files are written next to it")
      ->required();

  SimulateArgs sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo photocounts against the closed forms");
  sim_cmd->add_option("--source", sim.source)->check(CLI::IsMember({"tmc", "twb"}));
  sim_cmd->add_option("--eta1", sim.eta1)->required();
  sim_cmd->add_option("--eta2", sim.eta2)->required();
  sim_cmd->add_option("--n1", sim.n1)->required();
  sim_cmd->add_option("--n2", sim.n2)->required();
  sim_cmd->add_option("--nbar", sim.nbar);
  sim_cmd->add_option("--trials", sim.trials)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--seed", sim.seed)->envname("PNRD_SEED");
  sim_cmd->add_option("--workers", sim.workers)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--out", sim.out);

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Absolute efficiency calibration on a run");
  cal_cmd->add_option("--method", cal.method)
      ->required()
      ->check(CLI::IsMember({"twb-linear", "tmc-nonlinear"}));
  auto* t1 = cal_cmd->add_option("--true-eta1", cal.eta1);
  auto* t2 = cal_cmd->add_option("--true-eta2", cal.eta2);
  auto* t3 = cal_cmd->add_option("--true-n1", cal.n1);
  auto* t4 = cal_cmd->add_option("--true-n2", cal.n2);
  cal_cmd->add_option("--grid", cal.grid, "Mean photon numbers, min:max:points (log) or a list");
  cal_cmd->add_option("--trials", cal.trials, "Trials per grid point")->check(CLI::PositiveNumber);
  cal_cmd->add_option("--seed", cal.seed)->envname("PNRD_SEED");
  cal_cmd->add_option("--workers", cal.workers)->check(CLI::PositiveNumber);
  cal_cmd->add_flag("--analytic", cal.analytic, "Use exact expected statistics instead of sampling");
  cal_cmd->add_flag("--blind", cal.blind, "Withhold the mean photon numbers from the run");
  cal_cmd->add_flag("--infer-nbar", cal.infer_nbar,
                    "Infer each point's mean photon number from arm 1");
  cal_cmd->add_option("--regime-threshold", cal.regime_threshold);
  cal_cmd->add_option("--run", cal.run_path, "Read the run record from a CSV file")
      ->excludes(t1)
      ->excludes(t2)
      ->excludes(t3)
      ->excludes(t4);
  cal_cmd->add_option("--out", cal.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  if (*rc_cmd) response_curve(rc);
  if (*vc_cmd) vdp_curve(vc);
  if (*qm_cmd) q_map(qm);
  if (*sim_cmd) simulate(sim);
  if (*cal_cmd) calibrate(cal, *t1 && *t2 && *t3 && *t4);
  return kOk;
}

}  // namespace

int run(int argc, char** argv) {
  try {
    std::vector<std::string> args = apply_config({argv + 1, argv + argc});
    std::vector<char*> raw = {argv[0]};
    for (auto& a : args) raw.push_back(a.data());
    return dispatch(static_cast<int>(raw.size()), raw.data());
  } catch (const IoError& e) {
    std::cerr << "pnrd: " << e.what() << '\n';
    return kIo;
  } catch (const InsufficientDataError& e) {
    std::cerr << "pnrd: insufficient data: " << e.what() << '\n';
    return kInsufficientData;
  } catch (const SaturationNotReachedError& e) {
    std::cerr << "pnrd: saturation not reached: " << e.what() << '\n';
    return kSaturationNotReached;
  } catch (const ModelMismatchError& e) {
    std::cerr << "pnrd: model mismatch: " << e.what() << '\n';
    return kModelMismatch;
  } catch (const NonQuantumDataError& e) {
    std::cerr << "pnrd: non-quantum data: " << e.what() << '\n';
    return kNonQuantum;
  } catch (const DomainError& e) {
    std::cerr << "pnrd: " << e.what() << '\n';
    return kUsage;
  } catch (const ValidationError& e) {
    std::cerr << "pnrd: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "pnrd: " << e.what() << '\n';
    return kIo;
  }
}

}  // namespace pnrd::cli
