#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + std::string(PNRD_CLI_PATH) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n = 0;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    FAIL("missing column " << name);
    return 0;
  }
  double at(std::size_t row, const std::string& name) const { return rows.at(row)[col(name)]; }
};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) cells.push_back(cell);
  return cells;
}

// Numeric CSV up to the first blank line.
Table parse_csv(const std::string& text) {
  Table t;
  std::stringstream in(text);
  std::string line;
  if (std::getline(in, line)) t.header = split(line);
  while (std::getline(in, line) && !line.empty()) {
    std::vector<double> row;
    for (const auto& cell : split(line)) row.push_back(std::strtod(cell.c_str(), nullptr));
    t.rows.push_back(row);
  }
  return t;
}

// key,value block after the blank line of a calibrate report.
std::map<std::string, std::string> result_block(const std::string& text) {
  std::map<std::string, std::string> out;
  const auto pos = text.find("\nkey,value\n");
  REQUIRE(pos != std::string::npos);
  std::stringstream in(text.substr(pos + 11));
  for (std::string line; std::getline(in, line);) {
    const auto cells = split(line);
    if (cells.size() == 2) out[cells[0]] = cells[1];
  }
  return out;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("pnrd_cli_" + std::to_string(getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("response-curve") {
  for (int cap : {1, 2, 3, 5, 10}) {
    const auto r = run("response-curve --eta 0.5 --n-max-count " + std::to_string(cap) +
                       " --nbar-min 0.001 --nbar-max 200 --points 60");
    REQUIRE(r.code == 0);
    const auto t = parse_csv(r.out);
    CHECK(t.header == std::vector<std::string>{"nbar", "mean_count", "no_saturation_reference"});
    REQUIRE(t.rows.size() == 60);
    CHECK(std::abs(t.at(59, "mean_count") - cap) < 1e-6);
    CHECK(t.at(59, "no_saturation_reference") == doctest::Approx(100.0));
    // initial slope
    CHECK(t.at(0, "mean_count") / t.at(0, "nbar") == doctest::Approx(0.5).epsilon(0.01));
  }
  const auto dark = parse_csv(run("response-curve --eta 0 --n-max-count 3 --points 10").out);
  for (std::size_t i = 0; i < dark.rows.size(); ++i) CHECK(dark.at(i, "mean_count") == 0.0);
}

TEST_CASE("vdp-curve") {
  const auto r = run("vdp-curve --eta1 0.5 --eta2 0.5 --n1 3 --n2 3 --nbar-grid 0.01:300:40");
  REQUIRE(r.code == 0);
  const auto t = parse_csv(r.out);
  CHECK(t.header.size() == 6);
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    CHECK(t.at(i, "q") == doctest::Approx(t.at(i, "vdp_tmc") - t.at(i, "vdp_twb")));
    CHECK(t.at(i, "vdp_twb") <= t.at(i, "vdp_tmc") + 1e-12);
  }
  CHECK(t.at(39, "vdp_tmc") < 1e-8);
  CHECK(t.at(39, "vdp_twb") < 1e-8);

  const auto perfect =
      parse_csv(run("vdp-curve --eta1 1 --eta2 1 --n1 1000 --n2 1000 --nbar-grid 0.1,1,10,100").out);
  for (std::size_t i = 0; i < perfect.rows.size(); ++i) CHECK(perfect.at(i, "vdp_twb") < 1e-8);

  CHECK(run("vdp-curve --eta1 1.5 --eta2 1 --n1 3 --n2 3").code == 2);
  CHECK(run("vdp-curve --eta1 0.5 --eta2 0.5 --n1 3").code == 2);
}

TEST_CASE("q-map and ridge files") {
  TempDir tmp;
  const auto out = tmp.path / "q.csv";
  const auto r =
      run("q-map --n-max-count 3 --nbar-grid 0.05:40:40 --eta-grid 0:1:21 --out " + out.string());
  REQUIRE(r.code == 0);
  const auto map = parse_csv(slurp(out));
  REQUIRE(map.rows.size() == 40 * 21);

  double best = -1.0;
  double best_eta = 0.0;
  double best_nbar = 0.0;
  for (std::size_t i = 0; i < map.rows.size(); ++i) {
    if (map.at(i, "eta") == 0.0) CHECK(map.at(i, "q") == 0.0);
    if (map.at(i, "q") > best) {
      best = map.at(i, "q");
      best_eta = map.at(i, "eta");
      best_nbar = map.at(i, "nbar");
    }
  }
  // interior global maximum
  CHECK(best > 0.0);
  CHECK(best_nbar > 0.05);
  CHECK(best_nbar < 40.0);
  CHECK(best_eta > 0.0);

  const auto by_eta = parse_csv(slurp(tmp.path / "q_ridge_nbar.csv"));
  const auto by_nbar = parse_csv(slurp(tmp.path / "q_ridge_eta.csv"));
  CHECK(by_eta.header == std::vector<std::string>{"eta", "optimal_nbar", "q"});
  CHECK(by_nbar.header == std::vector<std::string>{"nbar", "optimal_eta", "q"});
  REQUIRE(by_eta.rows.size() == 21);
  REQUIRE(by_nbar.rows.size() == 40);
  // Each ridge point is the maximum of its row or column of the map.
  for (std::size_t r2 = 0; r2 < by_nbar.rows.size(); ++r2) {
    const double nbar = by_nbar.at(r2, "nbar");
    for (std::size_t i = 0; i < map.rows.size(); ++i) {
      if (map.at(i, "nbar") == nbar) CHECK(map.at(i, "q") <= by_nbar.at(r2, "q"));
    }
  }
  for (std::size_t r2 = 1; r2 < by_eta.rows.size(); ++r2) {
    const double eta = by_eta.at(r2, "eta");
    for (std::size_t i = 0; i < map.rows.size(); ++i) {
      if (map.at(i, "eta") == eta) CHECK(map.at(i, "q") <= by_eta.at(r2, "q"));
    }
  }

  CHECK(run("q-map --n-max-count 3 --out /nonexistent_dir/q.csv").code == 1);
  CHECK(run("q-map --n-max-count 3").code == 2);
}

TEST_CASE("simulate") {
  const std::string args =
      "simulate --source tmc --eta1 0.6 --eta2 0.4 --n1 3 --n2 5 --nbar 2 --trials 200000 --seed 9";
  const auto a = run(args);
  const auto b = run(args);
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(run(args + " --seed 10").out != a.out);

  const auto full = run("simulate --source twb --eta1 0.7 --eta2 0.5 --n1 3 --n2 3 --nbar 1.5 --seed 1");
  REQUIRE(full.code == 0);
  const auto t = parse_csv(full.out);
  REQUIRE(t.rows.size() == 1);
  CHECK(t.at(0, "trials") == 1000000);
  for (const auto& name : t.header) {
    if (name.rfind("z_", 0) == 0) CHECK(std::abs(t.at(0, name)) < 5.0);
  }

  CHECK(run("simulate --eta1 0.5 --eta2 0.5 --n1 3 --n2 3 --trials 0").code == 2);
  CHECK(run("simulate --source xyz --eta1 0.5 --eta2 0.5 --n1 3 --n2 3").code == 2);
}

TEST_CASE("seed from the environment and config files") {
  TempDir tmp;
  const std::string base = "simulate --eta1 0.5 --eta2 0.5 --n1 2 --n2 2 --trials 20000";
  const auto seeded = run(base + " --seed 31");
  REQUIRE(seeded.code == 0);
  CHECK(run(base, "PNRD_SEED=31").out == seeded.out);
  CHECK(run(base + " --seed 31", "PNRD_SEED=5").out == seeded.out);
  CHECK(run(base, "PNRD_SEED=5").out != seeded.out);

  const auto cfg = tmp.path / "sim.conf";
  std::ofstream(cfg) << "# simulation defaults\n"
                        "eta1 = 0.5\neta2=0.5\nn1=2\nn2=2\n"
                        "trials=20000  # per run\nseed=77\n";
  const auto from_file = run("simulate --config " + cfg.string() + " --seed 31");
  REQUIRE(from_file.code == 0);
  CHECK(from_file.out == seeded.out);  // flags win over the file
  CHECK(run("simulate --config " + cfg.string()).out != seeded.out);
  CHECK(run("simulate --config " + (tmp.path / "missing.conf").string()).code == 1);
}

TEST_CASE("calibrate") {
  const auto twb = run(
      "calibrate --method twb-linear --true-eta1 0.6 --true-eta2 0.4 --true-n1 10 --true-n2 10 "
      "--grid 0.05,0.1,0.2,0.5,1,2,5,20,50,100 --trials 1000000 --seed 3 --workers 2");
  REQUIRE(twb.code == 0);
  const auto run_table = parse_csv(twb.out);
  CHECK(run_table.rows.size() == 10);
  CHECK(run_table.header.front() == "pump_setting");
  auto res = result_block(twb.out);
  CHECK(res.at("method") == "twb-linear");
  CHECK(std::stod(res.at("abs_error_eta1")) <= 0.02);
  CHECK(std::stod(res.at("abs_error_eta2")) <= 0.02);

  const auto tmc = run(
      "calibrate --method tmc-nonlinear --true-eta1 0.7 --true-eta2 0.5 --true-n1 3 --true-n2 3 "
      "--trials 100000 --seed 4");
  REQUIRE(tmc.code == 0);
  res = result_block(tmc.out);
  CHECK(res.at("n1_hat") == "3");
  CHECK(res.at("n2_hat") == "3");
  CHECK(std::stod(res.at("abs_error_eta1")) <= 0.02);

  SUBCASE("rerun from a saved run record") {
    TempDir tmp;
    const auto saved = tmp.path / "run.csv";
    std::ofstream(saved) << tmc.out;
    const auto again = run("calibrate --method tmc-nonlinear --run " + saved.string());
    REQUIRE(again.code == 0);
    const auto block = result_block(again.out);
    CHECK(block.at("eta1") == res.at("eta1"));
    CHECK(block.count("abs_error_eta1") == 0);
  }

  SUBCASE("protocol errors map to exit codes") {
    const std::string truth = " --true-eta1 0.5 --true-eta2 0.5 --true-n1 3 --true-n2 3";
    CHECK(run("calibrate --method twb-linear" + truth + " --grid 30,40,50 --analytic").code == 3);
    CHECK(run("calibrate --method tmc-nonlinear" + truth + " --grid 0.5,1,2 --analytic").code == 4);
    CHECK(run("calibrate --method tmc-nonlinear --true-eta1 0.5 --true-eta2 0.5").code == 2);
    CHECK(run("calibrate --true-eta1 0.5 --true-eta2 0.5 --true-n1 3 --true-n2 3").code == 2);
    CHECK(run("calibrate --method klyshko" + truth).code == 2);
  }
}

TEST_CASE("usage") {
  CHECK(run("").code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("--help").code == 0);
}
