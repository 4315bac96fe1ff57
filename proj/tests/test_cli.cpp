#include <doctest.h>

#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gridhedge/cli.hpp"
#include "gridhedge/config.hpp"
#include "gridhedge/random.hpp"
#include "gridhedge/scenario.hpp"
#include "gridhedge/stochastic_process.hpp"

namespace fs = std::filesystem;
using namespace gridhedge;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("gridhedge_test_" + std::to_string(splitmix64(reinterpret_cast<std::uintptr_t>(this) ^
                                                          static_cast<std::uint64_t>(std::rand()))));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(path / name) << text;
    return path / name;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string iso_utc(std::time_t t) {
  std::tm utc{};
  gmtime_r(&t, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

std::string case_config(const TempDir& dir, const std::string& extra = "") {
  auto c = case_study_config();
  c.n_paths = 20;
  c.bootstrap_resamples = 100;
  std::ostringstream text;
  write_config(text, c);
  return dir.write("case.cfg", text.str() + extra).string();
}

}  // namespace

TEST_CASE("estimate recovers a synthetic series") {
  TempDir dir;
  const std::vector<GbmParams> params{{0.007, 0.027}};
  const double init[] = {40.0};
  const auto e = simulate_paths(params, CorrelationMatrix::identity(1), init, 20000.0 / 12.0, 20000, 1,
                                8, Measure::Physical);
  std::ostringstream csv;
  csv << "timestamp,power_kw\n";
  for (std::size_t k = 0; k < e.values.size(); ++k) {
    csv << iso_utc(1590969600 + static_cast<std::time_t>(k) * 300) << ',' << e.values[k] << '\n';
  }
  const auto input = dir.write("power.csv", csv.str());
  const auto r = run({"estimate", "--input", input.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("sigma_per_sqrt_h") != std::string::npos);
  std::istringstream lines(r.out);
  std::string key;
  double value = 0.0, sigma = 0.0;
  while (lines >> key >> value) {
    if (key == "sigma_per_sqrt_h") sigma = value;
  }
  CHECK(sigma == doctest::Approx(0.027).epsilon(0.03));

  const auto windowed = run({"estimate", "--input", input.string(), "--window", "10:00-17:00"});
  CHECK(windowed.code == 0);
}

TEST_CASE("estimate input errors exit 2") {
  TempDir dir;
  const auto empty = dir.write("empty.csv", "");
  auto r = run({"estimate", "--input", empty.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("no data rows") != std::string::npos);

  const auto bad = dir.write("bad.csv", "timestamp,power_kw\n2020-06-01T10:00,1\n2020-06-01T10:05,oops\n");
  r = run({"estimate", "--input", bad.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("row 3") != std::string::npos);

  CHECK(run({"estimate"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
}

TEST_CASE("allocate") {
  TempDir dir;
  const auto cfg = case_config(dir);
  auto ces = run({"allocate", "--config", cfg, "--mode", "ces", "--time", "0"});
  REQUIRE(ces.code == 0);
  CHECK(ces.out.find("total: b_hat 23.2134508") != std::string::npos);

  auto tes = run({"allocate", "--config", cfg, "--mode", "tes"});
  REQUIRE(tes.code == 0);
  CHECK(tes.out.find("b        23.1089934") != std::string::npos);
  CHECK(tes.out.find("residual") != std::string::npos);

  auto later = run({"allocate", "--config", cfg, "--mode", "tes", "--time", "3", "--generation", "21,24",
                    "--prev-a", "-0.5,-0.5"});
  CHECK(later.code == 0);

  auto end = run({"allocate", "--config", cfg, "--mode", "ces", "--time", "5"});
  CHECK(end.code == 4);
  CHECK(end.err.find("time out of range") != std::string::npos);
  CHECK(run({"allocate", "--config", cfg, "--mode", "tes", "--time", "0.5"}).code == 4);
  CHECK(run({"--max-nodes", "10", "allocate", "--config", cfg, "--mode", "tes"}).code == 4);
  CHECK(run({"allocate", "--config", cfg, "--mode", "tes", "--generation", "20"}).code == 2);
}

TEST_CASE("allocate reports infeasible calibration with exit 3") {
  TempDir dir;
  std::string text =
      "microgrids = 2\nmu_per_hour = 0, 0\nsigma_per_sqrt_hour = 0.01, 0.1\ncorrelation = 0.99\n"
      "demand_kw = 10, 10\nbattery_unit_kw = 1\ninitial_kw = 10, 10\nhorizon_hours = 5\nrebalance_steps = 5\n";
  const auto cfg = dir.write("bad.cfg", text);
  const auto r = run({"allocate", "--config", cfg.string(), "--mode", "tes"});
  CHECK(r.code == 3);
  CHECK(r.err.find("try dt <=") != std::string::npos);
  CHECK(run({"allocate", "--config", cfg.string(), "--mode", "ces"}).code == 0);
}

TEST_CASE("simulate writes reproducible outputs") {
  TempDir dir;
  const auto cfg = case_config(dir);
  const auto a = (dir.path / "a").string(), b = (dir.path / "b").string();
  REQUIRE(run({"simulate", "--config", cfg, "--seed", "5", "--out", a}).code == 0);
  REQUIRE(run({"simulate", "--config", cfg, "--seed", "5", "--out", b}).code == 0);
  CHECK(slurp(fs::path(a) / "results.csv") == slurp(fs::path(b) / "results.csv"));
  const auto manifest = slurp(fs::path(a) / "manifest.txt");
  CHECK(manifest.find("seed = 5") != std::string::npos);
  CHECK(manifest.find("manifest.output.1 = results.csv") != std::string::npos);

  // The manifest is itself a config that reproduces the run.
  const auto c = (dir.path / "c").string();
  REQUIRE(run({"simulate", "--config", (fs::path(a) / "manifest.txt").string(), "--out", c}).code == 0);
  CHECK(slurp(fs::path(c) / "results.csv") == slurp(fs::path(a) / "results.csv"));

  const auto one = (dir.path / "one").string();
  CHECK(run({"simulate", "--config", cfg, "--paths", "1", "--case-filter", "ge_lt", "--out", one}).code == 0);
  CHECK(slurp(fs::path(one) / "results.csv").find(",ge_lt,") != std::string::npos);
}

TEST_CASE("simulate reports an empty bucket with exit 5") {
  TempDir dir;
  // No drift and a tiny horizon: microgrid 1 starts far above demand, so "lt" never happens.
  std::string text =
      "microgrids = 1\nmu_per_hour = 0\nsigma_per_sqrt_hour = 0.01\ndemand_kw = 10\n"
      "battery_unit_kw = 1\ninitial_kw = 50\nhorizon_hours = 1\nrebalance_steps = 1\n"
      "paths = 2\nbootstrap_resamples = 100\n";
  const auto cfg = dir.write("one.cfg", text);
  const auto r = run({"simulate", "--config", cfg.string(), "--case-filter", "lt",
                      "--out", (dir.path / "x").string()});
  CHECK(r.code == 5);
  CHECK(r.err.find("'lt'") != std::string::npos);
}

TEST_CASE("validate exit codes and mutation check") {
  auto ok = run({"validate", "--suite", "oracle", "--json"});
  CHECK(ok.code == 0);
  CHECK(ok.out.find("\"passed\": true") != std::string::npos);

  auto faulty = run({"validate", "--suite", "oracle", "--inject-fault"});
  CHECK(faulty.code == 1);
  CHECK(faulty.out.find("FAIL 1 ces_closed_form_vs_oracle") != std::string::npos);
  CHECK(faulty.err.find("ces_closed_form_vs_oracle") != std::string::npos);

  CHECK(run({"validate", "--suite", "everything"}).code == 2);
}
