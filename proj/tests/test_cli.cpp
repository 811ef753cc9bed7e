#include "check.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "json.hpp"
#include "rssa/cli.hpp"
#include "rssa/experiments.hpp"

namespace fs = std::filesystem;
using namespace rssa;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "rssa");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

class Cli {
 public:
  Cli() {
    static int counter = 0;
    dir_ = fs::temp_directory_path() / ("rssa_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Cli() {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

 protected:
  std::string out() const { return dir_.string(); }
  std::size_t entries() const {
    return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir_), fs::directory_iterator()));
  }

  fs::path dir_;
};

}  // namespace

TEST_CASE_FIXTURE(Cli, "Cli: MissingOutputDirectoryIsConfigError") {
  const fs::path missing = dir_ / "nope";
  const Result r = run({"simulate", "--out", missing.string(), "--horizon", "0.01"});
  CHECK_EQ(r.code, kExitConfig);
  CHECK_UNARY_FALSE(fs::exists(missing));
  CHECK_NE(r.err.find("output directory"), std::string::npos);
}

TEST_CASE_FIXTURE(Cli, "Cli: InvalidSettingsWriteNothing") {
  for (const std::vector<std::string>& args : {
           std::vector<std::string>{"simulate", "--out", out(), "--dt", "-1"},
           std::vector<std::string>{"simulate", "--out", out(), "--confidence", "1.5"},
           std::vector<std::string>{"simulate", "--out", out(), "--samples", "0"},
           std::vector<std::string>{"simulate", "--out", out(), "--robot", "hexapod"},
           std::vector<std::string>{"simulate", "--out", out(), "--rssa", "sos"},
           std::vector<std::string>{"simulate", "--out", out(), "--seed", "x"},
           std::vector<std::string>{"simulate", "--out", out(), "--config", (dir_ / "absent.cfg").string()},
           std::vector<std::string>{"bench", "--out", out(), "--robot", "scara"},
           std::vector<std::string>{"teleport", "--out", out()},
       }) {
    const Result r = run(args);
    {
    INFO(args[0] << " " << args[args.size() - 2] << " " << args.back());
    CHECK_EQ(r.code, kExitConfig);
  }
  }
  CHECK_EQ(entries(), 0u);
}

TEST_CASE_FIXTURE(Cli, "Cli: SimulateWritesDocumentedCsvAndSummary") {
  const Result r = run({"simulate", "--out", out(), "--horizon", "0.2", "--seed", "3"});
  {
    INFO(r.err);
    REQUIRE_EQ(r.code, kExitOk);
  }
  std::istringstream csv(slurp(dir_ / "trajectory.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK_EQ(line, trajectory_csv_header(4, 2));
  int rows = 0;
  while (std::getline(csv, line)) {
    ++rows;
    // phi0 column stays non-positive under the polytope filter.
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    REQUIRE_EQ(cells.size(), 16u);
    CHECK_LE(std::stod(cells[9]), 0.0);
  }
  CHECK_EQ(rows, 100);
  const auto j = nlohmann::json::parse(slurp(dir_ / "summary.json"));
  CHECK_EQ(j["schema"], "rssa.simulation/1");
  CHECK_EQ(j["steps"], 100);
  CHECK_UNARY_FALSE(j["safety_violated"].get<bool>());
  CHECK_EQ(entries(), 2u);  // no staging files left behind
}

TEST_CASE_FIXTURE(Cli, "Cli: SimulateIsDeterministic") {
  const std::vector<std::string> args = {"simulate", "--out", out(), "--rssa", "ellipsoid", "--horizon", "0.1",
                                         "--set", "case=2", "--seed", "9"};
  REQUIRE_EQ(run(args).code, kExitOk);
  const std::string first = slurp(dir_ / "trajectory.csv");
  REQUIRE_EQ(run(args).code, kExitOk);
  CHECK_EQ(slurp(dir_ / "trajectory.csv"), first);
}

TEST_CASE_FIXTURE(Cli, "Cli: FlagsOverrideFileOverridesDefaults") {
  const fs::path cfg = dir_ / "run.cfg";
  {
    std::ofstream f(cfg);
    f << "# test config\nrobot = pointmass\ndt = 0.01\nhorizon = 0.05\n";
  }
  const std::string before = slurp(cfg);
  REQUIRE_EQ(run({"simulate", "--config", cfg.string(), "--out", out()}).code, kExitOk);
  auto j = nlohmann::json::parse(slurp(dir_ / "summary.json"));
  CHECK_EQ(j["robot"], "pointmass");
  CHECK_DOUBLE_EQ(j["dt"].get<double>(), 0.01);
  CHECK_EQ(j["steps"], 5);
  REQUIRE_EQ(run({"simulate", "--config", cfg.string(), "--out", out(), "--dt", "0.005"}).code, kExitOk);
  j = nlohmann::json::parse(slurp(dir_ / "summary.json"));
  CHECK_DOUBLE_EQ(j["dt"].get<double>(), 0.005);
  CHECK_EQ(j["steps"], 10);
  REQUIRE_EQ(run({"simulate", "--out", out(), "--horizon", "0.01"}).code, kExitOk);
  j = nlohmann::json::parse(slurp(dir_ / "summary.json"));
  CHECK_EQ(j["robot"], "scara");
  CHECK_DOUBLE_EQ(j["dt"].get<double>(), 0.002);
  CHECK_EQ(slurp(cfg), before);
}

TEST_CASE_FIXTURE(Cli, "Cli: SimulateFlagsUnsafeRunUnderMatchedUncertainty") {
  const Result r = run({"simulate", "--out", out(), "--rssa", "constant", "--set", "case=2"});
  CHECK_EQ(r.code, kExitUnsafe);
  CHECK_UNARY(nlohmann::json::parse(slurp(dir_ / "summary.json"))["safety_violated"].get<bool>());
  // Outside the modeled support the guard does not apply.
  CHECK_EQ(run({"simulate", "--out", out(), "--rssa", "constant", "--set", "case=2", "--set", "true_param=2.5",
                 "--horizon", "0.5"})
                .code,
            kExitOk);
}

TEST_CASE_FIXTURE(Cli, "Cli: SynthesizeToyCertifiesAndReportIsReproducible") {
  const std::vector<std::string> args = {"synthesize", "--robot", "pointmass", "--out", out(), "--set",
                                         "grid=41,41", "--set", "initial_mean=1,0.5,0.9"};
  const Result r = run(args);
  {
    INFO(r.err);
    REQUIRE_EQ(r.code, kExitOk);
  }
  const std::string report = slurp(dir_ / "synthesis_report.txt");
  CHECK_NE(report.find("certified = true"), std::string::npos);
  REQUIRE_EQ(run(args).code, kExitOk);
  CHECK_EQ(slurp(dir_ / "synthesis_report.txt"), report);

  // The parameter file feeds back into simulate.
  const Result s = run({"simulate", "--robot", "pointmass", "--out", out(), "--horizon", "0.1", "--set",
                        "params=" + (dir_ / "params.cfg").string()});
  {
    INFO(s.err);
    REQUIRE_EQ(s.code, kExitOk);
  }
  const auto j = nlohmann::json::parse(slurp(dir_ / "summary.json"));
  CHECK_DOUBLE_EQ(j["index"]["beta"].get<double>(), 0.9);
}

TEST_CASE_FIXTURE(Cli, "Cli: SynthesizeUncertifiedExitsTwo") {
  const Result r = run({"synthesize", "--robot", "pointmass", "--out", out(), "--set", "grid=5,5", "--set",
                        "epsilon=1e9", "--set", "generations=1", "--set", "population=4"});
  CHECK_EQ(r.code, kExitNotCertified);
  CHECK_NE(r.out.find("feasible rate 0"), std::string::npos);
  CHECK_UNARY(fs::exists(dir_ / "synthesis_report.txt"));
}

TEST_CASE_FIXTURE(Cli, "Cli: StudiesWriteSchemaTaggedJson") {
  REQUIRE_EQ(run({"feasmap", "--out", out(), "--samples", "10", "--set", "feasmap.cells=4,4", "--set",
                 "feasmap.velocities=3"})
                .code,
            kExitOk);
  CHECK_EQ(nlohmann::json::parse(slurp(dir_ / "feasibility_map.json"))["schema"], "rssa.feasibility_map/1");

  REQUIRE_EQ(run({"fistudy", "--out", out(), "--samples", "10", "--horizon", "0.05", "--set", "fistudy.trials=2",
                 "--set", "fistudy.values=2.0", "--set", "fistudy.grid=3,3,3,3"})
                .code,
            kExitOk);
  const auto fi = nlohmann::json::parse(slurp(dir_ / "forward_invariance.json"));
  CHECK_EQ(fi["schema"], "rssa.forward_invariance/1");
  CHECK_LE(fi["rows"][0]["phi_max"].get<double>(), fi["rows"][0]["theoretical_bound"].get<double>());

  REQUIRE_EQ(run({"bench", "--robot", "segway", "--out", out(), "--set", "bench.counts=10,20", "--set",
                 "bench.batch=1"})
                .code,
            kExitOk);
  CHECK_EQ(nlohmann::json::parse(slurp(dir_ / "timing.json"))["rows"].size(), 4u);
}

TEST_CASE_FIXTURE(Cli, "Cli: HelpExitsZero") {
  const Result r = run({"--help"});
  CHECK_EQ(r.code, kExitOk);
  CHECK_NE(r.out.find("synthesize"), std::string::npos);
}
