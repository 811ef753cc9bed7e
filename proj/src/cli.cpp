#include "rssa/cli.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rssa/config.hpp"
#include "rssa/experiments.hpp"
#include "rssa/synthesis.hpp"

namespace rssa {
namespace {

namespace fs = std::filesystem;

constexpr double kSafetyTolerance = 1e-6;

/// Files are staged as hidden temporaries and renamed once every one of them
/// has been written, so a failed command leaves the directory untouched.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

  void commit() const {
    std::vector<std::pair<fs::path, fs::path>> staged;
    auto cleanup = [&] {
      std::error_code ec;
      for (const auto& [tmp, dst] : staged) fs::remove(tmp, ec);
    };
    for (const auto& [name, content] : files_) {
      const fs::path dst = dir_ / name;
      const fs::path tmp = dir_ / ("." + name + ".tmp");
      staged.emplace_back(tmp, dst);
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      f << content;
      f.close();
      if (!f) {
        cleanup();
        throw ConfigError("cannot write " + dst.string());
      }
    }
    for (const auto& [tmp, dst] : staged) {
      std::error_code ec;
      fs::rename(tmp, dst, ec);
      if (ec) {
        cleanup();
        throw ConfigError("cannot write " + dst.string() + ": " + ec.message());
      }
    }
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& f : files_) out.push_back((dir_ / f.first).string());
    return out;
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

struct Run {
  KeyValueConfig cfg;
  std::string command;
  std::string robot;
  std::unique_ptr<RobotModel> model;
  SafetyIndexParams index;
  fs::path out_dir;
  std::uint64_t seed = 0;
};

std::vector<int> int_list(const KeyValueConfig& cfg, const std::string& key, std::vector<int> fallback) {
  if (!cfg.has(key)) return fallback;
  std::vector<int> out;
  for (double v : cfg.get_list(key, {})) {
    if (v != std::floor(v)) throw ConfigError("config key '" + key + "': expected integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<int> grid_for(const Run& r, const std::string& key, int per_dim) {
  const std::vector<int> g = int_list(r.cfg, key, std::vector<int>(r.model->n(), per_dim));
  if (static_cast<int>(g.size()) != r.model->n()) {
    throw ConfigError("config key '" + key + "': expected " + std::to_string(r.model->n()) + " counts");
  }
  for (int c : g) {
    if (c < 1) throw ConfigError("config key '" + key + "': counts must be >= 1");
  }
  return g;
}

SafetyIndexParams load_index(const KeyValueConfig& cfg, const std::string& robot) {
  SafetyIndexParams p;
  const std::string which = cfg.get_string("index", "default");
  if (which == "default") {
    p = default_index(robot);
  } else if (which == "phi0") {
    p = {1.0, 0.0, 0.0, 1.0};  // learned branch coincides with phi0
  } else if (which == "hand") {
    p = hand_designed_index();
  } else {
    throw ConfigError("index must be default, phi0 or hand, got '" + which + "'");
  }
  const std::string file = cfg.get_string("params", "");
  if (!file.empty()) {
    const KeyValueConfig pf = KeyValueConfig::load(file);
    p.alpha = pf.get_double("alpha", p.alpha);
    p.k_v = pf.get_double("k_v", p.k_v);
    p.beta = pf.get_double("beta", p.beta);
    p.gamma_slope = pf.get_double("gamma_slope", p.gamma_slope);
  }
  p.alpha = cfg.get_double("alpha", p.alpha);
  p.k_v = cfg.get_double("k_v", p.k_v);
  p.beta = cfg.get_double("beta", p.beta);
  p.gamma_slope = cfg.get_double("gamma_slope", p.gamma_slope);
  if (!(p.alpha > 0.0) || !(p.k_v >= 0.0) || !(p.gamma_slope > 0.0)) {
    throw ConfigError("safety index needs alpha > 0, k_v >= 0, gamma_slope > 0");
  }
  return p;
}

BoundBuilder::Options bound_options(const Run& r) {
  BoundBuilder::Options o;
  o.samples = static_cast<int>(r.cfg.get_int("samples", 50));
  o.seed = r.seed;
  o.confidence = r.cfg.get_double("confidence", 0.95);
  o.d_res = r.cfg.get_double("d_res", -1.0);
  o.analytic_segway = r.robot == "segway" && r.cfg.get_string("analytic_ellipsoid", "true") == "true";
  if (o.samples < 1) throw ConfigError("samples must be >= 1");
  if (!(o.confidence > 0.0 && o.confidence < 1.0)) throw ConfigError("confidence must be in (0, 1)");
  return o;
}

double dt_of(const Run& r) {
  const double dt = r.cfg.get_double("dt", 0.002);
  if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
  return dt;
}

double horizon_of(const Run& r, double fallback) {
  const double h = r.cfg.get_double("horizon", fallback);
  if (!(h > 0.0)) throw ConfigError("horizon must be > 0");
  return h;
}

RssaVariant variant_of(const Run& r) { return parse_variant(r.cfg.get_string("rssa", "polytope")); }

int cmd_synthesize(const Run& r, OutputSet& files, std::ostream& out) {
  const RssaVariant v = variant_of(r);
  if (v != RssaVariant::Polytope && v != RssaVariant::Ellipsoid) {
    throw ConfigError("synthesize needs rssa = polytope or ellipsoid");
  }
  BoundBuilder::Options bo = bound_options(r);
  bo.kind = v == RssaVariant::Polytope ? BoundKind::Polytope : BoundKind::Ellipsoid;
  const BoundBuilder builder(*r.model, bo);

  SynthesisConfig sc;
  sc.grid_counts = grid_for(r, "grid", 12);
  sc.seed = r.seed;
  sc.lipschitz.seed = r.seed;
  sc.lipschitz.probes = static_cast<int>(r.cfg.get_int("lipschitz.probes", sc.lipschitz.probes));
  sc.lipschitz.step = r.cfg.get_double("lipschitz.step", sc.lipschitz.step);
  sc.lipschitz.safety_factor = r.cfg.get_double("lipschitz.safety_factor", sc.lipschitz.safety_factor);
  sc.epsilon_override = r.cfg.get_double("epsilon", sc.epsilon_override);
  sc.population = static_cast<int>(r.cfg.get_int("population", sc.population));
  sc.max_generations = static_cast<int>(r.cfg.get_int("generations", sc.max_generations));
  sc.sigma0 = r.cfg.get_double("sigma0", sc.sigma0);
  sc.gamma_slope = r.cfg.get_double("gamma_slope", sc.gamma_slope);
  if (r.cfg.has("initial_mean")) {
    const auto m = r.cfg.get_list("initial_mean", {});
    if (m.size() != 3) throw ConfigError("initial_mean needs alpha, k_v, beta");
    sc.initial_mean = Eigen::Map<const Vector>(m.data(), 3);
  }
  if (sc.population < 2 || sc.max_generations < 0) throw ConfigError("population >= 2 and generations >= 0");

  const SynthesisResult res = synthesize(sc, *r.model, builder);
  files.add("params.cfg", parameter_file(res.params));
  files.add("synthesis_report.txt", synthesis_report(res, sc, r.robot));
  files.commit();
  char line[160];
  std::snprintf(line, sizeof line, "feasible rate %.6f (alpha %.6g, k_v %.6g, beta %.6g, eps %.6g)\n", res.rate,
                res.params.alpha, res.params.k_v, res.params.beta, res.epsilon);
  out << line;
  if (!res.certified()) {
    out << "no robust safety index certified\n";
    return kExitNotCertified;
  }
  return kExitOk;
}

StateVector start_state(const Run& r) {
  if (r.cfg.has("x0")) {
    const auto v = r.cfg.get_list("x0", {});
    if (static_cast<int>(v.size()) != r.model->n()) throw ConfigError("x0 has the wrong length");
    return Eigen::Map<const Vector>(v.data(), r.model->n());
  }
  if (r.robot == "segway") return StateVector::Zero(r.model->n());
  const long c = r.cfg.get_int("case", 1);
  if (c != 1 && c != 2) throw ConfigError("case must be 1 or 2");
  const auto x = find_start_state(*r.model, r.index, c == 1 ? StartCase::DeepSafe : StartCase::OverApproximated,
                                  grid_for(r, "start_grid", 7));
  if (!x) throw ConfigError("no start state for case " + std::to_string(c) + " on the start grid");
  return *x;
}

int cmd_simulate(const Run& r, OutputSet& files, std::ostream& out) {
  SimulationOptions so;
  so.variant = variant_of(r);
  so.dt = dt_of(r);
  so.steps = std::max(1, static_cast<int>(std::lround(horizon_of(r, 5.0) / so.dt)));
  so.switch_band = r.cfg.get_double("switch_band", so.switch_band);
  const TruncatedGaussian& dist = r.model->parameter_distribution();
  so.true_param = r.cfg.get_double("true_param", r.robot == "scara" ? 0.5 : dist.mean);
  so.bound = variant_bound_options(*r.model, r.index, so.variant, bound_options(r), {});
  const StateVector x0 = start_state(r);

  const TrajectoryLog log = simulate(*r.model, r.index, x0, so);
  const bool matched = so.true_param >= dist.lo && so.true_param <= dist.hi;
  const bool violated = so.variant != RssaVariant::None && matched && log.max_phi0() > kSafetyTolerance;

  nlohmann::json j;
  j["schema"] = "rssa.simulation/1";
  j["robot"] = r.robot;
  j["rssa"] = to_string(so.variant);
  j["seed"] = r.seed;
  j["true_param"] = so.true_param;
  j["dt"] = so.dt;
  j["steps"] = so.steps;
  j["x0"] = std::vector<double>(x0.data(), x0.data() + x0.size());
  j["index"] = {{"alpha", r.index.alpha}, {"k_v", r.index.k_v}, {"beta", r.index.beta},
                {"gamma_slope", r.index.gamma_slope}};
  j["d_res"] = so.bound.d_res;
  j["max_phi0"] = log.max_phi0();
  j["max_phi"] = log.max_phi();
  j["max_audit"] = so.variant == RssaVariant::None ? nlohmann::json() : nlohmann::json(log.max_audit());
  j["fallback_events"] = log.fallback_events;
  j["cumulative_deviation"] = log.cumulative_deviation();
  j["safety_violated"] = violated;
  files.add("trajectory.csv", to_csv(log));
  files.add("summary.json", j.dump(2) + "\n");
  files.commit();

  char line[160];
  std::snprintf(line, sizeof line, "%s: max phi0 %.6g, fallbacks %d, deviation %.6g\n",
                to_string(so.variant).c_str(), log.max_phi0(), log.fallback_events, log.cumulative_deviation());
  out << line;
  if (violated) {
    out << "safety violated under matched uncertainty\n";
    return kExitUnsafe;
  }
  return kExitOk;
}

int cmd_feasmap(const Run& r, OutputSet& files, std::ostream& out) {
  const RssaVariant v = variant_of(r);
  if (v == RssaVariant::None) throw ConfigError("feasmap needs a bound: rssa = polytope, ellipsoid or constant");
  const BoundBuilder builder(*r.model, variant_bound_options(*r.model, r.index, v, bound_options(r), {}));
  const auto cells = int_list(r.cfg, "feasmap.cells", {30, 30});
  if (cells.size() != 2 || cells[0] < 2 || cells[1] < 2) throw ConfigError("feasmap.cells needs two counts >= 2");
  const int velocities = static_cast<int>(r.cfg.get_int("feasmap.velocities", 100));
  if (velocities < 1) throw ConfigError("feasmap.velocities must be >= 1");
  const FeasibilityMap map = feasibility_map(*r.model, r.index, builder, cells[0], cells[1], velocities, r.seed);
  files.add("feasibility_map.json", to_json(map, r.robot, r.cfg.get_string("index", "default")) + "\n");
  files.commit();
  out << "max infeasible fraction " << map.max_value() << "\n";
  return kExitOk;
}

int cmd_fistudy(const Run& r, OutputSet& files, std::ostream& out) {
  ForwardInvarianceOptions fo;
  fo.trials = static_cast<int>(r.cfg.get_int("fistudy.trials", 100));
  fo.dt = dt_of(r);
  fo.horizon = horizon_of(r, 2.0);
  fo.seed = r.seed;
  fo.grid_counts = grid_for(r, "fistudy.grid", 7);
  fo.bound = bound_options(r);
  if (fo.trials < 1) throw ConfigError("fistudy.trials must be >= 1");
  const auto values = r.cfg.get_list("fistudy.values", {1.0, 2.0, 3.0});
  if (values.empty()) throw ConfigError("fistudy.values is empty");
  const auto rows = forward_invariance_study(*r.model, r.index, values, fo);
  files.add("forward_invariance.json", to_json(rows, r.robot) + "\n");
  files.commit();
  for (const auto& row : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "param %.4g: phi_max %.6g, bound %.6g\n", row.true_param, row.phi_max,
                  row.bound);
    out << line;
  }
  return kExitOk;
}

int cmd_bench(const Run& r, OutputSet& files, std::ostream& out) {
  const auto* segway = dynamic_cast<const SegwayModel*>(r.model.get());
  if (segway == nullptr) throw ConfigError("bench runs on robot = segway only");
  const auto counts = int_list(r.cfg, "bench.counts", {10, 50, 100, 500});
  const int repeats = static_cast<int>(r.cfg.get_int("bench.repeats", 10));
  const int batch = static_cast<int>(r.cfg.get_int("bench.batch", 20));
  if (counts.empty() || repeats < 10 || batch < 1) {
    throw ConfigError("bench needs counts, repeats >= 10 and batch >= 1");
  }
  for (int c : counts) {
    if (c < 1) throw ConfigError("bench.counts must be >= 1");
  }
  const auto rows = timing_bench(*segway, r.index, counts, repeats, batch, r.seed);
  files.add("timing.json", to_json(rows, r.robot) + "\n");
  files.commit();
  for (const auto& row : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-9s %5d samples: %.2f us (sd %.2f)\n", row.variant.c_str(), row.samples,
                  row.mean_us, row.sd_us);
    out << line;
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robust safe control with learned safety indices"};
  app.require_subcommand(1);
  app.fallthrough();

  // Flag values stay strings here and are merged into the config, so the
  // same parsing and validation applies to both sources.
  const std::vector<std::pair<std::string, std::string>> flags = {
      {"robot", "scara, segway or pointmass"},
      {"rssa", "none, polytope, ellipsoid or constant"},
      {"seed", "seed of every random draw"},
      {"out", "existing output directory"},
      {"confidence", "ellipsoid confidence level in (0, 1)"},
      {"samples", "dynamics samples per bound"},
      {"dt", "integration step [s]"},
      {"horizon", "simulated time [s]"},
  };
  std::map<std::string, std::string> flag_values;
  for (const auto& [name, help] : flags) app.add_option("--" + name, flag_values[name], help);
  std::string config_path;
  app.add_option("--config", config_path, "key = value config file");
  std::vector<std::string> sets;
  app.add_option("--set", sets, "extra KEY=VALUE setting (repeatable)");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synthesize", "search for a robust safety index and certify it on a state grid"},
      {"simulate", "closed-loop run with a safety filter; writes trajectory.csv"},
      {"feasmap", "infeasible fraction over joint positions; writes feasibility_map.json"},
      {"fistudy", "forward invariance under unmodeled parameters; writes forward_invariance.json"},
      {"bench", "per-step cost of the Segway filters; writes timing.json"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  Run r;
  try {
    if (!config_path.empty()) r.cfg = KeyValueConfig::load(config_path);
    for (const auto& [name, help] : flags) {
      if (app.get_option("--" + name)->count() > 0) r.cfg.set(name, flag_values[name]);
    }
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
      r.cfg.set(s.substr(0, eq), s.substr(eq + 1));
    }
    r.command = app.get_subcommands().front()->get_name();
    r.robot = r.cfg.get_string("robot", "scara");
    r.model = make_robot(r.robot, r.cfg);
    r.index = load_index(r.cfg, r.robot);
    const long seed = r.cfg.get_int("seed", 0);
    if (seed < 0) throw ConfigError("seed must be >= 0");
    r.seed = static_cast<std::uint64_t>(seed);
    r.out_dir = r.cfg.get_string("out", ".");
    if (!fs::is_directory(r.out_dir)) throw ConfigError("output directory does not exist: " + r.out_dir.string());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  OutputSet files(r.out_dir);
  try {
    int code = kExitOk;
    if (r.command == "synthesize") code = cmd_synthesize(r, files, out);
    if (r.command == "simulate") code = cmd_simulate(r, files, out);
    if (r.command == "feasmap") code = cmd_feasmap(r, files, out);
    if (r.command == "fistudy") code = cmd_fistudy(r, files, out);
    if (r.command == "bench") code = cmd_bench(r, files, out);
    for (const auto& f : files.names()) out << "wrote " << f << "\n";
    return code;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace rssa
