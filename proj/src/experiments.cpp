#include "rssa/experiments.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "rssa/config.hpp"

namespace rssa {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void put(std::ostringstream& o, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  o << buf;
}

double nan_max(const std::vector<double>& v) {
  double out = -std::numeric_limits<double>::infinity();
  for (double d : v) {
    if (!std::isnan(d)) out = std::max(out, d);
  }
  return out;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

BoundKind kind_of(RssaVariant v) {
  switch (v) {
    case RssaVariant::Ellipsoid:
      return BoundKind::Ellipsoid;
    case RssaVariant::Constant:
      return BoundKind::Constant;
    default:
      return BoundKind::Polytope;
  }
}

}  // namespace

std::string to_string(RssaVariant v) {
  switch (v) {
    case RssaVariant::None:
      return "none";
    case RssaVariant::Polytope:
      return "polytope";
    case RssaVariant::Ellipsoid:
      return "ellipsoid";
    case RssaVariant::Constant:
      return "constant";
  }
  return "?";
}

RssaVariant parse_variant(const std::string& name) {
  if (name == "none") return RssaVariant::None;
  if (name == "polytope") return RssaVariant::Polytope;
  if (name == "ellipsoid") return RssaVariant::Ellipsoid;
  if (name == "constant") return RssaVariant::Constant;
  throw ConfigError("unknown rssa variant '" + name + "' (expected polytope, ellipsoid, constant or none)");
}

StateVector rk4_step(const RobotModel& model, const StateVector& x, const ControlVector& u, double param,
                     double dt) {
  auto f = [&](const StateVector& s) { return model.dynamics(s, param).xdot(u); };
  const Vector k1 = f(x);
  const Vector k2 = f(x + 0.5 * dt * k1);
  const Vector k3 = f(x + 0.5 * dt * k2);
  const Vector k4 = f(x + dt * k3);
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

double TrajectoryLog::max_phi0() const { return nan_max(phi0); }
double TrajectoryLog::max_phi() const { return nan_max(phi); }
double TrajectoryLog::max_audit() const { return nan_max(audit); }

double TrajectoryLog::cumulative_deviation() const {
  double s = 0.0;
  for (std::size_t k = 0; k < size(); ++k) {
    const double dt = k + 1 < size() ? t[k + 1] - t[k] : (k > 0 ? t[k] - t[k - 1] : 0.0);
    s += (u[k] - u_ref[k]).norm() * dt;
  }
  return s;
}

std::string trajectory_csv_header(int n, int m) {
  std::ostringstream o;
  o << "t";
  for (int i = 0; i < n; ++i) o << ",x" << i;
  for (int j = 0; j < m; ++j) o << ",u_ref" << j;
  for (int j = 0; j < m; ++j) o << ",u" << j;
  o << ",phi0,phi,phidot_gamma,audit,status,fallback,in_box";
  return o.str();
}

std::string to_csv(const TrajectoryLog& log) {
  const int n = log.size() ? static_cast<int>(log.x[0].size()) : 0;
  const int m = log.size() ? static_cast<int>(log.u[0].size()) : 0;
  std::ostringstream o;
  o << trajectory_csv_header(n, m) << "\n";
  for (std::size_t k = 0; k < log.size(); ++k) {
    std::vector<double> row{log.t[k]};
    for (int i = 0; i < n; ++i) row.push_back(log.x[k](i));
    for (int j = 0; j < m; ++j) row.push_back(log.u_ref[k](j));
    for (int j = 0; j < m; ++j) row.push_back(log.u[k](j));
    for (double v : {log.phi0[k], log.phi[k], log.phidot_gamma[k], log.audit[k]}) row.push_back(v);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) o << ",";
      put(o, row[c]);
    }
    o << "," << to_string(log.status[k]) << "," << int(log.fallback[k]) << "," << int(log.in_box[k]) << "\n";
  }
  return o.str();
}

BoundBuilder::Options variant_bound_options(const RobotModel& model, const SafetyIndexParams& params,
                                            RssaVariant v, BoundBuilder::Options base,
                                            const std::vector<StateVector>& residual_states) {
  base.kind = kind_of(v);
  if (v == RssaVariant::Constant && base.d_res < 0.0) {
    const std::vector<double> ps = BoundBuilder(model, base).parameter_samples();
    std::vector<StateVector> states = residual_states;
    if (states.empty()) states = sample_state_grid(model, std::vector<int>(model.n(), 5)).states;
    base.d_res = estimate_constant_residual_bound(model, params, ps, states, model.control_box());
  }
  return base;
}

TrajectoryLog simulate(const RobotModel& model, const SafetyIndexParams& params, const StateVector& x0,
                       const SimulationOptions& opt) {
  if (!(opt.dt > 0.0)) throw std::invalid_argument("simulate: dt must be > 0");
  if (opt.steps < 1) throw std::invalid_argument("simulate: steps must be >= 1");
  const bool filtered = opt.variant != RssaVariant::None;
  BoundBuilder::Options bo = opt.bound;
  bo.kind = kind_of(opt.variant);
  if (filtered && bo.kind == BoundKind::Constant && bo.d_res < 0.0) {
    throw std::invalid_argument("simulate: constant variant needs d_res (see variant_bound_options)");
  }
  const BoundBuilder builder(model, bo);
  const Box& box = model.control_box();

  TrajectoryLog log;
  StateVector x = x0;
  for (int k = 0; k < opt.steps; ++k) {
    const ControlVector u_ref = model.reference_control(x);
    const PhiEvaluation pe = evaluate_phi(params, model, x);
    ControlVector u;
    SolveStatus status = SolveStatus::Optimal;
    bool fallback = false;
    double audit = kNaN;
    if (filtered) {
      const LieDerivativeBounds lie = filter_lie_bounds(builder.build(x), params, model, x, opt.switch_band);
      const RobustControlResult r = solve_lie(lie, u_ref, box, opt.rssa);
      status = r.status;
      if (r.status == SolveStatus::Optimal) {
        u = r.u;
      } else {
        u = safest_control(lie, box);
        fallback = true;
        ++log.fallback_events;
        spdlog::debug("simulate: t = {:.4f} {} -> fallback control", k * opt.dt, to_string(r.status));
      }
      audit = worst_case_margin(lie, u);
    } else {
      u = u_ref.cwiseMax(box.lower).cwiseMin(box.upper);
    }
    const DynamicsSample truth = model.dynamics(x, opt.true_param);
    log.t.push_back(k * opt.dt);
    log.x.push_back(x);
    log.u_ref.push_back(u_ref);
    log.u.push_back(u);
    log.phi0.push_back(phi0(model, x));
    log.phi.push_back(pe.value);
    log.phidot_gamma.push_back(pe.grad.dot(truth.xdot(u)) + gamma(params, pe.value));
    log.audit.push_back(audit);
    log.status.push_back(status);
    log.fallback.push_back(fallback ? 1 : 0);
    log.in_box.push_back(model.state_box().contains(x) ? 1 : 0);
    x = rk4_step(model, x, u, opt.true_param, opt.dt);
  }
  if (log.fallback_events > 0) {
    spdlog::info("simulate: {} fallback step(s) out of {}", log.fallback_events, opt.steps);
  }
  return log;
}

std::optional<StateVector> find_start_state(const RobotModel& model, const SafetyIndexParams& params,
                                            StartCase c, const std::vector<int>& grid_counts) {
  const StateGrid grid = sample_state_grid(model, grid_counts);
  const double nominal = model.nominal_parameter();
  std::optional<StateVector> best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& x : grid.states) {
    const double p = phi(params, model, x);
    const double p0 = phi0(model, x);
    const bool ok = c == StartCase::DeepSafe ? p < 0.0 : (p > 0.0 && p0 < 0.0);
    if (!ok) continue;
    const Vector xdot = model.dynamics(x, nominal).xdot(model.reference_control(x));
    const double score = grad_phi0(model, x).dot(xdot);
    if (score > best_score) {
      best_score = score;
      best = x;
    }
  }
  return best;
}

double FeasibilityMap::max_value() const {
  double out = -std::numeric_limits<double>::infinity();
  for (const auto& row : value) out = std::max(out, nan_max(row));
  return out;
}

double FeasibilityMap::min_value() const {
  double out = std::numeric_limits<double>::infinity();
  for (const auto& row : value) {
    for (double v : row) {
      if (!std::isnan(v)) out = std::min(out, v);
    }
  }
  return out;
}

FeasibilityMap feasibility_map(const RobotModel& model, const SafetyIndexParams& params,
                               const BoundBuilder& builder, int cells0, int cells1, int velocity_samples,
                               std::uint64_t seed) {
  if (cells0 < 2 || cells1 < 2 || velocity_samples < 1 || model.n() < 2) {
    throw std::invalid_argument("feasibility_map: need >= 2 cells per axis and >= 1 velocity sample");
  }
  const Box& sb = model.state_box();
  FeasibilityMap map;
  map.velocity_samples = velocity_samples;
  for (int i = 0; i < cells0; ++i) map.axis0.push_back(sb.lower(0) + i * sb.width()(0) / (cells0 - 1));
  for (int j = 0; j < cells1; ++j) map.axis1.push_back(sb.lower(1) + j * sb.width()(1) / (cells1 - 1));
  map.value.assign(cells0, std::vector<double>(cells1, kNaN));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < cells0; ++i) {
    for (int j = 0; j < cells1; ++j) {
      auto rng = stream(seed, static_cast<std::uint64_t>(i) * cells1 + j);
      int admissible = 0, infeasible = 0;
      for (int s = 0; s < velocity_samples; ++s) {
        StateVector x(model.n());
        x(0) = map.axis0[i];
        x(1) = map.axis1[j];
        for (int d = 2; d < model.n(); ++d) x(d) = sb.lower(d) + unit(rng) * sb.width()(d);
        if (!model.admissible(x)) continue;
        ++admissible;
        if (!is_feasible(model, x, params, builder.build(x), model.control_box(), 0.0)) ++infeasible;
      }
      if (admissible > 0) map.value[i][j] = static_cast<double>(infeasible) / admissible;
    }
  }
  return map;
}

std::vector<ForwardInvarianceRow> forward_invariance_study(const RobotModel& model,
                                                           const SafetyIndexParams& params,
                                                           const std::vector<double>& true_values,
                                                           const ForwardInvarianceOptions& opt) {
  if (!(opt.horizon > 0.0) || !(opt.dt > 0.0)) {
    throw std::invalid_argument("forward_invariance_study: horizon and dt must be > 0");
  }
  if (opt.trials < 1) throw std::invalid_argument("forward_invariance_study: trials must be >= 1");
  BoundBuilder::Options bo = opt.bound;
  bo.kind = BoundKind::Polytope;
  const BoundBuilder builder(model, bo);
  const auto& ps = builder.parameter_samples();
  const double lo = *std::min_element(ps.begin(), ps.end());
  const double hi = *std::max_element(ps.begin(), ps.end());
  const std::vector<int> counts = opt.grid_counts.empty() ? std::vector<int>(model.n(), 7) : opt.grid_counts;
  const StateGrid grid = sample_state_grid(model, counts);
  const auto corners = model.control_box().corners();

  double k_phi = 0.0;
  for (const auto& x : grid.states) k_phi = std::max(k_phi, evaluate_phi(params, model, x).grad.norm());

  // Starts depend only on (seed, trial), so every parameter value sees the same ones.
  std::vector<StateVector> starts;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Box& sb = model.state_box();
  for (int t = 0; t < opt.trials; ++t) {
    auto rng = stream(opt.seed, static_cast<std::uint64_t>(t));
    for (int attempt = 0;; ++attempt) {
      if (attempt == 100000) throw std::runtime_error("forward_invariance_study: no safe start found");
      StateVector x(model.n());
      for (int d = 0; d < model.n(); ++d) x(d) = sb.lower(d) + unit(rng) * sb.width()(d);
      if (model.admissible(x) && phi(params, model, x) <= 0.0) {
        starts.push_back(x);
        break;
      }
    }
  }

  SimulationOptions so;
  so.variant = RssaVariant::Polytope;
  so.dt = opt.dt;
  so.steps = std::max(1, static_cast<int>(std::lround(opt.horizon / opt.dt)));
  so.bound = bo;

  std::vector<ForwardInvarianceRow> rows;
  for (double value : true_values) {
    ForwardInvarianceRow row;
    row.true_param = value;
    row.in_bound = value >= lo && value <= hi;
    row.trials = opt.trials;
    row.k_phi = k_phi;
    const double nominal = std::clamp(value, lo, hi);
    for (const auto& x : grid.states) {
      const DynamicsSample t = model.dynamics(x, value);
      const DynamicsSample n = model.dynamics(x, nominal);
      for (const auto& u : corners) row.m_res = std::max(row.m_res, (t.xdot(u) - n.xdot(u)).norm());
    }
    row.bound = gamma_inverse(params, k_phi * row.m_res);
    row.phi_max = -std::numeric_limits<double>::infinity();
    so.true_param = value;
    for (const auto& x0 : starts) {
      const TrajectoryLog log = simulate(model, params, x0, so);
      row.phi_max = std::max(row.phi_max, log.max_phi());
      row.fallback_events += log.fallback_events;
    }
    spdlog::info("forward invariance: param {} phi_max {:.4g} bound {:.4g}", value, row.phi_max, row.bound);
    rows.push_back(row);
  }
  return rows;
}

std::vector<TimingRow> timing_bench(const SegwayModel& model, const SafetyIndexParams& params,
                                    const std::vector<int>& sample_counts, int repeats, int batch,
                                    std::uint64_t seed) {
  if (repeats < 10) throw std::invalid_argument("timing_bench: repeats must be >= 10");
  if (batch < 1) throw std::invalid_argument("timing_bench: batch must be >= 1");
  std::vector<StateVector> states;
  auto rng = stream(seed, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Box& sb = model.state_box();
  for (int k = 0; k < repeats * batch; ++k) {
    StateVector x(model.n());
    for (int d = 0; d < model.n(); ++d) x(d) = sb.lower(d) + unit(rng) * sb.width()(d);
    states.push_back(x);
  }
  const Box& box = model.control_box();
  using clock = std::chrono::steady_clock;

  auto run = [&](const std::string& name, int count, const BoundBuilder& builder) {
    std::vector<double> per_solve(repeats);
    volatile double sink = 0.0;
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = clock::now();
      for (int b = 0; b < batch; ++b) {
        const StateVector& x = states[r * batch + b];
        const RobustControlResult res =
            robust_safe_control(model, x, params, builder.build(x), model.reference_control(x), box);
        sink = sink + res.u(0);
      }
      per_solve[r] = std::chrono::duration<double, std::micro>(clock::now() - t0).count() / batch;
    }
    TimingRow row;
    row.variant = name;
    row.samples = count;
    row.repeats = repeats;
    row.mean_us = std::accumulate(per_solve.begin(), per_solve.end(), 0.0) / repeats;
    double ss = 0.0;
    for (double v : per_solve) ss += (v - row.mean_us) * (v - row.mean_us);
    row.sd_us = std::sqrt(ss / (repeats - 1));
    return row;
  };

  std::vector<TimingRow> rows;
  for (int count : sample_counts) {
    const BoundBuilder poly(model, {BoundKind::Polytope, count, seed, 0.95, 0.0, false});
    rows.push_back(run("polytope", count, poly));
    const BoundBuilder ell(model, {BoundKind::Ellipsoid, count, seed, 0.95, 0.0, true});
    rows.push_back(run("ellipsoid", count, ell));
  }
  return rows;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

std::string to_json(const FeasibilityMap& map, const std::string& robot, const std::string& index_name) {
  nlohmann::json j;
  j["schema"] = "rssa.feasibility_map/1";
  j["robot"] = robot;
  j["index"] = index_name;
  j["velocity_samples"] = map.velocity_samples;
  j["axis0"] = map.axis0;
  j["axis1"] = map.axis1;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : map.value) {
    nlohmann::json row = nlohmann::json::array();
    for (double v : r) row.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    rows.push_back(row);
  }
  j["infeasible_fraction"] = rows;
  j["max_infeasible_fraction"] = map.max_value();
  return j.dump(2) + "\n";
}

std::string to_json(const std::vector<ForwardInvarianceRow>& rows, const std::string& robot) {
  nlohmann::json j;
  j["schema"] = "rssa.forward_invariance/1";
  j["robot"] = robot;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"true_param", r.true_param},
                   {"in_bound", r.in_bound},
                   {"phi_max", r.phi_max},
                   {"theoretical_bound", r.bound},
                   {"k_phi", r.k_phi},
                   {"m_res", r.m_res},
                   {"trials", r.trials},
                   {"fallback_events", r.fallback_events},
                   {"within_bound", r.phi_max <= r.bound + 1e-9}});
  }
  j["rows"] = arr;
  return j.dump(2) + "\n";
}

std::string to_json(const std::vector<TimingRow>& rows, const std::string& robot) {
  nlohmann::json j;
  j["schema"] = "rssa.timing/1";
  j["robot"] = robot;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    arr.push_back({{"variant", r.variant},
                   {"samples", r.samples},
                   {"mean_us", r.mean_us},
                   {"sd_us", r.sd_us},
                   {"repeats", r.repeats}});
  }
  j["rows"] = arr;
  return j.dump(2) + "\n";
}

}  // namespace rssa
