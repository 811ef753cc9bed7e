#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rssa/rssa.hpp"
#include "rssa/synthesis.hpp"

namespace rssa {

/// Safety filter placed between the reference controller and the plant.
enum class RssaVariant { None, Polytope, Ellipsoid, Constant };

std::string to_string(RssaVariant v);
/// Throws ConfigError for unknown names.
RssaVariant parse_variant(const std::string& name);

/// One classical RK4 step of xdot = f(x; p) + g(x; p) u with u held constant.
StateVector rk4_step(const RobotModel& model, const StateVector& x, const ControlVector& u, double param,
                     double dt);

/// One row per step: the state at the start of the step and the control held
/// over it.
struct TrajectoryLog {
  std::vector<double> t;
  std::vector<StateVector> x;
  std::vector<ControlVector> u_ref;
  std::vector<ControlVector> u;
  std::vector<double> phi0;
  std::vector<double> phi;
  /// phi-dot + gamma(phi) under the true dynamics.
  std::vector<double> phidot_gamma;
  /// Worst case of phi-dot + gamma(phi) over the modeled bound; NaN without a filter.
  std::vector<double> audit;
  std::vector<SolveStatus> status;
  std::vector<char> fallback;
  std::vector<char> in_box;
  int fallback_events = 0;

  std::size_t size() const { return t.size(); }
  double max_phi0() const;
  double max_phi() const;
  double max_audit() const;
  /// Sum over steps of ||u - u_ref|| dt.
  double cumulative_deviation() const;
};

/// Header row of to_csv.
std::string trajectory_csv_header(int n, int m);
std::string to_csv(const TrajectoryLog& log);

struct SimulationOptions {
  RssaVariant variant = RssaVariant::Polytope;
  /// Hidden parameter used to integrate the plant.
  double true_param = 0.5;
  double dt = 0.002;
  int steps = 2500;
  /// Bound settings; `kind` is overridden by `variant`.
  BoundBuilder::Options bound;
  RssaOptions rssa;
  /// See filter_lie_bounds; 0 constrains the active branch only.
  double switch_band = 1.0;
};

/// Closed loop: reference control, filtered through the chosen variant with
/// bounds built at the current state, then one RK4 step of the true dynamics.
/// When the filter reports infeasibility, the control minimizing the worst-case
/// phi-dot is applied and the step is marked as a fallback.
TrajectoryLog simulate(const RobotModel& model, const SafetyIndexParams& params, const StateVector& x0,
                       const SimulationOptions& opt);

/// Builder options for a variant. The constant variant gets d_res from
/// estimate_constant_residual_bound over `residual_states` when d_res is unset
/// (negative).
BoundBuilder::Options variant_bound_options(const RobotModel& model, const SafetyIndexParams& params,
                                            RssaVariant v, BoundBuilder::Options base,
                                            const std::vector<StateVector>& residual_states);

enum class StartCase { DeepSafe, OverApproximated };

/// Deterministic scan of the admissible state grid for a start state.
/// DeepSafe: phi < 0. OverApproximated: phi > 0 and phi0 < 0. Among the
/// candidates the one that the unfiltered reference pushes hardest toward the
/// limit (largest phi0-dot) is returned; ties go to the earlier grid point.
std::optional<StateVector> find_start_state(const RobotModel& model, const SafetyIndexParams& params,
                                            StartCase c, const std::vector<int>& grid_counts);

struct FeasibilityMap {
  std::vector<double> axis0;
  std::vector<double> axis1;
  /// value[i][j] at (axis0[i], axis1[j]); NaN where the position is inadmissible.
  std::vector<std::vector<double>> value;
  int velocity_samples = 0;

  double max_value() const;
  double min_value() const;
};

/// For each cell of a grid over the first two state coordinates, the fraction
/// of uniformly sampled remaining coordinates (velocities) with no control
/// satisfying the robust constraint (margin 0). Velocity draws depend only on
/// (seed, cell index).
FeasibilityMap feasibility_map(const RobotModel& model, const SafetyIndexParams& params,
                               const BoundBuilder& builder, int cells0, int cells1, int velocity_samples,
                               std::uint64_t seed);

struct ForwardInvarianceRow {
  double true_param = 0.0;
  bool in_bound = false;
  double phi_max = 0.0;
  double bound = 0.0;
  double k_phi = 0.0;
  double m_res = 0.0;
  int trials = 0;
  int fallback_events = 0;
};

struct ForwardInvarianceOptions {
  int trials = 100;
  double dt = 0.002;
  double horizon = 2.0;
  std::uint64_t seed = 0;
  /// Grid for M_res and k_phi.
  std::vector<int> grid_counts;
  BoundBuilder::Options bound;
};

/// For each true parameter value: phi_max over `trials` Polytope-RSSA rollouts
/// from random states with phi <= 0, and the bound gamma^{-1}(k_phi M_res),
/// where M_res is the largest ||(f_true + g_true u) - (f_nom + g_nom u)|| over
/// grid states and control-box corners, the nominal parameter is the true one
/// clamped to the sampled parameter range, and k_phi is the largest ||grad phi||
/// over the grid.
std::vector<ForwardInvarianceRow> forward_invariance_study(const RobotModel& model,
                                                           const SafetyIndexParams& params,
                                                           const std::vector<double>& true_values,
                                                           const ForwardInvarianceOptions& opt);

struct TimingRow {
  std::string variant;
  int samples = 0;
  double mean_us = 0.0;
  double sd_us = 0.0;
  int repeats = 0;
};

/// Per-step cost (bound construction plus solve) on the Segway for each sample
/// count. Polytope builds its bound from that many parameter samples; Ellipsoid
/// uses the analytic push-forward and ignores the count. Each repeat times a
/// batch of `batch` states.
std::vector<TimingRow> timing_bench(const SegwayModel& model, const SafetyIndexParams& params,
                                    const std::vector<int>& sample_counts, int repeats, int batch,
                                    std::uint64_t seed);

double spearman(const std::vector<double>& a, const std::vector<double>& b);

/// JSON documents with a "schema" field.
std::string to_json(const FeasibilityMap& map, const std::string& robot, const std::string& index_name);
std::string to_json(const std::vector<ForwardInvarianceRow>& rows, const std::string& robot);
std::string to_json(const std::vector<TimingRow>& rows, const std::string& robot);

}  // namespace rssa
