#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rssa/bounds.hpp"
#include "rssa/safety_index.hpp"

namespace rssa {

/// Uniform tensor grid over the state box. delta is half the cell diagonal
/// (Euclidean norm on raw coordinates), so every point of the box lies within
/// delta of some grid point.
struct StateGrid {
  std::vector<StateVector> states;
  std::vector<int> counts;
  double delta = 0.0;
  /// Grid points dropped because the model reports them inadmissible.
  std::size_t dropped = 0;
};

/// Throws std::invalid_argument if counts.size() != n or any count < 2.
StateGrid sample_state_grid(const RobotModel& model, const std::vector<int>& counts,
                            bool admissible_only = true);

/// Nearest grid point by index arithmetic. Only meaningful for a grid built
/// with admissible_only = false.
std::size_t nearest_grid_index(const RobotModel& model, const StateGrid& grid, const StateVector& x);

struct LipschitzConstants {
  double k_gamma = 0.0;
  double k_phi = 0.0;
  double k_grad_phi = 0.0;
  double k_sigma_f = 0.0;
  double k_sigma_g = 0.0;
  double m_u = 0.0;
  double m_xdot = 0.0;
};

/// eps = k_phi (k_sigma_f + k_sigma_g M_u) delta + k_grad_phi delta M_xdot
///       + k_gamma k_phi delta.
double margin_epsilon(const LipschitzConstants& k, double delta);

struct LipschitzOptions {
  int probes = 1000;
  std::uint64_t seed = 0;
  /// Distance between the two states of a probe pair.
  double step = 0.02;
  double safety_factor = 1.5;
};

/// Bound-related constants (k_sigma_f, k_sigma_g, M_u, M_xdot); they do not
/// depend on the safety index. The set change between two states is the
/// symmetric Hausdorff distance between the sampled point sets.
LipschitzConstants estimate_model_constants(const RobotModel& model,
                                            const std::vector<double>& parameter_samples,
                                            const LipschitzOptions& opt);

/// Fills k_gamma, k_phi and k_grad_phi of `base` for one index.
LipschitzConstants estimate_index_constants(const RobotModel& model, const SafetyIndexParams& params,
                                            LipschitzConstants base, const LipschitzOptions& opt);

/// Both of the above. Every constant except k_gamma is the running maximum of
/// difference quotients over `probes` random pairs, times safety_factor.
LipschitzConstants estimate_lipschitz(const RobotModel& model, const SafetyIndexParams& params,
                                      const std::vector<double>& parameter_samples,
                                      const LipschitzOptions& opt);

/// Evaluates the feasible rate of many indices on a fixed state set. Bounds
/// are built once per state and reused.
class FeasibilityEvaluator {
 public:
  FeasibilityEvaluator(const RobotModel& model, const BoundBuilder& builder,
                       std::vector<StateVector> states, Box control_box);

  /// Per-state result of is_feasible with margin eps.
  std::vector<char> feasible_mask(const SafetyIndexParams& params, double eps) const;
  /// |B*| / |B|.
  double rate(const SafetyIndexParams& params, double eps) const;

  const std::vector<StateVector>& states() const { return states_; }
  const UncertaintyBound& bound(std::size_t i) const { return bounds_[i]; }

 private:
  const RobotModel* model_;
  std::vector<StateVector> states_;
  std::vector<UncertaintyBound> bounds_;
  Box box_;
};

/// Same result as FeasibilityEvaluator::rate, building each bound on the fly.
double feasible_rate(const SafetyIndexParams& params, const RobotModel& model,
                     const BoundBuilder& builder, const std::vector<StateVector>& grid, double eps,
                     const Box& control_box);

struct SynthesisConfig {
  std::vector<int> grid_counts;
  /// step <= 0 uses the grid delta as the probe distance.
  LipschitzOptions lipschitz{1000, 0, 0.0, 1.5};
  /// Negative: eps from the estimated constants for each candidate.
  double epsilon_override = -1.0;
  int population = 16;
  /// In units of the search-box width.
  double sigma0 = 0.3;
  int max_generations = 50;
  std::uint64_t seed = 0;
  double gamma_slope = 1.0;
  /// (alpha, k_v, beta) lower and upper corners.
  Box search_box{Eigen::Vector3d(SafetyIndexParams::kAlphaMin, SafetyIndexParams::kKvMin,
                                 SafetyIndexParams::kBetaMin),
                 Eigen::Vector3d(SafetyIndexParams::kAlphaMax, SafetyIndexParams::kKvMax,
                                 SafetyIndexParams::kBetaMax)};
  /// Empty: center of the search box.
  Vector initial_mean;
};

struct SynthesisResult {
  SafetyIndexParams params;
  double rate = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  LipschitzConstants constants;
  /// Best-ever rate after each generation; entry 0 is the initial mean.
  std::vector<double> history;
  int generations = 0;
  int evaluations = 0;
  std::size_t grid_states = 0;

  bool certified() const { return rate >= 1.0; }
};

/// CMA-ES over (alpha, k_v, beta) maximizing the feasible rate with the
/// sampling margin eps. Stops at rate 1 or after max_generations.
SynthesisResult synthesize(const SynthesisConfig& cfg, const RobotModel& model,
                           const BoundBuilder& builder);

/// key = value text listing the result; byte-identical for identical results.
std::string synthesis_report(const SynthesisResult& r, const SynthesisConfig& cfg,
                             const std::string& robot);
/// alpha, k_v, beta and gamma_slope as key = value lines.
std::string parameter_file(const SafetyIndexParams& p);

}  // namespace rssa
