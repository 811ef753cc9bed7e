#pragma once

#include <stdexcept>
#include <string>

#include "rssa/dynamics.hpp"

namespace rssa {

/// Parameters of phi = max{phi0, sp(s)^alpha - sp(limit)^alpha + k_v * sdot + beta}
/// together with the slope of gamma(phi) = gamma_slope * phi.
struct SafetyIndexParams {
  double alpha = 1.0;
  double k_v = 0.2;
  double beta = 0.0;
  double gamma_slope = 1.0;

  /// (alpha, k_v, beta) search box used by synthesis.
  static constexpr double kAlphaMin = 0.1, kAlphaMax = 5.0;
  static constexpr double kKvMin = 0.1, kKvMax = 5.0;
  static constexpr double kBetaMin = 0.001, kBetaMax = 1.0;

  bool in_search_box() const;
};

/// Indices reported for the SCARA arm: the hand-tuned one and the learned one.
SafetyIndexParams hand_designed_index();
SafetyIndexParams learned_scara_index();
/// Tilt index used for the Segway tracking runs.
SafetyIndexParams segway_index();
/// Index shipped for each robot name; throws std::invalid_argument otherwise.
SafetyIndexParams default_index(const std::string& robot);

class AtSwitchingSurface : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Odd, monotone power sign(s)|s|^alpha. For alpha < 1 the part inside
/// |s| < knee is replaced by the odd cubic a*s + b*s^3 that matches value and
/// slope at the knee, so the gradient stays bounded at s = 0. knee = 0 or
/// alpha >= 1 gives the plain power.
double signed_power(double s, double alpha, double knee);
double signed_power_derivative(double s, double alpha, double knee);

double phi0(const RobotModel& model, const StateVector& x);
Vector grad_phi0(const RobotModel& model, const StateVector& x);

/// The learned branch alone.
double phi_branch(const SafetyIndexParams& params, const RobotModel& model, const StateVector& x);
double phi(const SafetyIndexParams& params, const RobotModel& model, const StateVector& x);

/// Gradient of the active branch. Throws AtSwitchingSurface when the two
/// branches are within 1e-9 of each other.
Vector grad_phi(const SafetyIndexParams& params, const RobotModel& model, const StateVector& x);

/// Value and gradient of the active branch without throwing; on a tie the
/// learned branch is used.
struct PhiEvaluation {
  double value = 0.0;
  Vector grad;
  bool branch_active = false;
};
PhiEvaluation evaluate_phi(const SafetyIndexParams& params, const RobotModel& model,
                           const StateVector& x);
/// Value and gradient of the learned branch, whether or not it is active.
PhiEvaluation evaluate_branch(const SafetyIndexParams& params, const RobotModel& model,
                              const StateVector& x);

inline double gamma(const SafetyIndexParams& params, double phi_value) {
  return params.gamma_slope * phi_value;
}
inline double gamma_inverse(const SafetyIndexParams& params, double y) {
  return y / params.gamma_slope;
}

}  // namespace rssa
