#include "rssa/safety_index.hpp"

#include <cmath>
#include <stdexcept>

namespace rssa {
namespace {

constexpr double kSwitchGap = 1e-9;

}  // namespace

bool SafetyIndexParams::in_search_box() const {
  return alpha > kAlphaMin && alpha < kAlphaMax && k_v > kKvMin && k_v < kKvMax &&
         beta > kBetaMin && beta < kBetaMax && gamma_slope > 0.0;
}

SafetyIndexParams hand_designed_index() { return {1.0, 0.2, 0.0, 1.0}; }
SafetyIndexParams learned_scara_index() { return {0.57, 2.15, 0.072, 1.0}; }
SafetyIndexParams segway_index() { return {1.0, 0.02, 0.005, 1.0}; }

SafetyIndexParams default_index(const std::string& robot) {
  if (robot == "scara") return learned_scara_index();
  if (robot == "segway") return segway_index();
  if (robot == "pointmass") return {1.0, 0.5, 0.9, 1.0};
  throw std::invalid_argument("default_index: unknown robot '" + robot + "'");
}

double signed_power(double s, double alpha, double knee) {
  const double a = std::abs(s);
  if (a >= knee || alpha >= 1.0) return std::copysign(std::pow(a, alpha), s);
  const double c1 = std::pow(knee, alpha - 1.0) * (3.0 - alpha) / 2.0;
  const double c3 = (alpha - 1.0) * std::pow(knee, alpha - 3.0) / 2.0;
  return c1 * s + c3 * s * s * s;
}

double signed_power_derivative(double s, double alpha, double knee) {
  const double a = std::abs(s);
  if (a >= knee || alpha >= 1.0) return alpha * std::pow(a, alpha - 1.0);
  const double c1 = std::pow(knee, alpha - 1.0) * (3.0 - alpha) / 2.0;
  const double c3 = (alpha - 1.0) * std::pow(knee, alpha - 3.0) / 2.0;
  return c1 + 3.0 * c3 * s * s;
}

double phi0(const RobotModel& model, const StateVector& x) {
  return model.safety_feature(x).s - model.safety_limit();
}

Vector grad_phi0(const RobotModel& model, const StateVector& x) {
  return model.safety_feature(x).ds;
}

double phi_branch(const SafetyIndexParams& params, const RobotModel& model, const StateVector& x) {
  const SafetyFeature sf = model.safety_feature(x);
  const double knee = model.power_knee();
  return signed_power(sf.s, params.alpha, knee) -
         signed_power(model.safety_limit(), params.alpha, knee) + params.k_v * sf.sdot + params.beta;
}

double phi(const SafetyIndexParams& params, const RobotModel& model, const StateVector& x) {
  return std::max(phi0(model, x), phi_branch(params, model, x));
}

PhiEvaluation evaluate_phi(const SafetyIndexParams& params, const RobotModel& model,
                           const StateVector& x) {
  const SafetyFeature sf = model.safety_feature(x);
  const double knee = model.power_knee();
  const double base = sf.s - model.safety_limit();
  const double branch = signed_power(sf.s, params.alpha, knee) -
                        signed_power(model.safety_limit(), params.alpha, knee) +
                        params.k_v * sf.sdot + params.beta;
  PhiEvaluation out;
  if (branch >= base) {
    out.value = branch;
    out.grad = signed_power_derivative(sf.s, params.alpha, knee) * sf.ds + params.k_v * sf.dsdot;
    out.branch_active = true;
  } else {
    out.value = base;
    out.grad = sf.ds;
  }
  return out;
}

PhiEvaluation evaluate_branch(const SafetyIndexParams& params, const RobotModel& model,
                              const StateVector& x) {
  const SafetyFeature sf = model.safety_feature(x);
  const double knee = model.power_knee();
  PhiEvaluation out;
  out.value = signed_power(sf.s, params.alpha, knee) - signed_power(model.safety_limit(), params.alpha, knee) +
              params.k_v * sf.sdot + params.beta;
  out.grad = signed_power_derivative(sf.s, params.alpha, knee) * sf.ds + params.k_v * sf.dsdot;
  out.branch_active = true;
  return out;
}

Vector grad_phi(const SafetyIndexParams& params, const RobotModel& model, const StateVector& x) {
  const double gap = phi_branch(params, model, x) - phi0(model, x);
  if (std::abs(gap) <= kSwitchGap) {
    throw AtSwitchingSurface("grad_phi: state on the switching surface between branches");
  }
  return evaluate_phi(params, model, x).grad;
}

}  // namespace rssa
