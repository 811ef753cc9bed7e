#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rssa/config.hpp"
#include "rssa/core.hpp"

namespace rssa {

/// N(mean, sd^2) restricted to [lo, hi].
struct TruncatedGaussian {
  double mean = 0.0;
  double sd = 1.0;
  double lo = -1.0;
  double hi = 1.0;

  bool degenerate() const { return sd <= 0.0 || lo >= hi; }
};

/// Rejection sampling from the truncated Gaussian. Deterministic in `seed`.
/// Throws std::runtime_error after 1e6 consecutive rejections.
std::vector<double> sample_parameter(const TruncatedGaussian& dist, std::uint64_t seed, int count);

/// Scalar safety coordinate s(x) (end-effector x, |tilt|, ...) and its time
/// derivative sdot(x), with gradients w.r.t. the state.
struct SafetyFeature {
  double s = 0.0;
  Vector ds;
  double sdot = 0.0;
  Vector dsdot;
};

/// Uncertain control-affine robot xdot = f(x; p) + g(x; p) u with a single
/// uncertain physical parameter p.
class RobotModel {
 public:
  virtual ~RobotModel() = default;

  virtual std::string name() const = 0;
  virtual int n() const = 0;
  virtual int m() const = 0;
  virtual DynamicsSample dynamics(const StateVector& x, double param) const = 0;
  virtual SafetyFeature safety_feature(const StateVector& x) const = 0;
  virtual ControlVector reference_control(const StateVector& x) const = 0;
  /// Configurations that physically exist (e.g. not inside the wall).
  virtual bool admissible(const StateVector& x) const { return x.size() == n(); }

  /// The user safety index is phi0 = s - safety_limit().
  double safety_limit() const { return safety_limit_; }
  /// Below |s| < power_knee() a fractional power (alpha < 1) is replaced by an odd cubic.
  double power_knee() const { return power_knee_; }
  const Box& state_box() const { return state_box_; }
  const Box& control_box() const { return control_box_; }
  const TruncatedGaussian& parameter_distribution() const { return param_dist_; }
  double nominal_parameter() const { return param_dist_.mean; }

 protected:
  Box state_box_;
  Box control_box_;
  TruncatedGaussian param_dist_;
  double safety_limit_ = 0.0;
  double power_knee_ = 0.0;
};

std::vector<DynamicsSample> sample_dynamics(const RobotModel& model, const StateVector& x,
                                            std::uint64_t seed, int count);
/// Dynamics at each given parameter value.
std::vector<DynamicsSample> dynamics_at(const RobotModel& model, const StateVector& x,
                                        const std::vector<double>& params);

/// Planar two-link arm with uncertain second-link mass m2. State
/// (theta1, theta2, dtheta1, dtheta2), torques u in R^2, wall at x = x_wall.
class ScaraModel final : public RobotModel {
 public:
  struct Params {
    double m1 = 1.0;
    double l1 = 1.0;
    double l2 = 0.6;
    double x_wall = 1.5;
    TruncatedGaussian m2{1.0, 0.3, 0.1, 1.9};
    double torque_limit = 20.0;
    double velocity_limit = 2.0;
    double kp = 10.0;
    double kd = 4.0;
    double target_theta1 = 0.0;
    double target_theta2 = 0.0;
  };

  ScaraModel() : ScaraModel(Params{}) {}
  explicit ScaraModel(const Params& p);
  static ScaraModel from_config(const KeyValueConfig& cfg);

  std::string name() const override { return "scara"; }
  int n() const override { return 4; }
  int m() const override { return 2; }
  DynamicsSample dynamics(const StateVector& x, double m2) const override;
  SafetyFeature safety_feature(const StateVector& x) const override;
  ControlVector reference_control(const StateVector& x) const override;
  bool admissible(const StateVector& x) const override;

  Eigen::Matrix2d mass_matrix(double theta2, double m2) const;
  Eigen::Vector2d coriolis(const StateVector& x, double m2) const;
  double end_effector_x(const StateVector& x) const;
  const Params& params() const { return p_; }

 private:
  Params p_;
};

/// Segway with uncertain motor torque constant K_m. State (p, tilt, dp, dtilt),
/// scalar input u.
class SegwayModel final : public RobotModel {
 public:
  struct Params {
    double m0 = 52.71;
    double m = 44.798;
    double J0 = 5.108;
    double L = 0.169;
    double R = 0.195;
    double K_b = 0.325;
    double g_grav = 9.81;
    TruncatedGaussian K_m{2.524, 0.3, 1.624, 3.424};
    double tilt_limit = 0.1;
    double target_speed = 1.0;
    double input_limit = 20.0;
    /// u = u_ff - k_tilt*tilt - k_speed*(dp - target) - k_rate*dtilt.
    double k_tilt = -57.36948982;
    double k_speed = -11.80460422;
    double k_rate = -14.40286512;
  };

  SegwayModel() : SegwayModel(Params{}) {}
  explicit SegwayModel(const Params& p);
  static SegwayModel from_config(const KeyValueConfig& cfg);

  std::string name() const override { return "segway"; }
  int n() const override { return 4; }
  int m() const override { return 1; }
  DynamicsSample dynamics(const StateVector& x, double K_m) const override;
  SafetyFeature safety_feature(const StateVector& x) const override;
  ControlVector reference_control(const StateVector& x) const override;

  Eigen::Matrix2d mass_matrix(double tilt) const;
  /// Decomposition f = f0 + K_m * f1, g = K_m * g1 (f and g are affine in K_m).
  void affine_parts(const StateVector& x, Vector* f0, Vector* f1, Matrix* g1) const;
  const Params& params() const { return p_; }

 private:
  Params p_;
};

/// 1-D point mass with uncertain mass: state (p, v), u = force, limit p <= limit.
/// Used as an analytic toy for end-to-end checks.
class PointMassModel final : public RobotModel {
 public:
  struct Params {
    TruncatedGaussian mass{1.0, 0.0, 1.0, 1.0};
    double limit = 1.0;
    double position_bound = 2.0;
    double velocity_bound = 1.0;
    double force_limit = 50.0;
    double kp = 5.0;
  };

  PointMassModel() : PointMassModel(Params{}) {}
  explicit PointMassModel(const Params& p);
  static PointMassModel from_config(const KeyValueConfig& cfg);

  std::string name() const override { return "pointmass"; }
  int n() const override { return 2; }
  int m() const override { return 1; }
  DynamicsSample dynamics(const StateVector& x, double mass) const override;
  SafetyFeature safety_feature(const StateVector& x) const override;
  ControlVector reference_control(const StateVector& x) const override;

 private:
  Params p_;
};

/// Builds the robot named by `robot` ("scara", "segway", "pointmass") with
/// overrides read from `cfg`.
std::unique_ptr<RobotModel> make_robot(const std::string& robot, const KeyValueConfig& cfg);

}  // namespace rssa
