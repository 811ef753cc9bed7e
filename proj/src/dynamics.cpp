#include "rssa/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace rssa {
namespace {

constexpr double kSingularDet = 1e-12;

Eigen::Matrix2d checked_inverse(const Eigen::Matrix2d& M) {
  const double det = M.determinant();
  if (!(std::abs(det) > kSingularDet)) {
    throw SingularMassMatrix("mass matrix is singular (det = " + std::to_string(det) + ")");
  }
  Eigen::Matrix2d inv;
  inv << M(1, 1), -M(0, 1), -M(1, 0), M(0, 0);
  return inv / det;
}

double sign(double v) { return (v > 0.0) - (v < 0.0); }

TruncatedGaussian read_dist(const KeyValueConfig& cfg, const std::string& prefix,
                            const TruncatedGaussian& d) {
  return {cfg.get_double(prefix + ".mean", d.mean), cfg.get_double(prefix + ".sd", d.sd),
          cfg.get_double(prefix + ".lo", d.lo), cfg.get_double(prefix + ".hi", d.hi)};
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0)) throw std::invalid_argument(std::string(what) + " must be positive");
}

}  // namespace

std::vector<double> sample_parameter(const TruncatedGaussian& dist, std::uint64_t seed, int count) {
  if (count < 1) throw std::invalid_argument("sample_parameter: count must be >= 1");
  if (dist.lo > dist.hi) throw std::invalid_argument("sample_parameter: empty support");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(count));
  if (dist.degenerate()) {
    out.assign(static_cast<std::size_t>(count), std::clamp(dist.mean, dist.lo, dist.hi));
    return out;
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(dist.mean, dist.sd);
  constexpr int kMaxRejections = 1000000;
  while (static_cast<int>(out.size()) < count) {
    int rejected = 0;
    for (;;) {
      const double v = normal(rng);
      if (v >= dist.lo && v <= dist.hi) {
        out.push_back(v);
        break;
      }
      if (++rejected >= kMaxRejections) {
        throw std::runtime_error("sample_parameter: rejection limit reached");
      }
    }
  }
  return out;
}

std::vector<DynamicsSample> dynamics_at(const RobotModel& model, const StateVector& x,
                                        const std::vector<double>& params) {
  std::vector<DynamicsSample> out;
  out.reserve(params.size());
  for (double p : params) out.push_back(model.dynamics(x, p));
  return out;
}

std::vector<DynamicsSample> sample_dynamics(const RobotModel& model, const StateVector& x,
                                            std::uint64_t seed, int count) {
  return dynamics_at(model, x, sample_parameter(model.parameter_distribution(), seed, count));
}

// ---------------------------------------------------------------------------
// SCARA

ScaraModel::ScaraModel(const Params& p) : p_(p) {
  require_positive(p_.m1, "m1");
  require_positive(p_.l1, "l1");
  require_positive(p_.l2, "l2");
  const double h = std::numbers::pi / 2.0;
  const double v = p_.velocity_limit;
  state_box_ = Box((Vector(4) << -h, -h, -v, -v).finished(), (Vector(4) << h, h, v, v).finished());
  control_box_ = Box::symmetric(Vector::Constant(2, p_.torque_limit));
  param_dist_ = p_.m2;
  safety_limit_ = p_.x_wall;
  power_knee_ = 0.05 * p_.x_wall;
}

ScaraModel ScaraModel::from_config(const KeyValueConfig& cfg) {
  Params p;
  p.m1 = cfg.get_double("scara.m1", p.m1);
  p.l1 = cfg.get_double("scara.l1", p.l1);
  p.l2 = cfg.get_double("scara.l2", p.l2);
  p.x_wall = cfg.get_double("scara.x_wall", p.x_wall);
  p.m2 = read_dist(cfg, "scara.m2", p.m2);
  p.torque_limit = cfg.get_double("scara.torque_limit", p.torque_limit);
  p.velocity_limit = cfg.get_double("scara.velocity_limit", p.velocity_limit);
  p.kp = cfg.get_double("scara.kp", p.kp);
  p.kd = cfg.get_double("scara.kd", p.kd);
  p.target_theta1 = cfg.get_double("scara.target_theta1", p.target_theta1);
  p.target_theta2 = cfg.get_double("scara.target_theta2", p.target_theta2);
  return ScaraModel(p);
}

Eigen::Matrix2d ScaraModel::mass_matrix(double theta2, double m2) const {
  const double A = p_.m1 * p_.l1 * p_.l1 / 6.0 + m2 * p_.l1 * p_.l1 / 2.0;
  const double B = m2 * p_.l2 * p_.l2 / 6.0;
  const double C = m2 * p_.l1 * p_.l2 / 2.0;
  const double c2 = std::cos(theta2);
  Eigen::Matrix2d M;
  M << 2 * A + 2 * B + 2 * C * c2, 2 * B + C * c2, 2 * B + C * c2, 2 * B;
  return M;
}

Eigen::Vector2d ScaraModel::coriolis(const StateVector& x, double m2) const {
  const double C = m2 * p_.l1 * p_.l2 / 2.0;
  const double s2 = std::sin(x(1));
  return {-C * s2 * (2 * x(2) + x(3)) * x(3), C * s2 * x(2) * x(2)};
}

DynamicsSample ScaraModel::dynamics(const StateVector& x, double m2) const {
  if (x.size() != 4) throw std::invalid_argument("scara: state must have length 4");
  if (!(m2 > 0.0)) throw std::invalid_argument("scara: m2 must be positive");
  const Eigen::Matrix2d Minv = checked_inverse(mass_matrix(x(1), m2));
  Vector f(4);
  f.head<2>() = x.tail<2>();
  f.tail<2>() = -Minv * coriolis(x, m2);
  Matrix g = Matrix::Zero(4, 2);
  g.bottomRows<2>() = Minv;
  return DynamicsSample(std::move(f), std::move(g));
}

double ScaraModel::end_effector_x(const StateVector& x) const {
  return p_.l1 * std::cos(x(0)) + p_.l2 * std::cos(x(0) + x(1));
}

SafetyFeature ScaraModel::safety_feature(const StateVector& x) const {
  const double s1 = std::sin(x(0)), c1 = std::cos(x(0));
  const double s12 = std::sin(x(0) + x(1)), c12 = std::cos(x(0) + x(1));
  const double j1 = -p_.l1 * s1 - p_.l2 * s12;
  const double j2 = -p_.l2 * s12;
  SafetyFeature out;
  out.s = p_.l1 * c1 + p_.l2 * c12;
  out.ds = Vector::Zero(4);
  out.ds(0) = j1;
  out.ds(1) = j2;
  out.sdot = j1 * x(2) + j2 * x(3);
  out.dsdot = Vector(4);
  out.dsdot(0) = (-p_.l1 * c1 - p_.l2 * c12) * x(2) - p_.l2 * c12 * x(3);
  out.dsdot(1) = -p_.l2 * c12 * (x(2) + x(3));
  out.dsdot(2) = j1;
  out.dsdot(3) = j2;
  return out;
}

ControlVector ScaraModel::reference_control(const StateVector& x) const {
  ControlVector u(2);
  u(0) = p_.kp * (p_.target_theta1 - x(0)) - p_.kd * x(2);
  u(1) = p_.kp * (p_.target_theta2 - x(1)) - p_.kd * x(3);
  return u;
}

bool ScaraModel::admissible(const StateVector& x) const {
  return x.size() == 4 && end_effector_x(x) <= p_.x_wall;
}

// ---------------------------------------------------------------------------
// Segway

SegwayModel::SegwayModel(const Params& p) : p_(p) {
  for (double v : {p_.m0, p_.m, p_.J0, p_.L, p_.R, p_.K_b, p_.g_grav}) {
    require_positive(v, "segway physical parameter");
  }
  state_box_ = Box((Vector(4) << -10.0, -0.3, -2.0, -1.0).finished(),
                   (Vector(4) << 10.0, 0.3, 2.0, 1.0).finished());
  control_box_ = Box::symmetric(Vector::Constant(1, p_.input_limit));
  param_dist_ = p_.K_m;
  safety_limit_ = p_.tilt_limit;
  power_knee_ = 0.05 * p_.tilt_limit;
}

SegwayModel SegwayModel::from_config(const KeyValueConfig& cfg) {
  Params p;
  p.m0 = cfg.get_double("segway.m0", p.m0);
  p.m = cfg.get_double("segway.m", p.m);
  p.J0 = cfg.get_double("segway.J0", p.J0);
  p.L = cfg.get_double("segway.L", p.L);
  p.R = cfg.get_double("segway.R", p.R);
  p.K_b = cfg.get_double("segway.K_b", p.K_b);
  p.g_grav = cfg.get_double("segway.g_grav", p.g_grav);
  p.K_m = read_dist(cfg, "segway.K_m", p.K_m);
  p.tilt_limit = cfg.get_double("segway.tilt_limit", p.tilt_limit);
  p.target_speed = cfg.get_double("segway.target_speed", p.target_speed);
  p.input_limit = cfg.get_double("segway.input_limit", p.input_limit);
  p.k_tilt = cfg.get_double("segway.k_tilt", p.k_tilt);
  p.k_speed = cfg.get_double("segway.k_speed", p.k_speed);
  p.k_rate = cfg.get_double("segway.k_rate", p.k_rate);
  return SegwayModel(p);
}

Eigen::Matrix2d SegwayModel::mass_matrix(double tilt) const {
  const double off = p_.m * p_.L * std::cos(tilt);
  Eigen::Matrix2d M;
  M << p_.m0, off, off, p_.J0;
  return M;
}

void SegwayModel::affine_parts(const StateVector& x, Vector* f0, Vector* f1, Matrix* g1) const {
  const double tilt = x(1), dp = x(2), dtilt = x(3);
  const Eigen::Matrix2d Minv = checked_inverse(mass_matrix(tilt));
  // H = H0 + b_t * h1 with b_t = K_m K_b / R.
  const Eigen::Vector2d H0(-p_.m * p_.L * std::sin(tilt) * dtilt * dtilt,
                           -p_.m * p_.g_grav * p_.L * std::sin(tilt));
  const double slip = dp - p_.R * dtilt;
  const Eigen::Vector2d h1(slip / p_.R, -slip);
  const Eigen::Vector2d b1(1.0 / p_.R, -1.0);
  *f0 = Vector::Zero(4);
  f0->head<2>() << dp, dtilt;
  f0->tail<2>() = -Minv * H0;
  *f1 = Vector::Zero(4);
  f1->tail<2>() = -(p_.K_b / p_.R) * (Minv * h1);
  *g1 = Matrix::Zero(4, 1);
  g1->bottomRows<2>() = Minv * b1;
}

DynamicsSample SegwayModel::dynamics(const StateVector& x, double K_m) const {
  if (x.size() != 4) throw std::invalid_argument("segway: state must have length 4");
  if (!(K_m > 0.0)) throw std::invalid_argument("segway: K_m must be positive");
  Vector f0, f1;
  Matrix g1;
  affine_parts(x, &f0, &f1, &g1);
  return DynamicsSample(f0 + K_m * f1, K_m * g1);
}

SafetyFeature SegwayModel::safety_feature(const StateVector& x) const {
  const double sg = sign(x(1));
  SafetyFeature out;
  out.s = std::abs(x(1));
  out.ds = Vector::Zero(4);
  out.ds(1) = sg;
  out.sdot = sg * x(3);
  out.dsdot = Vector::Zero(4);
  out.dsdot(3) = sg;
  return out;
}

ControlVector SegwayModel::reference_control(const StateVector& x) const {
  const double u_ff = p_.K_b * p_.target_speed / p_.R;
  ControlVector u(1);
  u(0) = u_ff - p_.k_tilt * x(1) - p_.k_speed * (x(2) - p_.target_speed) - p_.k_rate * x(3);
  return u;
}

// ---------------------------------------------------------------------------
// Point mass

PointMassModel::PointMassModel(const Params& p) : p_(p) {
  state_box_ = Box((Vector(2) << -p_.position_bound, -p_.velocity_bound).finished(),
                   (Vector(2) << p_.position_bound, p_.velocity_bound).finished());
  control_box_ = Box::symmetric(Vector::Constant(1, p_.force_limit));
  param_dist_ = p_.mass;
  safety_limit_ = p_.limit;
  power_knee_ = 0.05 * std::abs(p_.limit);
}

PointMassModel PointMassModel::from_config(const KeyValueConfig& cfg) {
  Params p;
  p.mass = read_dist(cfg, "pointmass.mass", p.mass);
  p.limit = cfg.get_double("pointmass.limit", p.limit);
  p.position_bound = cfg.get_double("pointmass.position_bound", p.position_bound);
  p.velocity_bound = cfg.get_double("pointmass.velocity_bound", p.velocity_bound);
  p.force_limit = cfg.get_double("pointmass.force_limit", p.force_limit);
  p.kp = cfg.get_double("pointmass.kp", p.kp);
  return PointMassModel(p);
}

DynamicsSample PointMassModel::dynamics(const StateVector& x, double mass) const {
  if (!(mass > 0.0)) throw std::invalid_argument("pointmass: mass must be positive");
  Vector f(2);
  f << x(1), 0.0;
  Matrix g(2, 1);
  g << 0.0, 1.0 / mass;
  return DynamicsSample(std::move(f), std::move(g));
}

SafetyFeature PointMassModel::safety_feature(const StateVector& x) const {
  SafetyFeature out;
  out.s = x(0);
  out.ds = (Vector(2) << 1.0, 0.0).finished();
  out.sdot = x(1);
  out.dsdot = (Vector(2) << 0.0, 1.0).finished();
  return out;
}

ControlVector PointMassModel::reference_control(const StateVector& x) const {
  ControlVector u(1);
  u(0) = p_.kp * (p_.limit + 1.0 - x(0)) - x(1);
  return u;
}

std::unique_ptr<RobotModel> make_robot(const std::string& robot, const KeyValueConfig& cfg) {
  if (robot == "scara") return std::make_unique<ScaraModel>(ScaraModel::from_config(cfg));
  if (robot == "segway") return std::make_unique<SegwayModel>(SegwayModel::from_config(cfg));
  if (robot == "pointmass") return std::make_unique<PointMassModel>(PointMassModel::from_config(cfg));
  throw ConfigError("unknown robot '" + robot + "'");
}

}  // namespace rssa
