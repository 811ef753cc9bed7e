#pragma once

#include "rssa/dynamics.hpp"
#include "rssa/safety_index.hpp"

namespace rssa {

enum class BoundKind { Polytope, Ellipsoid, Constant };

std::string to_string(BoundKind k);

/// Uncertainty bound Sigma_f (over f in R^n) and Sigma_g (over g_flat in
/// R^{n m}) at one state. The Constant kind replaces both by the mean model
/// plus a scalar bound d_res on |residual phi-dot|.
struct UncertaintyBound {
  BoundKind kind = BoundKind::Polytope;
  BoundSet sigma_f;
  BoundSet sigma_g;
  double d_res = 0.0;
  DynamicsSample mean_model;
  int n = 0;
  int m = 0;
};

/// P(X <= x) for X ~ chi^2 with k degrees of freedom, via the regularized lower
/// incomplete gamma function.
double chi_square_cdf(double x, double k);
/// x with chi_square_cdf(x, k) = p, by bisection to 1e-12 relative width.
double chi_square_quantile(double p, double k);

DynamicsSample mean_model(const std::vector<DynamicsSample>& samples);

/// Sigma_f / Sigma_g are the hulls of the sampled f and g_flat.
UncertaintyBound build_polytope_bound(const std::vector<DynamicsSample>& samples);

/// Gaussian fit: sample mean, sample covariance (regularized when singular),
/// dof = chi^2 quantile at `confidence` with d = n (f) and d = n m (g).
UncertaintyBound build_ellipsoid_bound(const std::vector<DynamicsSample>& samples, double confidence);

/// Mean model plus the constant residual bound d_res.
UncertaintyBound build_constant_bound(const std::vector<DynamicsSample>& samples, double d_res);

/// Exact Gaussian push-forward of K_m through the Segway model (f and g are
/// affine in K_m); dof is the 1-degree-of-freedom chi^2 quantile. Truncation
/// of the K_m distribution is ignored.
UncertaintyBound analytic_segway_ellipsoid(const SegwayModel& model, const StateVector& x,
                                           double confidence);

/// Maps Sigma_f, Sigma_g through grad(phi) to V_f, V_g. The returned c is 0;
/// see compute_c.
LieDerivativeBounds project_to_lie(const UncertaintyBound& bound, const Vector& grad);

/// c = -gamma(phi) - max over V_f.
double compute_c(const LieDerivativeBounds& lie, double phi_value, const SafetyIndexParams& params);

/// project_to_lie + compute_c at a state, using the active-branch gradient.
LieDerivativeBounds lie_bounds_at(const UncertaintyBound& bound, const SafetyIndexParams& params,
                                  const RobotModel& model, const StateVector& x);

/// Constraint used by the safety filter. Same as lie_bounds_at, except when
/// phi0 is the active branch, has no control authority (grad phi0' g = 0 for
/// the mean model) and the learned branch is above -band. The phi0 condition
/// cannot be changed by u there, so the learned branch is constrained instead,
/// with its own value and gradient. This keeps a sampled controller from
/// letting the branch jump past zero within one step.
LieDerivativeBounds filter_lie_bounds(const UncertaintyBound& bound, const SafetyIndexParams& params,
                                      const RobotModel& model, const StateVector& x, double band);

/// max over states, parameter samples and control-box corners of
/// |grad(phi)' [(f - f_mean) + (g - g_mean) u]|.
double estimate_constant_residual_bound(const RobotModel& model, const SafetyIndexParams& params,
                                        const std::vector<double>& parameter_samples,
                                        const std::vector<StateVector>& states, const Box& control_box);

/// Produces the bound used at a state for one RSSA variant.
class BoundBuilder {
 public:
  struct Options {
    BoundKind kind = BoundKind::Polytope;
    int samples = 50;
    std::uint64_t seed = 0;
    double confidence = 0.95;
    double d_res = 0.0;
    /// Segway only: use the analytic Gaussian push-forward for ellipsoids.
    bool analytic_segway = false;
  };

  BoundBuilder(const RobotModel& model, Options opt);

  UncertaintyBound build(const StateVector& x) const;
  /// Parameter values shared by every state (fixed seed).
  const std::vector<double>& parameter_samples() const { return params_; }
  const Options& options() const { return opt_; }
  const RobotModel& model() const { return *model_; }

 private:
  const RobotModel* model_;
  Options opt_;
  std::vector<double> params_;
};

}  // namespace rssa
