#pragma once

#include <vector>

#include "rssa/bounds.hpp"
#include "rssa/qp.hpp"
#include "rssa/socp.hpp"

namespace rssa {

struct RssaOptions {
  /// Allowed violation of the robust constraint.
  double tol = 1e-6;
  /// Tolerance handed to the QP engine.
  double qp_tol = 1e-10;
  /// Cutting-plane iteration cap; 0 means the vertex count.
  int max_iters = 0;
  /// Skip the interior-point solve when u_ref already satisfies everything.
  bool accept_reference = true;
  SocpOptions socp;
  /// If set, receives ||u - u_ref||^2 after every cutting-plane QP.
  std::vector<double>* objective_trace = nullptr;
};

/// Robust QP at the Lie-derivative level:
/// min ||u - u_ref||^2  s.t.  v'u <= c for every v in V_g,  u in box.
RobustControlResult solve_polytope_lie(const PolytopeSet& v_g, double c, const Vector& u_ref,
                                       const Box& box, const RssaOptions& opt = {});
RobustControlResult solve_ellipsoid_lie(const EllipsoidSet& v_g, double c, const Vector& u_ref,
                                        const Box& box, const RssaOptions& opt = {});
RobustControlResult solve_lie(const LieDerivativeBounds& lie, const Vector& u_ref, const Box& box,
                              const RssaOptions& opt = {});

/// Cutting-plane robust safe control for polytope bounds.
RobustControlResult polytope_rssa(const RobotModel& model, const StateVector& x,
                                  const SafetyIndexParams& params, const UncertaintyBound& bound,
                                  const ControlVector& u_ref, const Box& box,
                                  const RssaOptions& opt = {});

/// Second-order cone robust safe control for ellipsoid bounds.
RobustControlResult ellipsoid_rssa(const RobotModel& model, const StateVector& x,
                                   const SafetyIndexParams& params, const UncertaintyBound& bound,
                                   const ControlVector& u_ref, const Box& box,
                                   const RssaOptions& opt = {});

/// Mean model with a constant residual margin: one linear constraint.
RobustControlResult constant_rssa(const RobotModel& model, const StateVector& x,
                                  const SafetyIndexParams& params, double d_res,
                                  const DynamicsSample& mean, const ControlVector& u_ref,
                                  const Box& box, const RssaOptions& opt = {});

/// Dispatch on bound.kind.
RobustControlResult robust_safe_control(const RobotModel& model, const StateVector& x,
                                        const SafetyIndexParams& params, const UncertaintyBound& bound,
                                        const ControlVector& u_ref, const Box& box,
                                        const RssaOptions& opt = {});

/// Worst case over the bound of phi-dot + gamma(phi) for control u, i.e.
/// max V_f + max_{v in V_g} v'u + gamma(phi) = support(V_g, u) - c.
double worst_case_margin(const LieDerivativeBounds& lie, const Vector& u);

/// min over the box of support(V_g, u), with its minimizer.
struct MinimaxResult {
  double value = 0.0;
  Vector u;
};
MinimaxResult min_worst_case(const BoundSet& v_g, const Box& box);

/// Exists u in box with support(V_g, u) <= c - eps. Exact; for polytopes in one
/// or two control dimensions it works on the hull of V_g directly.
bool is_feasible_lie(const LieDerivativeBounds& lie, const Box& box, double eps);
bool is_feasible(const RobotModel& model, const StateVector& x, const SafetyIndexParams& params,
                 const UncertaintyBound& bound, const Box& box, double eps);

/// Control minimizing the worst-case phi-dot over the box.
ControlVector safest_control(const LieDerivativeBounds& lie, const Box& box);

}  // namespace rssa
