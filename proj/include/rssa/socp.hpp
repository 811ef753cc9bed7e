#pragma once

#include <vector>

#include "rssa/core.hpp"

namespace rssa {

/// ||B y + d|| <= e'y + h.
struct SocConstraint {
  Matrix B;
  Vector d;
  Vector e;
  double h = 0.0;
};

/// min 1/2 y'P y + q'y  s.t.  A y <= b,  cones.
/// P may be empty (linear objective); the problem must then be bounded.
struct SocpProblem {
  Matrix P;
  Vector q;
  Matrix A;
  Vector b;
  std::vector<SocConstraint> cones;
};

enum class SocpStatus { Optimal, Infeasible };

struct SocpOptions {
  /// Stop once the barrier duality gap bound theta/tau drops below this.
  double gap_tol = 1e-11;
  /// Barrier weight multiplier per outer iteration (reduction factor 0.2).
  double tau_growth = 5.0;
  int max_newton = 60;
  int max_outer = 80;
};

struct SocpResult {
  SocpStatus status = SocpStatus::Infeasible;
  Vector y;
  int newton_iterations = 0;
  double gap = 0.0;
};

/// Log-barrier interior-point method with damped Newton centering. `start`, if
/// given and strictly feasible, is used directly; otherwise a phase-1 problem
/// min s s.t. every constraint relaxed by s, s >= -1 finds one.
SocpResult solve_socp(const SocpProblem& p, const Vector* start = nullptr,
                      const SocpOptions& opt = SocpOptions{});

/// Smallest constraint slack at y (negative when infeasible).
double socp_min_slack(const SocpProblem& p, const Vector& y);

}  // namespace rssa
