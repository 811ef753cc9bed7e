#pragma once

#include "rssa/core.hpp"

namespace rssa {

/// min c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lower <= x <= upper.
/// Infinite bounds are allowed. Empty matrices mean "no such rows".
struct LpProblem {
  Vector c;
  Matrix A_ub;
  Vector b_ub;
  Matrix A_eq;
  Vector b_eq;
  Vector lower;
  Vector upper;

  /// Problem with n free variables and zero objective.
  static LpProblem free_variables(int n);
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Vector x;
  double objective = 0.0;
};

/// Dense two-phase tableau simplex with Bland's rule. Sized for the handful of
/// variables that appear in hull-membership and minimax problems here.
LpResult solve_lp(const LpProblem& p, double tol = 1e-10);

/// True iff 0 lies in the interior of the hull of the columns of `points`
/// (full-dimensional hull and 0 expressible with strictly positive weights on
/// every point).
bool origin_in_interior(const Matrix& points, double tol = 1e-9);

}  // namespace rssa
