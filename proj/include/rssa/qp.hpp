#pragma once

#include <vector>

#include "rssa/core.hpp"

namespace rssa {

/// min ||u - u_ref||^2  s.t.  A u <= b  and (optionally) u in box.
struct QpProblem {
  Vector u_ref;
  Matrix A;
  Vector b;
  Box box;
  bool use_box = true;
};

enum class QpStatus { Optimal, Infeasible };

struct QpResult {
  QpStatus status = QpStatus::Infeasible;
  Vector u;
  /// Multipliers for the rows of A, then for the box rows (upper bounds first,
  /// then lower bounds). Zero for inactive rows.
  Vector lambda;
  int iterations = 0;
  /// Max primal violation at exit.
  double violation = 0.0;
};

/// Dual active-set method (Goldfarb-Idnani) specialised to the identity
/// Hessian. Infeasibility is certified when a violated row cannot be made
/// active by any dual step.
QpResult solve_qp(const QpProblem& p, double tol = 1e-9);

/// ||grad L|| for the returned multipliers: 2 (u - u_ref) + A' lambda_A + box terms.
double qp_stationarity(const QpProblem& p, const QpResult& r);

}  // namespace rssa
