#include "rssa/rssa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rssa/lp.hpp"

namespace rssa {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_dims(int m, const Vector& u_ref, const Box& box) {
  if (u_ref.size() != m) throw std::invalid_argument("rssa: u_ref dimension != m");
  if (box.dim() != m) throw std::invalid_argument("rssa: control box dimension != m");
}

RobustControlResult finish(RobustControlResult r, const BoundSet& v_g, double c) {
  r.residual = std::max(0.0, bound_support(v_g, r.u) - c);
  return r;
}

// max over the box of -w'u.
double box_support_neg(const Vector& w, const Box& box) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < w.size(); ++i) h += std::max(-w(i) * box.lower(i), -w(i) * box.upper(i));
  return h;
}

double cross(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Counter-clockwise hull, collinear points dropped.
std::vector<Eigen::Vector2d> hull_2d(const Matrix& V) {
  std::vector<Eigen::Vector2d> pts(static_cast<std::size_t>(V.cols()));
  for (Eigen::Index k = 0; k < V.cols(); ++k) pts[k] = V.col(k);
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Eigen::Vector2d> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

// min over hull(V) of box_support_neg; the function is linear on each
// orthant, so the minimum sits at a hull vertex, an edge/axis crossing or 0.
double min_box_support_over_hull(const Matrix& V, const Box& box) {
  if (V.rows() == 1) {
    const double lo = V.minCoeff(), hi = V.maxCoeff();
    double best = std::min(box_support_neg(Vector::Constant(1, lo), box),
                           box_support_neg(Vector::Constant(1, hi), box));
    if (lo <= 0.0 && hi >= 0.0) best = std::min(best, 0.0);
    return best;
  }
  const auto h = hull_2d(V);
  double best = kInf;
  auto eval = [&](const Eigen::Vector2d& w) { best = std::min(best, box_support_neg(Vector(w), box)); };
  for (const auto& p : h) eval(p);
  const std::size_t nh = h.size();
  const std::size_t edges = nh < 2 ? 0 : (nh == 2 ? 1 : nh);
  for (std::size_t i = 0; i < edges; ++i) {
    const Eigen::Vector2d& a = h[i];
    const Eigen::Vector2d& b = h[(i + 1) % nh];
    for (int ax = 0; ax < 2; ++ax) {
      if ((a(ax) < 0.0 && b(ax) > 0.0) || (a(ax) > 0.0 && b(ax) < 0.0)) {
        const double t = a(ax) / (a(ax) - b(ax));
        eval(a + t * (b - a));
      }
    }
  }
  if (nh >= 3) {
    bool inside = true;
    const Eigen::Vector2d o = Eigen::Vector2d::Zero();
    for (std::size_t i = 0; i < nh && inside; ++i) inside = cross(h[i], h[(i + 1) % nh], o) >= 0.0;
    if (inside) best = std::min(best, 0.0);
  }
  return best;
}

// Square-root factor B with B'B = dof * Q, robust to a singular Q.
Matrix cone_factor(const EllipsoidSet& e) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(e.Q());
  const Vector lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return std::sqrt(e.dof()) * lam.asDiagonal() * es.eigenvectors().transpose();
}

Matrix box_rows(const Box& box, Vector* b) {
  const Eigen::Index m = box.dim();
  Matrix A(2 * m, m);
  A.topRows(m) = Matrix::Identity(m, m);
  A.bottomRows(m) = -Matrix::Identity(m, m);
  b->resize(2 * m);
  b->head(m) = box.upper;
  b->tail(m) = -box.lower;
  return A;
}

}  // namespace

RobustControlResult solve_polytope_lie(const PolytopeSet& v_g, double c, const Vector& u_ref,
                                       const Box& box, const RssaOptions& opt) {
  const Matrix& V = v_g.vertices();
  const int m = v_g.dim();
  check_dims(m, u_ref, box);
  const int K = static_cast<int>(V.cols());
  RobustControlResult res;
  res.u = u_ref;

  // Necessary condition for a non-empty robust set.
  if (c < 0.0 && origin_in_interior(V)) {
    res.status = SolveStatus::InfeasibleEmptyUr;
    return finish(res, v_g, c);
  }

  const int max_iters = opt.max_iters > 0 ? opt.max_iters : K;
  std::vector<int> cuts{static_cast<int>(v_g.argmax(u_ref))};
  std::vector<char> in_cut(static_cast<std::size_t>(K), 0);
  in_cut[cuts.front()] = 1;

  QpProblem qp;
  qp.u_ref = u_ref;
  qp.box = box;
  bool converged = false;
  for (int it = 0; it < max_iters; ++it) {
    res.iterations = it + 1;
    qp.A.resize(static_cast<Eigen::Index>(cuts.size()), m);
    for (std::size_t j = 0; j < cuts.size(); ++j) qp.A.row(static_cast<Eigen::Index>(j)) = V.col(cuts[j]).transpose();
    qp.b = Vector::Constant(static_cast<Eigen::Index>(cuts.size()), c);
    const QpResult q = solve_qp(qp, opt.qp_tol);
    res.cuts_used = static_cast<int>(cuts.size());
    if (q.status == QpStatus::Infeasible) {
      // A subset of the vertex constraints is already infeasible.
      res.status = (c < 0.0 && v_g.contains(Vector::Zero(m))) ? SolveStatus::InfeasibleEmptyUr
                                                               : SolveStatus::InfeasibleControlLimits;
      return finish(res, v_g, c);
    }
    res.u = q.u;
    if (opt.objective_trace) opt.objective_trace->push_back((q.u - u_ref).squaredNorm());
    Eigen::Index worst = 0;
    const double most = (V.transpose() * q.u).maxCoeff(&worst);
    if (most <= c + opt.tol) {
      converged = true;
      break;
    }
    if (in_cut[worst]) break;
    in_cut[worst] = 1;
    cuts.push_back(static_cast<int>(worst));
  }

  if (!converged) {
    // Iteration cap or round-off: fall back to every vertex at once.
    qp.A = V.transpose();
    qp.b = Vector::Constant(K, c);
    const QpResult q = solve_qp(qp, opt.qp_tol);
    res.cuts_used = K;
    if (q.status == QpStatus::Infeasible) {
      res.status = (c < 0.0 && v_g.contains(Vector::Zero(m))) ? SolveStatus::InfeasibleEmptyUr
                                                               : SolveStatus::InfeasibleControlLimits;
      return finish(res, v_g, c);
    }
    res.u = q.u;
  }
  res.status = SolveStatus::Optimal;
  return finish(res, v_g, c);
}

RobustControlResult solve_ellipsoid_lie(const EllipsoidSet& v_g, double c, const Vector& u_ref,
                                        const Box& box, const RssaOptions& opt) {
  const int m = v_g.dim();
  check_dims(m, u_ref, box);
  RobustControlResult res;
  res.u = u_ref;

  if (opt.accept_reference && box.contains(u_ref) && v_g.support(u_ref) <= c) {
    res.status = SolveStatus::Optimal;
    return finish(res, v_g, c);
  }
  // Robust set is empty iff c < 0 and 0 is in V_g.
  if (c < 0.0 && v_g.contains(Vector::Zero(m), 0.0)) {
    res.status = SolveStatus::InfeasibleEmptyUr;
    return finish(res, v_g, c);
  }

  SocpProblem p;
  p.P = 2.0 * Matrix::Identity(m, m);
  p.q = -2.0 * u_ref;
  p.A = box_rows(box, &p.b);
  SocConstraint cone;
  cone.B = cone_factor(v_g);
  cone.d = Vector::Zero(m);
  cone.e = -v_g.mu();
  cone.h = c;
  p.cones.push_back(std::move(cone));
  const Vector start = box.center();
  const SocpResult s = solve_socp(p, &start, opt.socp);
  res.iterations = s.newton_iterations;
  res.cuts_used = 1;
  if (s.status == SocpStatus::Infeasible) {
    res.status = SolveStatus::InfeasibleControlLimits;
    return finish(res, v_g, c);
  }
  res.u = s.y;
  res.status = SolveStatus::Optimal;
  return finish(res, v_g, c);
}

RobustControlResult solve_lie(const LieDerivativeBounds& lie, const Vector& u_ref, const Box& box,
                              const RssaOptions& opt) {
  if (const auto* poly = std::get_if<PolytopeSet>(&lie.v_g)) {
    return solve_polytope_lie(*poly, lie.c, u_ref, box, opt);
  }
  return solve_ellipsoid_lie(std::get<EllipsoidSet>(lie.v_g), lie.c, u_ref, box, opt);
}

RobustControlResult polytope_rssa(const RobotModel& model, const StateVector& x,
                                  const SafetyIndexParams& params, const UncertaintyBound& bound,
                                  const ControlVector& u_ref, const Box& box, const RssaOptions& opt) {
  if (bound.kind != BoundKind::Polytope) throw std::invalid_argument("polytope_rssa: bound is not a polytope");
  const LieDerivativeBounds lie = lie_bounds_at(bound, params, model, x);
  return solve_polytope_lie(std::get<PolytopeSet>(lie.v_g), lie.c, u_ref, box, opt);
}

RobustControlResult ellipsoid_rssa(const RobotModel& model, const StateVector& x,
                                   const SafetyIndexParams& params, const UncertaintyBound& bound,
                                   const ControlVector& u_ref, const Box& box, const RssaOptions& opt) {
  if (bound.kind != BoundKind::Ellipsoid) throw std::invalid_argument("ellipsoid_rssa: bound is not an ellipsoid");
  const LieDerivativeBounds lie = lie_bounds_at(bound, params, model, x);
  return solve_ellipsoid_lie(std::get<EllipsoidSet>(lie.v_g), lie.c, u_ref, box, opt);
}

RobustControlResult constant_rssa(const RobotModel& model, const StateVector& x,
                                  const SafetyIndexParams& params, double d_res,
                                  const DynamicsSample& mean, const ControlVector& u_ref,
                                  const Box& box, const RssaOptions& opt) {
  if (!(d_res >= 0.0)) throw std::invalid_argument("constant_rssa: d_res must be >= 0");
  const UncertaintyBound bound = build_constant_bound({mean}, d_res);
  const LieDerivativeBounds lie = lie_bounds_at(bound, params, model, x);
  return solve_polytope_lie(std::get<PolytopeSet>(lie.v_g), lie.c, u_ref, box, opt);
}

RobustControlResult robust_safe_control(const RobotModel& model, const StateVector& x,
                                        const SafetyIndexParams& params, const UncertaintyBound& bound,
                                        const ControlVector& u_ref, const Box& box,
                                        const RssaOptions& opt) {
  switch (bound.kind) {
    case BoundKind::Polytope:
      return polytope_rssa(model, x, params, bound, u_ref, box, opt);
    case BoundKind::Ellipsoid:
      return ellipsoid_rssa(model, x, params, bound, u_ref, box, opt);
    case BoundKind::Constant:
      return constant_rssa(model, x, params, bound.d_res, bound.mean_model, u_ref, box, opt);
  }
  throw std::logic_error("unreachable");
}

double worst_case_margin(const LieDerivativeBounds& lie, const Vector& u) {
  return bound_support(lie.v_g, u) - lie.c;
}

MinimaxResult min_worst_case(const BoundSet& v_g, const Box& box) {
  const int m = bound_dim(v_g);
  if (box.dim() != m) throw std::invalid_argument("min_worst_case: box dimension != m");
  MinimaxResult out;
  if (const auto* poly = std::get_if<PolytopeSet>(&v_g)) {
    const Matrix& V = poly->vertices();
    const Eigen::Index K = V.cols();
    // min t  s.t.  v_k'u - t <= 0,  u in box.
    LpProblem lp = LpProblem::free_variables(m + 1);
    lp.c(m) = 1.0;
    lp.A_ub = Matrix(K, m + 1);
    lp.A_ub.leftCols(m) = V.transpose();
    lp.A_ub.col(m).setConstant(-1.0);
    lp.b_ub = Vector::Zero(K);
    lp.lower.head(m) = box.lower;
    lp.upper.head(m) = box.upper;
    const LpResult r = solve_lp(lp);
    if (r.status != LpStatus::Optimal) throw std::runtime_error("min_worst_case: LP failed");
    out.u = r.x.head(m);
    out.value = poly->support(out.u);
    return out;
  }
  const auto& e = std::get<EllipsoidSet>(v_g);
  // min t  s.t.  ||B u|| <= t - mu'u,  u in box.
  SocpProblem p;
  p.q = Vector::Zero(m + 1);
  p.q(m) = 1.0;
  Vector bb;
  const Matrix Ab = box_rows(box, &bb);
  p.A = Matrix::Zero(Ab.rows(), m + 1);
  p.A.leftCols(m) = Ab;
  p.b = bb;
  SocConstraint cone;
  const Matrix B = cone_factor(e);
  cone.B = Matrix::Zero(B.rows(), m + 1);
  cone.B.leftCols(m) = B;
  cone.d = Vector::Zero(B.rows());
  cone.e = Vector::Zero(m + 1);
  cone.e.head(m) = -e.mu();
  cone.e(m) = 1.0;
  cone.h = 0.0;
  p.cones.push_back(std::move(cone));
  Vector start(m + 1);
  start.head(m) = box.center();
  start(m) = e.support(box.center()) + 1.0;
  const SocpResult s = solve_socp(p, &start);
  out.u = s.y.head(m);
  out.value = e.support(out.u);
  return out;
}

bool is_feasible_lie(const LieDerivativeBounds& lie, const Box& box, double eps) {
  const double target = lie.c - eps;
  if (const auto* poly = std::get_if<PolytopeSet>(&lie.v_g); poly && poly->dim() <= 2) {
    if (box.dim() != poly->dim()) throw std::invalid_argument("is_feasible: box dimension != m");
    // min_u max_v v'u = -min_{w in hull} max_u (-w'u).
    return -min_box_support_over_hull(poly->vertices(), box) <= target;
  }
  return min_worst_case(lie.v_g, box).value <= target + 1e-12 * std::max(1.0, std::abs(target));
}

bool is_feasible(const RobotModel& model, const StateVector& x, const SafetyIndexParams& params,
                 const UncertaintyBound& bound, const Box& box, double eps) {
  return is_feasible_lie(lie_bounds_at(bound, params, model, x), box, eps);
}

ControlVector safest_control(const LieDerivativeBounds& lie, const Box& box) {
  return min_worst_case(lie.v_g, box).u;
}

}  // namespace rssa
