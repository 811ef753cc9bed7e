#include "rssa/core.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <limits>

#include "rssa/lp.hpp"

namespace rssa {

Box::Box(Vector lo, Vector hi) : lower(std::move(lo)), upper(std::move(hi)) {
  if (lower.size() != upper.size()) throw std::invalid_argument("Box: dimension mismatch");
  for (Eigen::Index i = 0; i < lower.size(); ++i) {
    if (!(lower(i) <= upper(i))) throw std::invalid_argument("Box: lower > upper");
  }
}

Box Box::symmetric(const Vector& half_width) { return Box(-half_width, half_width); }

bool Box::contains(const Vector& v, double tol) const {
  if (v.size() != lower.size()) return false;
  return ((v.array() >= lower.array() - tol) && (v.array() <= upper.array() + tol)).all();
}

std::vector<Vector> Box::corners() const {
  const int d = dim();
  std::vector<Vector> out;
  out.reserve(std::size_t{1} << d);
  for (unsigned mask = 0; mask < (1u << d); ++mask) {
    Vector c(d);
    for (int i = 0; i < d; ++i) c(i) = (mask >> i) & 1u ? upper(i) : lower(i);
    out.push_back(std::move(c));
  }
  return out;
}

Box Box::scaled(double factor) const {
  const Vector mid = center();
  const Vector half = 0.5 * factor * width();
  return Box(mid - half, mid + half);
}

Vector flatten_g(const Matrix& g) {
  const Eigen::Index n = g.rows(), m = g.cols();
  Vector out(n * m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) out(i * m + j) = g(i, j);
  }
  return out;
}

Matrix unflatten_g(const Vector& g_flat, int n, int m) {
  if (g_flat.size() != static_cast<Eigen::Index>(n) * m) {
    throw std::invalid_argument("unflatten_g: size mismatch");
  }
  Matrix g(n, m);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) g(i, j) = g_flat(i * m + j);
  }
  return g;
}

DynamicsSample::DynamicsSample(Vector f, Matrix g) : f_(std::move(f)), g_(std::move(g)) {
  if (g_.rows() != f_.size()) throw std::invalid_argument("DynamicsSample: f/g row mismatch");
  g_flat_ = flatten_g(g_);
}

PolytopeSet::PolytopeSet(Matrix vertices) : vertices_(std::move(vertices)) {
  if (vertices_.cols() == 0) throw std::invalid_argument("PolytopeSet: needs at least one vertex");
  if (!vertices_.allFinite()) throw std::invalid_argument("PolytopeSet: non-finite vertex");
}

namespace {
Matrix stack_columns(const std::vector<Vector>& vs) {
  if (vs.empty()) throw std::invalid_argument("PolytopeSet: needs at least one vertex");
  Matrix out(vs.front().size(), static_cast<Eigen::Index>(vs.size()));
  for (std::size_t i = 0; i < vs.size(); ++i) {
    if (vs[i].size() != out.rows()) throw std::invalid_argument("PolytopeSet: inconsistent vertex dimension");
    out.col(static_cast<Eigen::Index>(i)) = vs[i];
  }
  return out;
}
}  // namespace

PolytopeSet::PolytopeSet(const std::vector<Vector>& vertices) : PolytopeSet(stack_columns(vertices)) {}

std::size_t PolytopeSet::argmax(const Vector& w) const {
  Eigen::Index best = 0;
  (w.transpose() * vertices_).maxCoeff(&best);
  return static_cast<std::size_t>(best);
}

double PolytopeSet::support(const Vector& w) const { return (w.transpose() * vertices_).maxCoeff(); }

bool PolytopeSet::contains(const Vector& p, double tol) const {
  const int dim_ = dim();
  if (p.size() != dim_) return false;
  const int k = static_cast<int>(size());
  // Feasibility of sum l_i v_i = p, sum l_i = 1, l >= 0, with slack e >= |residual|.
  // min e  s.t.  -e <= V l - p <= e.
  LpProblem lp;
  lp.c = Vector::Zero(k + 1);
  lp.c(k) = 1.0;
  lp.A_ub = Matrix::Zero(2 * dim_, k + 1);
  lp.b_ub = Vector::Zero(2 * dim_);
  for (int i = 0; i < k; ++i) {
    lp.A_ub.block(0, i, dim_, 1) = vertices_.col(i);
    lp.A_ub.block(dim_, i, dim_, 1) = -vertices_.col(i);
  }
  lp.A_ub.block(0, k, dim_, 1).setConstant(-1.0);
  lp.A_ub.block(dim_, k, dim_, 1).setConstant(-1.0);
  lp.b_ub.head(dim_) = p;
  lp.b_ub.tail(dim_) = -p;
  lp.A_eq = Matrix::Zero(1, k + 1);
  lp.A_eq.block(0, 0, 1, k).setOnes();
  lp.b_eq = Vector::Ones(1);
  lp.lower = Vector::Zero(k + 1);
  lp.upper = Vector::Constant(k + 1, std::numeric_limits<double>::infinity());
  const LpResult r = solve_lp(lp);
  return r.status == LpStatus::Optimal && r.objective <= tol * std::max(1.0, p.cwiseAbs().maxCoeff());
}

EllipsoidSet::EllipsoidSet(Vector mu, Matrix Q, double dof)
    : mu_(std::move(mu)), Q_(std::move(Q)), dof_(dof) {
  const Eigen::Index d = mu_.size();
  if (Q_.rows() != d || Q_.cols() != d) throw std::invalid_argument("EllipsoidSet: Q shape mismatch");
  if (!(dof_ > 0.0)) throw std::invalid_argument("EllipsoidSet: dof must be positive");
  const double scale = std::max(Q_.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
  if ((Q_ - Q_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("EllipsoidSet: Q not symmetric");
  }
  Q_ = 0.5 * (Q_ + Q_.transpose());
  Eigen::LLT<Matrix> llt(Q_);
  if (llt.info() != Eigen::Success || !llt.matrixL().toDenseMatrix().allFinite() ||
      (llt.matrixL().toDenseMatrix().diagonal().array() <= 0).any()) {
    double eps = 1e-10 * Q_.trace() / static_cast<double>(d);
    if (!(eps > 0.0)) eps = 1e-14;
    // Indefinite inputs beyond round-off need more than eps.
    Eigen::SelfAdjointEigenSolver<Matrix> es(Q_);
    const double lam_min = es.eigenvalues().minCoeff();
    if (lam_min < 0.0) Q_ += (-lam_min) * Matrix::Identity(d, d);
    Q_ += eps * Matrix::Identity(d, d);
    llt.compute(Q_);
    if (llt.info() != Eigen::Success) throw std::invalid_argument("EllipsoidSet: Q not positive definite");
    regularized_ = true;
    spdlog::debug("EllipsoidSet: regularized Q with eps={:.3e} (d={})", eps, d);
  }
  chol_l_ = llt.matrixL();
}

double EllipsoidSet::mahalanobis_sq(const Vector& v) const {
  const Vector z = chol_l_.triangularView<Eigen::Lower>().solve(v - mu_);
  return z.squaredNorm();
}

bool EllipsoidSet::contains(const Vector& v, double tol) const {
  return mahalanobis_sq(v) <= dof_ * (1.0 + tol) + tol;
}

double EllipsoidSet::support(const Vector& w) const {
  const double quad = std::max(0.0, w.dot(Q_ * w));
  return w.dot(mu_) + std::sqrt(dof_ * quad);
}

Matrix EllipsoidSet::scaled_factor() const { return std::sqrt(dof_) * chol_l_; }

Vector EllipsoidSet::from_unit_ball(const Vector& z) const { return mu_ + scaled_factor() * z; }

int bound_dim(const BoundSet& set) {
  return std::visit([](const auto& s) { return s.dim(); }, set);
}

double bound_support(const BoundSet& set, const Vector& w) {
  return std::visit([&](const auto& s) { return s.support(w); }, set);
}

double LieDerivativeBounds::max_lf() const { return bound_support(v_f, Vector::Ones(1)); }

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal:
      return "optimal";
    case SolveStatus::InfeasibleEmptyUr:
      return "infeasible_empty_ur";
    case SolveStatus::InfeasibleControlLimits:
      return "infeasible_control_limits";
  }
  return "unknown";
}

}  // namespace rssa
