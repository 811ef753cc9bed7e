#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace rssa {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A point x in the state space X.
using StateVector = Eigen::VectorXd;
/// A control input u. Never clamped implicitly; see Box::contains.
using ControlVector = Eigen::VectorXd;

class SingularMassMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Axis-aligned box [lower, upper], used for both X and U.
struct Box {
  Vector lower;
  Vector upper;

  Box() = default;
  Box(Vector lo, Vector hi);
  static Box symmetric(const Vector& half_width);

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vector& v, double tol = 0.0) const;
  Vector center() const { return 0.5 * (lower + upper); }
  Vector width() const { return upper - lower; }
  /// All 2^d corners, in binary order of the coordinate index.
  std::vector<Vector> corners() const;
  /// Box scaled about its center by `factor`.
  Box scaled(double factor) const;
};

/// Row-major stacking of the rows of g: out[i*m + j] = g(i, j).
Vector flatten_g(const Matrix& g);
Matrix unflatten_g(const Vector& g_flat, int n, int m);

/// One realization (f, g) of the uncertain control-affine model at a state.
class DynamicsSample {
 public:
  DynamicsSample() = default;
  DynamicsSample(Vector f, Matrix g);

  const Vector& f() const { return f_; }
  const Matrix& g() const { return g_; }
  const Vector& g_flat() const { return g_flat_; }
  int n() const { return static_cast<int>(f_.size()); }
  int m() const { return static_cast<int>(g_.cols()); }

  /// f + g u.
  Vector xdot(const Vector& u) const { return f_ + g_ * u; }

 private:
  Vector f_;
  Matrix g_;
  Vector g_flat_;
};

/// Convex hull of a finite vertex list (V-representation). Vertices are the
/// columns of a dim x k matrix.
class PolytopeSet {
 public:
  PolytopeSet() = default;
  explicit PolytopeSet(Matrix vertices);
  explicit PolytopeSet(const std::vector<Vector>& vertices);

  const Matrix& vertices() const { return vertices_; }
  Vector vertex(std::size_t i) const { return vertices_.col(static_cast<Eigen::Index>(i)); }
  int dim() const { return static_cast<int>(vertices_.rows()); }
  std::size_t size() const { return static_cast<std::size_t>(vertices_.cols()); }

  /// max over the hull of w'v; attained at a vertex.
  double support(const Vector& w) const;
  /// Index of the maximizing vertex of w'v (lowest index on ties).
  std::size_t argmax(const Vector& w) const;
  /// Hull membership by LP feasibility.
  bool contains(const Vector& p, double tol = 1e-9) const;

 private:
  Matrix vertices_;
};

/// {v : (v - mu)' Q^{-1} (v - mu) <= dof} with Q symmetric positive definite.
class EllipsoidSet {
 public:
  EllipsoidSet() = default;
  /// Throws std::invalid_argument if Q is not symmetric or dof <= 0. A Q that
  /// fails Cholesky is regularized with eps*I, eps = 1e-10 * trace(Q) / d.
  EllipsoidSet(Vector mu, Matrix Q, double dof);

  const Vector& mu() const { return mu_; }
  const Matrix& Q() const { return Q_; }
  double dof() const { return dof_; }
  int dim() const { return static_cast<int>(mu_.size()); }
  bool regularized() const { return regularized_; }

  /// (v - mu)' Q^{-1} (v - mu), computed with the Cholesky factor.
  double mahalanobis_sq(const Vector& v) const;
  bool contains(const Vector& v, double tol = 1e-9) const;
  /// w'mu + sqrt(dof * w'Qw).
  double support(const Vector& w) const;
  /// Lower-triangular L with L L' = dof * Q.
  Matrix scaled_factor() const;
  /// mu + scaled_factor() * z for ||z|| <= 1 maps the unit ball onto the set.
  Vector from_unit_ball(const Vector& z) const;

 private:
  Vector mu_;
  Matrix Q_;
  Matrix chol_l_;
  double dof_ = 1.0;
  bool regularized_ = false;
};

using BoundSet = std::variant<PolytopeSet, EllipsoidSet>;

int bound_dim(const BoundSet& set);
double bound_support(const BoundSet& set, const Vector& w);

/// Ranges V_f (scalar) and V_g (in R^m) of the Lie derivatives, plus the
/// right-hand side c of the robust constraint max_{v in V_g} v'u <= c.
struct LieDerivativeBounds {
  BoundSet v_f;
  BoundSet v_g;
  double c = 0.0;

  int m() const { return bound_dim(v_g); }
  double max_lf() const;
};

enum class SolveStatus { Optimal, InfeasibleEmptyUr, InfeasibleControlLimits };

std::string to_string(SolveStatus s);
inline bool is_infeasible(SolveStatus s) { return s != SolveStatus::Optimal; }

struct RobustControlResult {
  ControlVector u;
  SolveStatus status = SolveStatus::Optimal;
  int cuts_used = 0;
  int iterations = 0;
  /// Max violation of the audited robust constraint at exit.
  double residual = 0.0;
};

}  // namespace rssa
