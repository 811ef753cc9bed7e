#include "rssa/lp.hpp"

#include <cmath>
#include <limits>

namespace rssa {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Standard-form tableau: min c'y, A y = b, y >= 0, b >= 0.
class Tableau {
 public:
  Tableau(const Matrix& A, const Vector& b, double tol) : tol_(tol) {
    rows_ = static_cast<int>(A.rows());
    cols_ = static_cast<int>(A.cols());
    // Columns: structural [0, cols_), artificials [cols_, cols_ + rows_), rhs.
    t_ = Matrix::Zero(rows_ + 1, cols_ + rows_ + 1);
    t_.block(0, 0, rows_, cols_) = A;
    for (int i = 0; i < rows_; ++i) {
      t_(i, cols_ + i) = 1.0;
      t_(i, rhs()) = b(i);
    }
    basis_.resize(rows_);
    for (int i = 0; i < rows_; ++i) basis_[i] = cols_ + i;
  }

  // Returns false if phase 1 proves infeasibility.
  bool phase1() {
    // Objective row: minimize sum of artificials, priced out.
    t_.row(rows_).setZero();
    for (int i = 0; i < rows_; ++i) {
      t_.row(rows_) -= t_.row(i);
      t_(rows_, cols_ + i) = 0.0;
    }
    run(cols_ + rows_);
    if (-t_(rows_, rhs()) > tol_ * std::max(1.0, t_.col(rhs()).head(rows_).cwiseAbs().maxCoeff())) {
      return false;
    }
    // Drive any remaining artificial out of the basis.
    for (int i = 0; i < rows_; ++i) {
      if (basis_[i] < cols_) continue;
      int enter = -1;
      for (int j = 0; j < cols_; ++j) {
        if (std::abs(t_(i, j)) > tol_) {
          enter = j;
          break;
        }
      }
      if (enter >= 0) pivot(i, enter);
    }
    return true;
  }

  // Returns false when unbounded.
  bool phase2(const Vector& c) {
    t_.row(rows_).setZero();
    t_.row(rows_).head(cols_) = c.transpose();
    for (int i = 0; i < rows_; ++i) {
      const int bj = basis_[i];
      if (bj < cols_ && c(bj) != 0.0) t_.row(rows_) -= c(bj) * t_.row(i);
    }
    // Artificials may not re-enter.
    return run(cols_);
  }

  Vector solution() const {
    Vector y = Vector::Zero(cols_);
    for (int i = 0; i < rows_; ++i) {
      if (basis_[i] < cols_) y(basis_[i]) = t_(i, rhs());
    }
    return y;
  }

 private:
  int rhs() const { return cols_ + rows_; }

  bool run(int allowed_cols) {
    const int max_pivots = 50 * (rows_ + cols_ + 10);
    for (int it = 0; it < max_pivots; ++it) {
      int enter = -1;
      for (int j = 0; j < allowed_cols; ++j) {
        if (t_(rows_, j) < -tol_) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      int leave = -1;
      double best = kInf;
      for (int i = 0; i < rows_; ++i) {
        if (t_(i, enter) > tol_) {
          const double ratio = t_(i, rhs()) / t_(i, enter);
          if (ratio < best - tol_ || (std::abs(ratio - best) <= tol_ && leave >= 0 && basis_[i] < basis_[leave])) {
            best = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    return true;
  }

  void pivot(int r, int c) {
    t_.row(r) /= t_(r, c);
    for (int i = 0; i <= rows_; ++i) {
      if (i != r && t_(i, c) != 0.0) t_.row(i) -= t_(i, c) * t_.row(r);
    }
    basis_[r] = c;
  }

  Matrix t_;
  std::vector<int> basis_;
  int rows_ = 0;
  int cols_ = 0;
  double tol_;
};

}  // namespace

LpProblem LpProblem::free_variables(int n) {
  LpProblem p;
  p.c = Vector::Zero(n);
  p.A_ub.resize(0, n);
  p.A_eq.resize(0, n);
  p.lower = Vector::Constant(n, -kInf);
  p.upper = Vector::Constant(n, kInf);
  return p;
}

LpResult solve_lp(const LpProblem& p, double tol) {
  const int n = static_cast<int>(p.c.size());
  const int n_ub = static_cast<int>(p.A_ub.rows());
  const int n_eq = static_cast<int>(p.A_eq.rows());

  // x_j = offset_j + sum_k map(j, k) * y_k with y >= 0.
  std::vector<std::vector<std::pair<int, double>>> map(n);
  Vector offset = Vector::Zero(n);
  int ny = 0;
  std::vector<std::pair<int, double>> range_rows;  // (y index, width)
  for (int j = 0; j < n; ++j) {
    const double lo = p.lower.size() ? p.lower(j) : -kInf;
    const double hi = p.upper.size() ? p.upper(j) : kInf;
    if (std::isfinite(lo)) {
      offset(j) = lo;
      map[j].push_back({ny, 1.0});
      if (std::isfinite(hi)) range_rows.push_back({ny, hi - lo});
      ++ny;
    } else if (std::isfinite(hi)) {
      offset(j) = hi;
      map[j].push_back({ny++, -1.0});
    } else {
      map[j].push_back({ny++, 1.0});
      map[j].push_back({ny++, -1.0});
    }
  }
  for (int j = 0; j < n; ++j) {
    const double lo = p.lower.size() ? p.lower(j) : -kInf;
    const double hi = p.upper.size() ? p.upper(j) : kInf;
    if (lo > hi) return {};
  }

  auto substitute = [&](const Matrix& A) {
    Matrix out = Matrix::Zero(A.rows(), ny);
    for (int j = 0; j < n; ++j) {
      for (const auto& [k, s] : map[j]) out.col(k) += s * A.col(j);
    }
    return out;
  };

  const int n_rows = n_ub + static_cast<int>(range_rows.size()) + n_eq;
  const int n_slack = n_ub + static_cast<int>(range_rows.size());
  Matrix A = Matrix::Zero(n_rows, ny + n_slack);
  Vector b = Vector::Zero(n_rows);
  int r = 0;
  if (n_ub > 0) {
    A.block(0, 0, n_ub, ny) = substitute(p.A_ub);
    b.head(n_ub) = p.b_ub - p.A_ub * offset;
    for (int i = 0; i < n_ub; ++i) A(i, ny + i) = 1.0;
    r = n_ub;
  }
  for (std::size_t k = 0; k < range_rows.size(); ++k, ++r) {
    A(r, range_rows[k].first) = 1.0;
    A(r, ny + r) = 1.0;
    b(r) = range_rows[k].second;
  }
  if (n_eq > 0) {
    A.block(r, 0, n_eq, ny) = substitute(p.A_eq);
    b.segment(r, n_eq) = p.b_eq - p.A_eq * offset;
  }
  for (int i = 0; i < n_rows; ++i) {
    if (b(i) < 0) {
      A.row(i) *= -1.0;
      b(i) *= -1.0;
    }
  }

  Vector cy = Vector::Zero(ny + n_slack);
  {
    Matrix c_row = p.c.transpose();
    cy.head(ny) = substitute(c_row).transpose();
  }

  Tableau tab(A, b, tol);
  LpResult result;
  if (!tab.phase1()) {
    result.status = LpStatus::Infeasible;
    return result;
  }
  if (!tab.phase2(cy)) {
    result.status = LpStatus::Unbounded;
    return result;
  }
  const Vector y = tab.solution();
  result.x = offset;
  for (int j = 0; j < n; ++j) {
    for (const auto& [k, s] : map[j]) result.x(j) += s * y(k);
  }
  result.status = LpStatus::Optimal;
  result.objective = p.c.dot(result.x);
  return result;
}

bool origin_in_interior(const Matrix& points, double tol) {
  const int d = static_cast<int>(points.rows());
  const int k = static_cast<int>(points.cols());
  if (k < d + 1) return false;

  // Full dimension: the differences to the first point span R^d.
  Matrix diffs(d, k - 1);
  for (int i = 1; i < k; ++i) diffs.col(i - 1) = points.col(i) - points.col(0);
  Eigen::ColPivHouseholderQR<Matrix> qr(diffs);
  qr.setThreshold(1e-12);
  if (qr.rank() < d) return false;

  // max s  s.t.  sum (mu_i + s) p_i = 0,  sum (mu_i + s) = 1,  mu, s >= 0.
  LpProblem lp;
  lp.c = Vector::Zero(k + 1);
  lp.c(k) = -1.0;
  lp.A_ub.resize(0, k + 1);
  lp.A_eq = Matrix::Zero(d + 1, k + 1);
  Vector sum = Vector::Zero(d);
  for (int i = 0; i < k; ++i) {
    lp.A_eq.block(0, i, d, 1) = points.col(i);
    lp.A_eq(d, i) = 1.0;
    sum += points.col(i);
  }
  lp.A_eq.block(0, k, d, 1) = sum;
  lp.A_eq(d, k) = static_cast<double>(k);
  lp.b_eq = Vector::Zero(d + 1);
  lp.b_eq(d) = 1.0;
  lp.lower = Vector::Zero(k + 1);
  lp.upper = Vector::Constant(k + 1, kInf);
  const LpResult r = solve_lp(lp);
  return r.status == LpStatus::Optimal && r.x(k) > tol;
}

}  // namespace rssa
