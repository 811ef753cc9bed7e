#include "rssa/qp.hpp"

#include <cmath>
#include <limits>

namespace rssa {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// All rows as a' u <= b, box rows appended.
void stack_rows(const QpProblem& p, Matrix* A, Vector* b) {
  const Eigen::Index m = p.u_ref.size();
  const Eigen::Index k = p.A.rows();
  const Eigen::Index nb = p.use_box ? 2 * m : 0;
  A->resize(k + nb, m);
  b->resize(k + nb);
  if (k > 0) {
    A->topRows(k) = p.A;
    b->head(k) = p.b;
  }
  if (nb > 0) {
    A->block(k, 0, m, m) = Matrix::Identity(m, m);
    b->segment(k, m) = p.box.upper;
    A->block(k + m, 0, m, m) = -Matrix::Identity(m, m);
    b->segment(k + m, m) = -p.box.lower;
  }
}

}  // namespace

QpResult solve_qp(const QpProblem& p, double tol) {
  const Eigen::Index m = p.u_ref.size();
  if (p.A.rows() != p.b.size() || (p.A.rows() > 0 && p.A.cols() != m)) {
    throw std::invalid_argument("solve_qp: constraint shape mismatch");
  }
  if (p.use_box && p.box.dim() != m) throw std::invalid_argument("solve_qp: box dimension mismatch");

  Matrix A;
  Vector b;
  stack_rows(p, &A, &b);
  const int rows = static_cast<int>(A.rows());

  QpResult res;
  res.lambda = Vector::Zero(rows);
  Vector u = p.u_ref;
  // Working set and its multipliers, in the scaling of 1/2 ||u - u_ref||^2.
  std::vector<int> active;
  std::vector<double> mult;
  std::vector<char> in_active(static_cast<std::size_t>(rows), 0);

  auto row_scale = [&](int i) { return std::max(1.0, std::abs(b(i)) + A.row(i).cwiseAbs().sum()); };

  const int max_iter = 10 * (rows + static_cast<int>(m)) + 20;
  for (int iter = 0; iter < max_iter; ++iter) {
    res.iterations = iter + 1;
    // Most violated row, in relative terms.
    int pidx = -1;
    double worst = 0.0;
    for (int i = 0; i < rows; ++i) {
      if (in_active[i]) continue;
      const double v = (A.row(i).dot(u) - b(i)) / row_scale(i);
      if (v > tol && v > worst) {
        worst = v;
        pidx = i;
      }
    }
    if (pidx < 0) {
      res.status = QpStatus::Optimal;
      break;
    }

    const Vector np = -A.row(pidx).transpose();  // constraint as np' u >= -b
    double s_p = np.dot(u) + b(pidx);             // < 0 while violated
    double u_p = 0.0;
    bool added = false;
    while (!added) {
      const int q = static_cast<int>(active.size());
      Matrix N(m, q);
      for (int j = 0; j < q; ++j) N.col(j) = -A.row(active[j]).transpose();
      Vector r = Vector::Zero(q);
      Vector z = np;
      if (q > 0) {
        r = N.colPivHouseholderQr().solve(np);
        z = q >= m ? Vector::Zero(m) : Vector(np - N * r);
      }
      const bool z_zero = z.norm() <= 1e-12 * std::max(1.0, np.norm());

      double t1 = kInf;
      int drop = -1;
      for (int j = 0; j < q; ++j) {
        if (r(j) > 1e-14) {
          const double ratio = mult[j] / r(j);
          if (ratio < t1) {
            t1 = ratio;
            drop = j;
          }
        }
      }
      const double t2 = z_zero ? kInf : -s_p / z.dot(np);
      const double t = std::min(t1, t2);
      if (!std::isfinite(t)) {
        res.status = QpStatus::Infeasible;
        res.u = u;
        res.violation = worst;
        return res;
      }
      for (int j = 0; j < q; ++j) mult[j] -= t * r(j);
      u_p += t;
      if (!z_zero) {
        u += t * z;
        s_p += t * z.dot(np);
      }
      if (t2 <= t1) {
        active.push_back(pidx);
        mult.push_back(u_p);
        in_active[pidx] = 1;
        added = true;
        // After a full step u is the projection of u_ref onto the active
        // affine set; recomputing it removes drift from long steps.
        const int qa = static_cast<int>(active.size());
        Matrix As(qa, m);
        Vector bs(qa);
        for (int j = 0; j < qa; ++j) {
          As.row(j) = A.row(active[j]);
          bs(j) = b(active[j]);
        }
        u = p.u_ref - As.transpose() * (As * As.transpose()).ldlt().solve(As * p.u_ref - bs);
      } else {
        in_active[active[drop]] = 0;
        active.erase(active.begin() + drop);
        mult.erase(mult.begin() + drop);
      }
    }
  }

  res.u = u;
  for (std::size_t j = 0; j < active.size(); ++j) res.lambda(active[j]) = 2.0 * mult[j];
  double viol = 0.0;
  for (int i = 0; i < rows; ++i) viol = std::max(viol, A.row(i).dot(u) - b(i));
  res.violation = viol;
  return res;
}

double qp_stationarity(const QpProblem& p, const QpResult& r) {
  Matrix A;
  Vector b;
  stack_rows(p, &A, &b);
  return (2.0 * (r.u - p.u_ref) + A.transpose() * r.lambda).norm();
}

}  // namespace rssa
