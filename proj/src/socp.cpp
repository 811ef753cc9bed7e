#include "rssa/socp.hpp"

#include <cmath>
#include <functional>
#include <limits>

namespace rssa {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

int dim_of(const SocpProblem& p) { return static_cast<int>(p.q.size()); }

double barrier_degree(const SocpProblem& p) {
  return static_cast<double>(p.A.rows()) + 2.0 * static_cast<double>(p.cones.size());
}

double objective(const SocpProblem& p, const Vector& y) {
  double v = p.q.dot(y);
  if (p.P.size() > 0) v += 0.5 * y.dot(p.P * y);
  return v;
}

// Barrier value, or +inf outside the strict interior.
double barrier(const SocpProblem& p, const Vector& y) {
  double phi = 0.0;
  for (Eigen::Index i = 0; i < p.A.rows(); ++i) {
    const double s = p.b(i) - p.A.row(i).dot(y);
    if (!(s > 0.0)) return kInf;
    phi -= std::log(s);
  }
  for (const auto& c : p.cones) {
    const double t = c.e.dot(y) + c.h;
    if (!(t > 0.0)) return kInf;
    const Vector w = c.B * y + c.d;
    const double gap = t * t - w.squaredNorm();
    if (!(gap > 0.0)) return kInf;
    phi -= std::log(gap);
  }
  return phi;
}

void barrier_derivatives(const SocpProblem& p, const Vector& y, Vector* grad, Matrix* hess) {
  const int n = dim_of(p);
  grad->setZero(n);
  hess->setZero(n, n);
  for (Eigen::Index i = 0; i < p.A.rows(); ++i) {
    const Vector a = p.A.row(i).transpose();
    const double s = p.b(i) - a.dot(y);
    *grad += a / s;
    *hess += a * a.transpose() / (s * s);
  }
  for (const auto& c : p.cones) {
    const double t = c.e.dot(y) + c.h;
    const Vector w = c.B * y + c.d;
    const double gap = t * t - w.squaredNorm();
    const Vector dg = 2.0 * t * c.e - 2.0 * c.B.transpose() * w;
    const Matrix d2g = 2.0 * c.e * c.e.transpose() - 2.0 * c.B.transpose() * c.B;
    *grad -= dg / gap;
    *hess += dg * dg.transpose() / (gap * gap) - d2g / gap;
  }
}

// Minimizes tau * objective + barrier from a strictly feasible y.
int center(const SocpProblem& p, double tau, Vector* y, int max_newton) {
  const int n = dim_of(p);
  Vector bg;
  Matrix bh;
  int it = 0;
  for (; it < max_newton; ++it) {
    barrier_derivatives(p, *y, &bg, &bh);
    Vector g = tau * p.q + bg;
    Matrix H = bh;
    if (p.P.size() > 0) {
      g += tau * (p.P * *y);
      H += tau * p.P;
    }
    H += 1e-14 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff()) * Matrix::Identity(n, n);
    const Vector dy = -H.ldlt().solve(g);
    const double dec = -g.dot(dy);
    if (!(dec > 1e-14)) break;
    const double f0 = tau * objective(p, *y) + barrier(p, *y);
    double step = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector trial = *y + step * dy;
      const double f1 = tau * objective(p, trial) + barrier(p, trial);
      if (std::isfinite(f1) && f1 <= f0 - 0.25 * step * dec) {
        *y = trial;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    if (!moved || dec < 1e-12) break;
  }
  return it + 1;
}

struct BarrierRun {
  Vector y;
  int newton = 0;
  double gap = 0.0;
};

BarrierRun run_barrier(const SocpProblem& p, Vector y, const SocpOptions& opt,
                       const std::function<bool(const Vector&)>& stop_early = nullptr) {
  const double theta = std::max(1.0, barrier_degree(p));
  BarrierRun out;
  double tau = 1.0;
  for (int outer = 0; outer < opt.max_outer; ++outer) {
    out.newton += center(p, tau, &y, opt.max_newton);
    out.gap = theta / tau;
    if (stop_early && stop_early(y)) break;
    if (out.gap < opt.gap_tol) break;
    tau *= opt.tau_growth;
  }
  out.y = std::move(y);
  return out;
}

}  // namespace

double socp_min_slack(const SocpProblem& p, const Vector& y) {
  double slack = kInf;
  for (Eigen::Index i = 0; i < p.A.rows(); ++i) slack = std::min(slack, p.b(i) - p.A.row(i).dot(y));
  for (const auto& c : p.cones) {
    slack = std::min(slack, c.e.dot(y) + c.h - (c.B * y + c.d).norm());
  }
  return slack;
}

SocpResult solve_socp(const SocpProblem& p, const Vector* start, const SocpOptions& opt) {
  const int n = dim_of(p);
  if (p.A.rows() != p.b.size() || (p.A.rows() > 0 && p.A.cols() != n)) {
    throw std::invalid_argument("solve_socp: linear constraint shape mismatch");
  }
  SocpResult res;
  Vector y = start ? *start : Vector::Zero(n);
  int newton = 0;

  if (!std::isfinite(barrier(p, y))) {
    // Phase 1 over (y, s): min s, every constraint relaxed by s, s >= -1.
    SocpProblem ph;
    ph.q = Vector::Zero(n + 1);
    ph.q(n) = 1.0;
    ph.A = Matrix::Zero(p.A.rows() + 1, n + 1);
    ph.b = Vector::Zero(p.A.rows() + 1);
    if (p.A.rows() > 0) {
      ph.A.topLeftCorner(p.A.rows(), n) = p.A;
      ph.A.block(0, n, p.A.rows(), 1).setConstant(-1.0);
      ph.b.head(p.A.rows()) = p.b;
    }
    ph.A(p.A.rows(), n) = -1.0;
    ph.b(p.A.rows()) = 1.0;
    for (const auto& c : p.cones) {
      SocConstraint cc;
      cc.B = Matrix::Zero(c.B.rows(), n + 1);
      cc.B.leftCols(n) = c.B;
      cc.d = c.d;
      cc.e = Vector::Zero(n + 1);
      cc.e.head(n) = c.e;
      cc.e(n) = 1.0;
      cc.h = c.h;
      ph.cones.push_back(std::move(cc));
    }
    Vector z(n + 1);
    z.head(n) = y;
    z(n) = std::max(0.0, -socp_min_slack(p, y)) + 1.0;
    const BarrierRun run =
        run_barrier(ph, z, opt, [&](const Vector& v) { return socp_min_slack(p, v.head(n)) > 0.0 &&
                                                              std::isfinite(barrier(p, v.head(n))) &&
                                                              v(n) < -1e-3; });
    newton += run.newton;
    y = run.y.head(n);
    if (!std::isfinite(barrier(p, y))) {
      res.status = SocpStatus::Infeasible;
      res.y = y;
      res.newton_iterations = newton;
      res.gap = run.gap;
      return res;
    }
  }

  const BarrierRun run = run_barrier(p, y, opt);
  res.status = SocpStatus::Optimal;
  res.y = run.y;
  res.newton_iterations = newton + run.newton;
  res.gap = run.gap;
  return res;
}

}  // namespace rssa
