#include "check.hpp"

#include <random>

#include "rssa/core.hpp"
#include "rssa/lp.hpp"

using namespace rssa;

TEST_CASE("FlattenG: RowMajor") {
  Matrix g(2, 2);
  g << 1, 2, 3, 4;
  CHECK_EQ(flatten_g(g), (Vector(4) << 1, 2, 3, 4).finished());
  CHECK_EQ(flatten_g(Matrix::Zero(2, 2)), Vector::Zero(4));
  CHECK_EQ(flatten_g(Matrix::Identity(2, 2)), (Vector(4) << 1, 0, 0, 1).finished());
}

TEST_CASE("FlattenG: RoundTripRandom") {
  std::mt19937 rng(3);
  for (int n = 1; n <= 4; ++n) {
    for (int m = 1; m <= 3; ++m) {
      Matrix g = Matrix::Random(n, m);
      CHECK_EQ(unflatten_g(flatten_g(g), n, m), g);
    }
  }
  CHECK_THROWS_AS(unflatten_g(Vector::Zero(5), 2, 2), std::invalid_argument);
}

TEST_CASE("DynamicsSample: FlatMatchesG") {
  Matrix g(3, 2);
  g << 1, 2, 3, 4, 5, 6;
  DynamicsSample s(Vector::Ones(3), g);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) CHECK_EQ(s.g_flat()(i * 2 + j), g(i, j));
  CHECK_EQ(s.xdot(Vector::Ones(2)), (Vector(3) << 4, 8, 12).finished());
}

TEST_CASE("Box: CornersAndScaling") {
  Box b((Vector(2) << -1, 0).finished(), (Vector(2) << 1, 2).finished());
  const auto cs = b.corners();
  REQUIRE_EQ(cs.size(), 4u);
  CHECK_EQ(cs[0], (Vector(2) << -1, 0).finished());
  CHECK_EQ(cs[3], (Vector(2) << 1, 2).finished());
  CHECK_UNARY(b.contains((Vector(2) << 0, 1).finished()));
  CHECK_UNARY_FALSE(b.contains((Vector(2) << 1.1, 1).finished()));
  const Box s = b.scaled(2.0);
  CHECK_DOUBLE_EQ(s.lower(0), -2.0);
  CHECK_DOUBLE_EQ(s.upper(1), 3.0);
  CHECK_THROWS_AS(Box((Vector(1) << 1).finished(), (Vector(1) << 0).finished()), std::invalid_argument);
}

TEST_CASE("EllipsoidSet: RejectsBadInput") {
  Matrix q(2, 2);
  q << 1, 0.5, 0, 1;
  CHECK_THROWS_AS(EllipsoidSet(Vector::Zero(2), q, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(EllipsoidSet(Vector::Zero(2), Matrix::Identity(2, 2), 0.0), std::invalid_argument);
}

TEST_CASE("EllipsoidSet: RegularizesSingular") {
  const Vector a = (Vector(2) << 1, 2).finished();
  EllipsoidSet e(Vector::Zero(2), a * a.transpose(), 1.0);
  CHECK_UNARY(e.regularized());
  CHECK_UNARY(e.contains(0.5 * a / a.norm() * std::sqrt(5.0)));
  EllipsoidSet pt(Vector::Ones(3), Matrix::Zero(3, 3), 2.0);
  CHECK_UNARY(pt.regularized());
  CHECK_UNARY(pt.contains(Vector::Ones(3)));
}

TEST_CASE("EllipsoidSet: MembershipMatchesExplicitInverse") {
  std::mt19937 rng(11);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 200; ++trial) {
    const int d = 1 + trial % 4;
    Matrix R(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) R(i, j) = nd(rng);
    const Matrix Q = R * R.transpose() + 0.1 * Matrix::Identity(d, d);
    Vector mu(d), v(d);
    for (int i = 0; i < d; ++i) {
      mu(i) = nd(rng);
      v(i) = nd(rng) * 2;
    }
    EllipsoidSet e(mu, Q, 3.0);
    const double direct = (v - mu).dot(Q.inverse() * (v - mu));
    CHECK_NEAR(e.mahalanobis_sq(v), direct, 1e-9 * std::max(1.0, direct));
    // Whitened point from the unit ball lands inside.
    Vector z(d);
    for (int i = 0; i < d; ++i) z(i) = nd(rng);
    z /= (z.norm() * 1.0001);
    CHECK_UNARY(e.contains(e.from_unit_ball(z)));
  }
}

TEST_CASE("EllipsoidSet: SupportDominatesBoundarySamples") {
  Matrix Q(2, 2);
  Q << 2, 0.3, 0.3, 0.5;
  EllipsoidSet e((Vector(2) << 1, -1).finished(), Q, 5.991);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ang(0, 2 * M_PI);
  const Vector w = (Vector(2) << 0.7, -1.3).finished();
  double best = -1e300;
  for (int i = 0; i < 100000; ++i) {
    const double a = ang(rng);
    const Vector z = (Vector(2) << std::cos(a), std::sin(a)).finished();
    best = std::max(best, w.dot(e.from_unit_ball(z)));
  }
  CHECK_GE(e.support(w), best - 1e-12);
  CHECK_NEAR(e.support(w), best, 1e-3);
}

namespace {
// Brute-force hull membership in 2-D: p lies in some vertex triangle.
bool in_some_triangle(const Matrix& V, const Vector& p, double tol) {
  const int k = static_cast<int>(V.cols());
  if (k == 1) return (V.col(0) - p).norm() <= tol;
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      // Segments.
      const Vector ab = V.col(b) - V.col(a);
      const double t = std::clamp((p - V.col(a)).dot(ab) / std::max(ab.squaredNorm(), 1e-300), 0.0, 1.0);
      if ((V.col(a) + t * ab - p).norm() <= tol) return true;
      for (int c = b + 1; c < k; ++c) {
        Matrix T(2, 2);
        T.col(0) = V.col(b) - V.col(a);
        T.col(1) = V.col(c) - V.col(a);
        if (std::abs(T.determinant()) < 1e-12) continue;
        const Vector l = T.fullPivLu().solve(p - V.col(a));
        if (l(0) >= -tol && l(1) >= -tol && l.sum() <= 1 + tol) return true;
      }
    }
  return false;
}
}  // namespace

TEST_CASE("PolytopeSet: MembershipAgreesWithTriangleOracle") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> ud(-1, 1);
  int agreed = 0, total = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 1 + trial % 7;
    Matrix V(2, k);
    for (int i = 0; i < k; ++i) V.col(i) << ud(rng), ud(rng);
    PolytopeSet P(V);
    const Vector p = (Vector(2) << ud(rng), ud(rng)).finished();
    const bool inner = in_some_triangle(V, p, -1e-5);
    const bool outer = in_some_triangle(V, p, 1e-5);
    if (inner != outer) continue;  // too close to the boundary to call
    ++total;
    agreed += (P.contains(p) == inner);
  }
  CHECK_EQ(agreed, total);
  CHECK_GT(total, 250);
}

TEST_CASE("PolytopeSet: SupportAndArgmaxTies") {
  Matrix V(2, 4);
  V << 0, 1, 1, 0, 0, 0, 0, 1;
  PolytopeSet P(V);
  CHECK_EQ(P.argmax((Vector(2) << 1, 0).finished()), 1u);
  CHECK_DOUBLE_EQ(P.support((Vector(2) << 1, 2).finished()), 2.0);
  CHECK_UNARY(P.contains((Vector(2) << 0.5, 0.25).finished()));
  CHECK_UNARY_FALSE(P.contains((Vector(2) << 0.8, 0.8).finished()));
  CHECK_THROWS_AS(PolytopeSet(Matrix(2, 0)), std::invalid_argument);
}

TEST_CASE("PolytopeSet: SupportEqualsHullSampleMax") {
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> ud(-1, 1);
  Matrix V(3, 6);
  for (int i = 0; i < 6; ++i) V.col(i) << ud(rng), ud(rng), ud(rng);
  PolytopeSet P(V);
  std::gamma_distribution<double> gd(1.0, 1.0);
  for (int dir = 0; dir < 20; ++dir) {
    const Vector w = (Vector(3) << ud(rng), ud(rng), ud(rng)).finished();
    double best = -1e300;
    for (int s = 0; s < 10000; ++s) {
      Vector l(6);
      for (int i = 0; i < 6; ++i) l(i) = gd(rng);
      best = std::max(best, w.dot(V * (l / l.sum())));
    }
    CHECK_LE(best, P.support(w) + 1e-9);
  }
}

TEST_CASE("Lp: SmallKnownProblem") {
  // max x + y  s.t.  x + 2y <= 4, 3x + y <= 6, x, y >= 0  -> (1.6, 1.2).
  LpProblem lp = LpProblem::free_variables(2);
  lp.c << -1, -1;
  lp.A_ub = (Matrix(2, 2) << 1, 2, 3, 1).finished();
  lp.b_ub = (Vector(2) << 4, 6).finished();
  lp.lower.setZero();
  const LpResult r = solve_lp(lp);
  REQUIRE_EQ(r.status, LpStatus::Optimal);
  CHECK_NEAR(r.x(0), 1.6, 1e-9);
  CHECK_NEAR(r.x(1), 1.2, 1e-9);
}

TEST_CASE("Lp: InfeasibleAndUnbounded") {
  LpProblem lp = LpProblem::free_variables(1);
  lp.A_ub = (Matrix(2, 1) << 1, -1).finished();
  lp.b_ub = (Vector(2) << -1, -2).finished();
  CHECK_EQ(solve_lp(lp).status, LpStatus::Infeasible);
  LpProblem un = LpProblem::free_variables(1);
  un.c << -1;
  CHECK_EQ(solve_lp(un).status, LpStatus::Unbounded);
}

TEST_CASE("Lp: OriginInInterior") {
  Matrix tri(2, 3);
  tri << 1, -1, 0, -1, -1, 1;
  CHECK_UNARY(origin_in_interior(tri));
  Matrix shifted = tri.array() + 2.0;
  CHECK_UNARY_FALSE(origin_in_interior(shifted));
  Matrix seg(2, 2);
  seg << -1, 1, 0, 0;
  CHECK_UNARY_FALSE(origin_in_interior(seg));  // not full-dimensional
  Matrix edge(2, 3);
  edge << -1, 1, 0, 0, 0, 1;  // origin on the boundary
  CHECK_UNARY_FALSE(origin_in_interior(edge));
}

TEST_CASE("SolveStatus: Names") {
  CHECK_EQ(to_string(SolveStatus::Optimal), "optimal");
  CHECK_UNARY(is_infeasible(SolveStatus::InfeasibleEmptyUr));
  CHECK_UNARY_FALSE(is_infeasible(SolveStatus::Optimal));
}
