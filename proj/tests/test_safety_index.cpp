#include "check.hpp"

#include <random>

#include "rssa/safety_index.hpp"

using namespace rssa;

namespace {
StateVector random_state(const RobotModel& model, std::mt19937_64& rng) {
  const Box& b = model.state_box();
  StateVector x(b.dim());
  for (int i = 0; i < b.dim(); ++i) x(i) = std::uniform_real_distribution<double>(b.lower(i), b.upper(i))(rng);
  return x;
}

Vector central_difference(const SafetyIndexParams& p, const RobotModel& model, const StateVector& x,
                          double h) {
  Vector g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    StateVector a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (phi(p, model, a) - phi(p, model, b)) / (2 * h);
  }
  return g;
}

// Largest perturbation for which the active branch cannot change.
bool safely_inside_branch(const SafetyIndexParams& p, const RobotModel& model, const StateVector& x) {
  return std::abs(phi_branch(p, model, x) - phi0(model, x)) > 1e-4;
}
}  // namespace

TEST_CASE("Phi0: Examples") {
  ScaraModel::Params sp;
  sp.l2 = 1.0;
  const ScaraModel scara(sp);
  CHECK_NEAR(phi0(scara, Vector::Zero(4)), 0.5, 1e-15);
  const SegwayModel segway;
  CHECK_NEAR(phi0(segway, Vector::Zero(4)), -0.1, 1e-15);
  CHECK_NEAR(phi0(segway, (Vector(4) << 0, 0.1, 0, 0).finished()), 0.0, 1e-15);
  CHECK_NEAR(phi0(segway, (Vector(4) << 0, -0.1, 0, 0).finished()), 0.0, 1e-15);
}

TEST_CASE("Phi: DominatesPhi0") {
  const ScaraModel scara;
  const SegwayModel segway;
  std::mt19937_64 rng(1);
  for (const SafetyIndexParams& p : {hand_designed_index(), learned_scara_index()}) {
    for (int i = 0; i < 2000; ++i) {
      const StateVector a = random_state(scara, rng);
      CHECK_GE(phi(p, scara, a), phi0(scara, a));
      const StateVector b = random_state(segway, rng);
      CHECK_GE(phi(p, segway, b), phi0(segway, b));
    }
  }
}

TEST_CASE("Phi: HandDesignedIsLinearInPositionAndVelocity") {
  const ScaraModel scara;
  const SafetyIndexParams h = hand_designed_index();
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const StateVector x = random_state(scara, rng);
    const SafetyFeature sf = scara.safety_feature(x);
    const double expected = std::max(sf.s - 1.5, sf.s - 1.5 + 0.2 * sf.sdot);
    CHECK_NEAR(phi(h, scara, x), expected, 1e-12);
  }
}

TEST_CASE("SignedPower: ContinuousMonotoneAndC1") {
  for (double alpha : {0.3, 0.57, 1.0, 2.0, 4.5}) {
    const double knee = 0.075;
    const double max_slope = std::max({signed_power_derivative(0.0, alpha, knee),
                                       signed_power_derivative(knee, alpha, knee),
                                       signed_power_derivative(3.0, alpha, knee)});
    double prev = signed_power(-3.0, alpha, knee);
    for (double s = -3.0 + 1e-3; s <= 3.0; s += 1e-3) {
      const double v = signed_power(s, alpha, knee);
      CHECK_GT(v, prev - 1e-15);
      CHECK_LT(std::abs(v - prev), 1.01e-3 * max_slope);
      prev = v;
    }
    // Value and slope match on both sides of the knee.
    for (double side : {-1.0, 1.0}) {
      const double k = side * knee;
      CHECK_NEAR(signed_power(k * (1 - 1e-12), alpha, knee), signed_power(k * (1 + 1e-12), alpha, knee), 1e-10);
      CHECK_NEAR(signed_power_derivative(k * (1 - 1e-12), alpha, knee),
                  signed_power_derivative(k * (1 + 1e-12), alpha, knee), 1e-8);
    }
    CHECK_DOUBLE_EQ(signed_power(-2.0, alpha, 0.0), -std::pow(2.0, alpha));
    CHECK_EQ(signed_power(0.0, alpha, knee), 0.0);
    CHECK_UNARY(std::isfinite(signed_power_derivative(0.0, alpha, knee)));
  }
}

TEST_CASE("GradPhi: MatchesCentralDifferences") {
  const ScaraModel scara;
  const SegwayModel segway;
  std::mt19937_64 rng(3);
  const SafetyIndexParams seg_params{0.8, 0.5, 0.01, 1.0};
  int checked = 0;
  double worst = 0.0;
  while (checked < 1000) {
    const bool use_scara = checked % 2 == 0;
    const RobotModel& model = use_scara ? static_cast<const RobotModel&>(scara) : segway;
    const SafetyIndexParams p = use_scara ? learned_scara_index() : seg_params;
    const StateVector x = random_state(model, rng);
    if (!safely_inside_branch(p, model, x)) continue;
    if (!use_scara && std::abs(x(1)) < 1e-4) continue;
    const Vector g = grad_phi(p, model, x);
    const Vector fd = central_difference(p, model, x, 1e-6);
    worst = std::max(worst, (g - fd).norm() / std::max(1.0, g.norm()));
    ++checked;
  }
  CHECK_LT(worst, 1e-5);
}

TEST_CASE("GradPhi: Phi0BranchOfSegway") {
  const SegwayModel segway;
  const SafetyIndexParams p{1.0, 0.2, 0.001, 1.0};
  // Large negative tilt rate keeps the learned branch below phi0.
  const StateVector x = (Vector(4) << 0, 0.05, 0, -0.9).finished();
  REQUIRE_LT(phi_branch(p, segway, x), phi0(segway, x));
  CHECK_EQ(grad_phi(p, segway, x), (Vector(4) << 0, 1, 0, 0).finished());
}

TEST_CASE("GradPhi: VelocityComponentOfScara") {
  const ScaraModel scara;
  const SafetyIndexParams p = learned_scara_index();
  const StateVector x = (Vector(4) << 0.8, 0.3, -0.5, -0.5).finished();
  REQUIRE_GT(phi_branch(p, scara, x), phi0(scara, x));
  const SafetyFeature sf = scara.safety_feature(x);
  const Vector g = grad_phi(p, scara, x);
  CHECK_NEAR(g(2), p.k_v * sf.dsdot(2), 1e-14);
  CHECK_NEAR(g(3), p.k_v * sf.dsdot(3), 1e-14);
}

TEST_CASE("GradPhi: ThrowsOnSwitchingSurface") {
  const ScaraModel scara;
  const SafetyIndexParams h = hand_designed_index();
  // alpha = 1, beta = 0: the branches coincide whenever sdot = 0.
  const StateVector x = (Vector(4) << 0.3, 0.4, 0, 0).finished();
  CHECK_THROWS_AS(grad_phi(h, scara, x), AtSwitchingSurface);
  CHECK_UNARY(evaluate_phi(h, scara, x).branch_active);
}

TEST_CASE("Gamma: IncreasingThroughZero") {
  const SafetyIndexParams p{1.0, 0.2, 0.0, 1.0};
  CHECK_EQ(gamma(p, 0.0), 0.0);
  CHECK_EQ(gamma(p, 2.0), 2.0);
  const SafetyIndexParams q{1.0, 0.2, 0.0, 2.5};
  double prev = gamma(q, -5.0);
  for (double v = -5.0 + 0.01; v < 5.0; v += 0.01) {
    CHECK_GT(gamma(q, v), prev);
    prev = gamma(q, v);
    CHECK_NEAR(gamma_inverse(q, gamma(q, v)), v, 1e-14);
  }
}

TEST_CASE("SafetyIndexParams: SearchBox") {
  CHECK_UNARY(learned_scara_index().in_search_box());
  CHECK_UNARY_FALSE(hand_designed_index().in_search_box());  // beta = 0 sits outside
  CHECK_UNARY_FALSE((SafetyIndexParams{6.0, 1.0, 0.1, 1.0}.in_search_box()));
}
