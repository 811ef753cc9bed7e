#include "check.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "rssa/experiments.hpp"

using namespace rssa;

namespace {

StateVector scara_start(StartCase c) {
  static const ScaraModel m;
  const auto x = find_start_state(m, learned_scara_index(), c, {9, 9, 7, 7});
  if (!x) throw std::runtime_error("no start state");
  return *x;
}

SimulationOptions short_run(RssaVariant v, int steps) {
  SimulationOptions o;
  o.variant = v;
  o.true_param = 0.5;
  o.steps = steps;
  o.bound.samples = 30;
  o.bound.seed = 1;
  return o;
}

}  // namespace

TEST_CASE("Rk4: FourthOrderOnOpenLoopScara") {
  const ScaraModel m;
  const StateVector x0 = (Vector(4) << 0.2, -0.4, 0.5, 0.3).finished();
  const ControlVector u = (Vector(2) << 1.5, -0.7).finished();
  auto run = [&](double dt) {
    StateVector x = x0;
    const int steps = static_cast<int>(std::lround(0.8 / dt));
    for (int k = 0; k < steps; ++k) x = rk4_step(m, x, u, 1.0, dt);
    return x;
  };
  const StateVector a = run(0.02), b = run(0.01), c = run(0.005);
  const double ratio = (a - b).norm() / (b - c).norm();
  CHECK_GT(ratio, 12.0);
  CHECK_LT(ratio, 20.0);
}

TEST_CASE("Simulate: LogShapeAndFixedStep") {
  const ScaraModel m;
  const TrajectoryLog log = simulate(m, learned_scara_index(), scara_start(StartCase::DeepSafe),
                                     short_run(RssaVariant::Polytope, 50));
  REQUIRE_EQ(log.size(), 50u);
  for (auto n : {log.x.size(), log.u.size(), log.u_ref.size(), log.phi0.size(), log.phi.size(),
                 log.phidot_gamma.size(), log.audit.size(), log.status.size(), log.fallback.size(),
                 log.in_box.size()}) {
    CHECK_EQ(n, 50u);
  }
  for (std::size_t k = 1; k < log.size(); ++k) CHECK_NEAR(log.t[k] - log.t[k - 1], 0.002, 1e-15);

  const std::string csv = to_csv(log);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK_EQ(line, trajectory_csv_header(4, 2));
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK_EQ(std::count(line.begin(), line.end(), ','), 4 + 2 + 2 + 4 + 3);
  }
  CHECK_EQ(rows, 50);
}

TEST_CASE("Simulate: DeterministicOutput") {
  const ScaraModel m;
  const auto o = short_run(RssaVariant::Ellipsoid, 40);
  const StateVector x0 = scara_start(StartCase::OverApproximated);
  CHECK_EQ(to_csv(simulate(m, learned_scara_index(), x0, o)), to_csv(simulate(m, learned_scara_index(), x0, o)));
}

TEST_CASE("Simulate: ReferenceAloneCrossesTheWall") {
  const ScaraModel m;
  const TrajectoryLog log =
      simulate(m, learned_scara_index(), scara_start(StartCase::DeepSafe), short_run(RssaVariant::None, 1500));
  CHECK_GT(log.max_phi0(), 0.0);
  CHECK_UNARY(std::isnan(log.audit[0]));
}

TEST_CASE("Simulate: PolytopeKeepsScaraSafeAndAuditNonPositive") {
  const ScaraModel m;
  for (auto c : {StartCase::DeepSafe, StartCase::OverApproximated}) {
    const StateVector x0 = scara_start(c);
    if (c == StartCase::OverApproximated) {
      CHECK_GT(phi(learned_scara_index(), m, x0), 0.0);
      CHECK_LT(phi0(m, x0), 0.0);
    } else {
      CHECK_LT(phi(learned_scara_index(), m, x0), 0.0);
    }
    const TrajectoryLog log = simulate(m, learned_scara_index(), x0, short_run(RssaVariant::Polytope, 1000));
    CHECK_LE(log.max_phi0(), 1e-6);
    CHECK_EQ(log.fallback_events, 0);
    CHECK_LE(log.max_audit(), 1e-6);
  }
}

TEST_CASE("Simulate: ConstantVariantNeedsResidual") {
  const ScaraModel m;
  auto o = short_run(RssaVariant::Constant, 5);
  o.bound.d_res = -1.0;
  CHECK_THROWS_AS(simulate(m, learned_scara_index(), scara_start(StartCase::DeepSafe), o), std::invalid_argument);
  o.bound = variant_bound_options(m, learned_scara_index(), RssaVariant::Constant, o.bound, {});
  CHECK_EQ(o.bound.kind, BoundKind::Constant);
  CHECK_GT(o.bound.d_res, 0.0);
  CHECK_NOTHROW(simulate(m, learned_scara_index(), scara_start(StartCase::DeepSafe), o));
}

TEST_CASE("Variant: ParseRoundTrip") {
  for (auto v : {RssaVariant::None, RssaVariant::Polytope, RssaVariant::Ellipsoid, RssaVariant::Constant}) {
    CHECK_EQ(parse_variant(to_string(v)), v);
  }
  CHECK_THROWS_AS(parse_variant("sos"), ConfigError);
}

TEST_CASE("FeasibilityMap: LearnedIndexClearAndUserIndexNot") {
  const ScaraModel m;
  const BoundBuilder b(m, {BoundKind::Polytope, 30, 2});
  const FeasibilityMap learned = feasibility_map(m, learned_scara_index(), b, 8, 8, 15, 3);
  const FeasibilityMap user = feasibility_map(m, SafetyIndexParams{1.0, 1e-4, 0.0, 1.0}, b, 8, 8, 15, 3);
  CHECK_EQ(learned.max_value(), 0.0);
  CHECK_GT(user.max_value(), 0.0);
  bool saw_nan = false;
  for (const auto& row : user.value) {
    for (double v : row) {
      if (std::isnan(v)) {
        saw_nan = true;
        continue;
      }
      CHECK_GE(v, 0.0);
      CHECK_LE(v, 1.0);
    }
  }
  CHECK_UNARY(saw_nan);  // positions beyond the wall

  const auto j = nlohmann::json::parse(to_json(user, "scara", "phi0"));
  CHECK_EQ(j["schema"], "rssa.feasibility_map/1");
  CHECK_EQ(j["infeasible_fraction"].size(), 8u);
}

TEST_CASE("ForwardInvariance: InBoundStaysSafeAndOutOfBoundRespectsBound") {
  const ScaraModel m;
  ForwardInvarianceOptions o;
  o.trials = 4;
  o.horizon = 0.4;
  o.seed = 3;
  o.bound.samples = 30;
  o.bound.seed = 1;
  o.grid_counts = {5, 5, 5, 5};
  const auto rows = forward_invariance_study(m, learned_scara_index(), {1.0, 2.5}, o);
  REQUIRE_EQ(rows.size(), 2u);
  CHECK_UNARY(rows[0].in_bound);
  CHECK_EQ(rows[0].m_res, 0.0);
  CHECK_EQ(rows[0].bound, 0.0);
  CHECK_LE(rows[0].phi_max, 1e-3);
  CHECK_UNARY_FALSE(rows[1].in_bound);
  CHECK_GT(rows[1].bound, 0.0);
  CHECK_LE(rows[1].phi_max, rows[1].bound);

  const auto j = nlohmann::json::parse(to_json(rows, "scara"));
  CHECK_EQ(j["schema"], "rssa.forward_invariance/1");
  CHECK_EQ(j["rows"].size(), 2u);
}

TEST_CASE("Timing: TableIsWellFormed") {
  const SegwayModel m;
  const auto rows = timing_bench(m, SafetyIndexParams{}, {10, 50}, 10, 2, 1);
  REQUIRE_EQ(rows.size(), 4u);
  for (const auto& r : rows) {
    CHECK_GT(r.mean_us, 0.0);
    CHECK_GE(r.sd_us, 0.0);
    CHECK_EQ(r.repeats, 10);
  }
  const auto j = nlohmann::json::parse(to_json(rows, "segway"));
  CHECK_EQ(j["schema"], "rssa.timing/1");
  CHECK_EQ(j["rows"][0]["variant"], "polytope");
  CHECK_THROWS_AS(timing_bench(m, SafetyIndexParams{}, {10}, 9, 1, 1), std::invalid_argument);
}

TEST_CASE("Spearman: KnownValues") {
  CHECK_DOUBLE_EQ(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0);
  CHECK_DOUBLE_EQ(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0);
  // One adjacent swap among four: 1 - 6*2/(4*15) = 0.8.
  CHECK_NEAR(spearman({1, 2, 3, 4}, {1, 3, 2, 4}), 0.8, 1e-12);
  // Ties use average ranks: ranks (1.5, 1.5, 3) vs (1, 2, 3).
  CHECK_NEAR(spearman({5, 5, 7}, {1, 2, 3}), std::sqrt(0.75), 1e-12);
}
