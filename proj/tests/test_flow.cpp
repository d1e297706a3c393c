// Tests for the Hamilton-flow integrator: null covector construction,
// closed-form anchors on the constant-coefficient model, Hamiltonian
// conservation, a time-reversal oracle, trapping classification with
// certificates, the velocity-bound scan, and CSV trace export.

#include <catch2/catch_amalgamated.hpp>

#include "kglab/flow.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace kglab;

namespace {

SpacetimeModel flat_model() {
  return SpacetimeModel(MetricS1(parse_expr("1")), FiberQuadratic{});
}

SpacetimeModel decaying_model() {
  MetricS1 metric(parse_expr("1+0.5*sin(x)"));
  FiberQuadratic q;
  q.c00 = parse_expr("0.2*jap(t)^(-3)*sin(x)");
  q.c10 = parse_expr("0.1*jap(t)^(-3)");
  q.c02 = parse_expr("0.2*jap(t)^(-3)");
  q.mu = 2.0;
  return SpacetimeModel(std::move(metric), std::move(q));
}

double circ_dist(double a, double b) {
  double d = std::fabs(wrap_angle(a) - wrap_angle(b));
  return std::min(d, kTwoPi - d);
}

}  // namespace

TEST_CASE("null lift: constant-coefficient anchors and branch selection") {
  auto flat = flat_model();
  PhasePoint up = null_lift(flat, 0.0, 0.0, 3.0, Branch::Plus);
  PhasePoint dn = null_lift(flat, 0.0, 0.0, 3.0, Branch::Minus);
  CHECK(up.tau == Catch::Approx(3.0).margin(1e-14));
  CHECK(dn.tau == Catch::Approx(-3.0).margin(1e-14));
  CHECK(std::fabs(flat.eval_p(up)) <= 1e-12);
  CHECK(std::fabs(flat.eval_p(dn)) <= 1e-12);

  // tau^2 coefficient 1.5 at t = 0: 1.5 tau^2 - 1 = 0
  FiberQuadratic q;
  q.c20 = parse_expr("0.5*chi2(t)");
  SpacetimeModel bumped(MetricS1(parse_expr("1")), std::move(q));
  PhasePoint r = null_lift(bumped, 0.0, 0.0, 1.0, Branch::Plus);
  CHECK(r.tau == Catch::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-14));
  CHECK(std::fabs(bumped.eval_p(r)) <= 1e-12);
  PhasePoint rm = null_lift(bumped, 0.0, 0.0, 1.0, Branch::Minus);
  CHECK(rm.tau == Catch::Approx(-std::sqrt(2.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("null lift error paths: no real root and zero covector") {
  // c02 = 2 makes the fiber form positive definite: tau^2 + xi^2 = 0 only
  // at the zero covector, so no real lift exists at xi = 1
  FiberQuadratic q;
  q.c02 = parse_expr("2");
  SpacetimeModel definite(MetricS1(parse_expr("1")), std::move(q));
  CHECK_THROWS_AS(null_lift(definite, 0.0, 0.0, 1.0, Branch::Plus),
                  std::domain_error);

  // xi = 0 on the flat model forces tau = 0: the zero covector is rejected
  auto flat = flat_model();
  CHECK_THROWS_AS(null_lift(flat, 0.0, 0.0, 0.0, Branch::Plus),
                  std::domain_error);
}

TEST_CASE("flat-model trace follows the closed form") {
  auto flat = flat_model();
  // from (0,0,1,1): dt/ds = 2 tau = 2, dx/ds = d p/d xi = -2 xi = -2,
  // frequencies frozen; x runs opposite to xi on this sign convention
  FlowTrace tr = integrate(flat, PhasePoint{0.0, 0.0, 1.0, 1.0}, {0.0, 5.0});
  REQUIRE(tr.s.size() >= 3);
  CHECK_FALSE(tr.underflow);
  for (std::size_t i = 0; i < tr.s.size(); ++i) {
    CHECK(std::fabs(tr.state[i].t - 2.0 * tr.s[i]) <= 1e-8);
    CHECK(std::fabs(tr.state[i].x - (-2.0 * tr.s[i])) <= 1e-8);
    CHECK(std::fabs(tr.state[i].tau - 1.0) <= 1e-10);
    CHECK(std::fabs(tr.state[i].xi - 1.0) <= 1e-10);
  }
  // opposite fiber sign runs x forward: from (0,0,1,-1), x(s) = +2s
  FlowTrace tr2 = integrate(flat, PhasePoint{0.0, 0.0, 1.0, -1.0}, {0.0, 5.0});
  for (std::size_t i = 0; i < tr2.s.size(); ++i)
    CHECK(std::fabs(tr2.state[i].x - 2.0 * tr2.s[i]) <= 1e-8);
  // s strictly increasing, endpoint hit exactly
  for (std::size_t i = 1; i < tr.s.size(); ++i) CHECK(tr.s[i] > tr.s[i - 1]);
  CHECK(tr.s.back() == 5.0);
  CHECK(tr.accepted >= long(tr.s.size()) - 1);
}

TEST_CASE("Hamiltonian is conserved along traces of a curved model") {
  auto m = decaying_model();
  PhasePoint start = null_lift(m, -8.0, 0.7, 1.2, Branch::Plus);
  REQUIRE(std::fabs(m.eval_p(start)) <= 1e-12);
  FlowTrace tr = integrate(m, start, {0.0, 30.0});
  CHECK_FALSE(tr.underflow);
  CHECK(tr.drift() <= 1e-7 * (1.0 + std::fabs(tr.p.front())));
  for (double v : tr.p) CHECK(std::fabs(v) <= 1e-7);  // stays null
}

TEST_CASE("time reversal recovers the starting state") {
  auto m = decaying_model();
  PhasePoint start = null_lift(m, -6.0, 1.9, -0.8, Branch::Minus);
  FlowTrace fwd = integrate(m, start, {0.0, 10.0});
  REQUIRE_FALSE(fwd.underflow);
  REQUIRE(fwd.s.back() == 10.0);
  FlowTrace bwd = integrate(m, fwd.state.back(), {10.0, 0.0});
  REQUIRE_FALSE(bwd.underflow);
  const PhasePoint rec = bwd.state.back();
  CHECK(std::fabs(rec.t - start.t) <= 1e-6);
  CHECK(std::fabs(rec.x - start.x) <= 1e-6);
  CHECK(std::fabs(rec.tau - start.tau) <= 1e-6);
  CHECK(std::fabs(rec.xi - start.xi) <= 1e-6);
  // backward trace runs s downward
  for (std::size_t i = 1; i < bwd.s.size(); ++i) CHECK(bwd.s[i] < bwd.s[i - 1]);
}

TEST_CASE("integration tolerance domain is enforced") {
  auto flat = flat_model();
  PhasePoint pt{0.0, 0.0, 1.0, 1.0};
  CHECK_THROWS_AS(integrate(flat, pt, {0.0, 1.0}, 1e-5), std::invalid_argument);
  CHECK_THROWS_AS(integrate(flat, pt, {0.0, 1.0}, 1e-13),
                  std::invalid_argument);
}

TEST_CASE("a field singularity yields a flagged partial trace") {
  // c00 = 1/(t-1): the force -d c00/dt blows up as t -> 1, so the
  // step size collapses and the integrator reports underflow
  FiberQuadratic q;
  q.c00 = parse_expr("1/(t-1)");
  SpacetimeModel m(MetricS1(parse_expr("1")), std::move(q));
  // p = tau^2 - xi^2 + 1/(t-1); at t=0, xi=1: tau^2 = 2
  PhasePoint start{0.0, 0.0, std::sqrt(2.0), 1.0};
  FlowTrace tr = integrate(m, start, {0.0, 10.0});
  CHECK(tr.underflow);
  REQUIRE(tr.s.size() >= 2);
  for (std::size_t i = 1; i < tr.s.size(); ++i) CHECK(tr.s[i] > tr.s[i - 1]);
  CHECK(tr.state.back().t <= 1.0 + 1e-6);
}

TEST_CASE("classification anchors on the constant-coefficient model") {
  auto flat = flat_model();
  TrapVerdict v = classify(flat, PhasePoint{0.0, 0.0, 1.0, 1.0});
  CHECK(v.forward == TrapOutcome::EscapesUp);
  CHECK(v.backward == TrapOutcome::EscapesDown);
  CHECK(v.max_abs_t_forward > 100.0);
  CHECK(std::isfinite(v.escape_s_forward));

  TrapVerdict w = classify(flat, PhasePoint{0.0, 0.0, -1.0, 1.0});
  CHECK(w.forward == TrapOutcome::EscapesDown);
  CHECK(w.backward == TrapOutcome::EscapesUp);
}

TEST_CASE("classification preconditions reject non-null or zero covectors") {
  auto flat = flat_model();
  CHECK_THROWS_AS(classify(flat, PhasePoint{0.0, 0.0, 1.0, 2.0}),
                  std::invalid_argument);  // p = -3, not null
  FiberQuadratic q;
  q.c02 = parse_expr("chi2(t)");
  SpacetimeModel deg(MetricS1(parse_expr("1")), std::move(q));
  CHECK_THROWS_AS(classify(deg, PhasePoint{0.0, 0.0, 0.0, 0.0}),
                  std::invalid_argument);  // zero covector
}

TEST_CASE("a stationary null point is certified Trapped and the model "
          "fails the signature scan") {
  FiberQuadratic q;
  q.c02 = parse_expr("chi2(t)");
  q.mu = 1.0;
  SpacetimeModel m(MetricS1(parse_expr("1")), std::move(q));
  // at (t,x,tau,xi) = (0,1,0,1): p = -(1 - chi2(0)) = 0 and the whole
  // Hamilton field vanishes (plateau of chi2), a genuine fixed point
  PhasePoint pt{0.0, 1.0, 0.0, 1.0};
  REQUIRE(std::fabs(m.eval_p(pt)) <= 1e-12);
  Grad4 g = m.grad_p(pt);
  REQUIRE(std::fabs(g.dt) + std::fabs(g.dx) + std::fabs(g.dtau) +
              std::fabs(g.dxi) ==
          0.0);
  TrapVerdict v = classify(m, pt);
  CHECK(v.forward == TrapOutcome::Trapped);
  CHECK(v.backward == TrapOutcome::Trapped);
  // and the same model is flagged by the structural scan
  CHECK_FALSE(m.validate().fiber_nondegenerate);
}

TEST_CASE("1000 random flat null covectors all escape with an allowed "
          "sign pattern") {
  auto flat = flat_model();
  std::mt19937 rng(20240821);
  std::uniform_real_distribution<double> ut(-10.0, 10.0);
  std::uniform_real_distribution<double> ux(0.0, kTwoPi);
  std::uniform_real_distribution<double> uxi(0.5, 2.0);
  std::bernoulli_distribution flip(0.5);
  int ok = 0;
  for (int i = 0; i < 1000; ++i) {
    const double xi = (flip(rng) ? 1.0 : -1.0) * uxi(rng);
    const Branch br = flip(rng) ? Branch::Plus : Branch::Minus;
    PhasePoint pt = null_lift(flat, ut(rng), ux(rng), xi, br);
    TrapVerdict v = classify(flat, pt, 500.0, 100.0);
    const bool pattern = (v.forward == TrapOutcome::EscapesUp &&
                          v.backward == TrapOutcome::EscapesDown) ||
                         (v.forward == TrapOutcome::EscapesDown &&
                          v.backward == TrapOutcome::EscapesUp);
    if (pattern) ++ok;
  }
  CHECK(ok == 1000);
}

TEST_CASE("stratified nontrapping scan passes on a decaying model") {
  auto m = decaying_model();
  NontrappingReport r = nontrapping_scan(m, 5.0, 5, 4, 2);
  CHECK(r.pass);
  CHECK(r.undetermined == 0);
  CHECK(r.trapped == 0);
  CHECK(r.escaping == r.total);
  CHECK(r.allowed_pattern);
}

TEST_CASE("velocity-bound scan: flat model saturates at the smallest T") {
  auto flat = flat_model();
  VelocityBoundReport r =
      velocity_bound_scan(flat, 0.5, {1.0, 5.0, 10.0});
  REQUIRE(r.t1_found.has_value());
  CHECK(*r.t1_found == 1.0);
  for (double v : r.max_ratio) CHECK(v <= 1e-14);
  CHECK(r.same_sign_at_t1);
}

TEST_CASE("velocity-bound scan finds a finite threshold for a decaying "
          "first-order coefficient") {
  FiberQuadratic q;
  q.c10 = parse_expr("jap(t)^(-3)");
  q.mu = 2.0;
  SpacetimeModel m(MetricS1(parse_expr("1")), std::move(q));
  VelocityBoundReport r = velocity_bound_scan(m, 0.5, {1.0, 5.0, 10.0});
  REQUIRE(r.t1_found.has_value());
  CHECK(*r.t1_found == 5.0);
  CHECK(r.max_ratio[0] > 0.5);   // fails at T = 1
  CHECK(r.max_ratio[1] <= 0.5);  // passes at T = 5
  CHECK(r.same_sign_at_t1);
  CHECK_THROWS_AS(velocity_bound_scan(m, 1.5, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(velocity_bound_scan(m, 0.0, {1.0}), std::invalid_argument);
}

TEST_CASE("trace CSV export: header, row count, 17-digit round trip") {
  auto flat = flat_model();
  FlowTrace tr = integrate(flat, PhasePoint{0.0, 0.5, 1.0, 1.0}, {0.0, 2.0});
  const std::string csv = trace_csv(tr);
  std::istringstream in(csv);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line == "s,t,x,tau,xi,p");
  std::size_t rows = 0;
  std::vector<std::string> all;
  while (std::getline(in, line)) {
    all.push_back(line);
    ++rows;
  }
  CHECK(rows == tr.s.size());
  // parse a middle row back: 17 significant digits round-trip exactly
  const std::size_t mid = rows / 2;
  double vals[6];
  REQUIRE(std::sscanf(all[mid].c_str(), "%lf,%lf,%lf,%lf,%lf,%lf", &vals[0],
                      &vals[1], &vals[2], &vals[3], &vals[4],
                      &vals[5]) == 6);
  CHECK(vals[0] == tr.s[mid]);
  CHECK(vals[1] == tr.state[mid].t);
  CHECK(vals[2] == tr.state[mid].x);
  CHECK(vals[3] == tr.state[mid].tau);
  CHECK(vals[4] == tr.state[mid].xi);
  CHECK(vals[5] == tr.p[mid]);
}

TEST_CASE("curved-model x coordinate is periodic in evaluation but "
          "unwrapped in the trace") {
  auto m = decaying_model();
  PhasePoint start = null_lift(m, 2.0, 0.1, -1.5, Branch::Plus);
  FlowTrace tr = integrate(m, start, {0.0, 20.0});
  // x moves monotonically far beyond one turn for this data; the trace
  // keeps the unwrapped coordinate for continuity
  bool left_principal = false;
  for (const auto& st : tr.state)
    if (st.x > kTwoPi || st.x < 0.0) left_principal = true;
  CHECK(left_principal);
  // wrapped evaluation stays consistent
  for (std::size_t i = 0; i < tr.s.size(); ++i) {
    PhasePoint w = tr.state[i].normalized();
    CHECK(m.eval_p(w) == Catch::Approx(tr.p[i]).margin(1e-12));
    CHECK(circ_dist(w.x, tr.state[i].x) <= 1e-9);
  }
}
