#include <chrono>
#include <cmath>
#include <random>

#include "doctest.h"
#include "cpmp/error.hpp"
#include "cpmp/ocp.hpp"

using namespace cpmp;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

OcpProblem scalar_problem(const char* X, const char* F, double x0, double x1) {
  OcpProblem pb;
  pb.states = {"x"};
  pb.controls = {"u"};
  pb.dynamics = {parse(X)};
  pb.cost = parse(F);
  pb.x_start = vec({x0});
  pb.x_end = vec({x1});
  return pb;
}

OcpProblem lq() { return scalar_problem("u", "(x^2 + u^2)/2", 1.0, 0.0); }

}  // namespace

TEST_CASE("extend builds the Pontryagin Hamiltonian") {
  const PmpSystem sys = extend(lq());
  CHECK(sys.chart() == std::vector<std::string>{"x0", "x", "p0", "p_x", "u"});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> r(-2, 2);
  for (int i = 0; i < 20; ++i) {
    const double x = r(rng), p0 = r(rng), p = r(rng), u = r(rng);
    const double H = sys.compiled().value(as_span(vec({r(rng), x, p0, p, u})));
    CHECK(H == doctest::Approx(p0 * (x * x + u * u) / 2 + p * u));
  }

  OcpProblem two;
  two.states = {"a", "b"};
  two.controls = {"u"};
  two.dynamics = {parse("b"), parse("u")};
  two.cost = parse("0");
  two.x_start = vec({0, 0});
  two.x_end = vec({1, 0});
  const PmpSystem s2 = extend(two);
  CHECK(s2.chart().size() == 7);
  CHECK(to_string(s2.hamiltonian()) == "p_a*b + p_b*u");

  OcpProblem clash = lq();
  clash.controls = {"p_x"};
  clash.dynamics = {parse("p_x")};
  clash.cost = parse("p_x^2");
  CHECK_THROWS_AS(extend(clash), InputError);
  OcpProblem undeclared = lq();
  undeclared.cost = parse("w*u");
  CHECK_THROWS_AS(extend(undeclared), InputError);
}

TEST_CASE("pmp right-hand side") {
  const PmpSystem sys = extend(lq());
  const Vec r = pmp_rhs(sys, as_span(vec({0.0, 1.0, -1.0, 0.0, 0.0})));
  CHECK(r(1) == 0.0);
  CHECK(r(3) == 1.0);
  CHECK(r(2) == 0.0);
  CHECK(r(0) == 0.5);
  const PmpSystem flat = extend(scalar_problem("u", "u^2", 0.0, 1.0));
  const Vec r2 = pmp_rhs(flat, as_span(vec({0.3, 0.7, -1.0, 2.0, 0.4})));
  CHECK(r2(3) == 0.0);
  CHECK(r2(2) == 0.0);
}

TEST_CASE("control elimination") {
  const PmpSystem sys = extend(lq());
  const Vec u = eliminate_controls(sys, as_span(vec({0.0, 0.4, -1.0, 0.8})), vec({5.0}));
  CHECK(u(0) == doctest::Approx(0.8).epsilon(1e-13));
  const PmpSystem weighted = extend(scalar_problem("u", "x^2/2 + 3*u^2/2", 0.0, 1.0));
  CHECK(eliminate_controls(weighted, as_span(vec({0.0, 0.4, -1.0, 0.9})), vec({0.0}))(0) ==
        doctest::Approx(0.3).epsilon(1e-13));
  const PmpSystem none = extend(scalar_problem("x", "x^2", 0.0, 1.0));
  CHECK_THROWS_AS(eliminate_controls(none, as_span(vec({0.0, 0.4, -1.0, 0.9})), vec({0.0})), SingularError);
  // Non-quadratic control dependence.
  const PmpSystem quartic = extend(scalar_problem("u", "u^4/4 + u^2/2", 0.0, 1.0));
  const Vec uq = eliminate_controls(quartic, as_span(vec({0.0, 0.0, -1.0, 2.0})), vec({0.0}));
  CHECK(std::abs(uq(0) * uq(0) * uq(0) + uq(0) - 2.0) <= 1e-12);
}

TEST_CASE("normal restriction matches the PMP flow") {
  const PmpSystem sys = extend(lq());
  const NormalRestriction nr = normal_restriction(sys, -1.0);
  // u = p eliminated: (x0', x', p') = ((x^2 + p^2)/2, p, x).
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> r(-2, 2);
  const OdeRhs f = normal_flow(nr, vec({0.0}));
  for (int i = 0; i < 100; ++i) {
    const double x0 = r(rng), x = r(rng), p = r(rng), u = r(rng);
    const Vec v = f(0.0, vec({x0, x, p}));
    CHECK(v(0) == doctest::Approx((x * x + p * p) / 2).epsilon(1e-13));
    CHECK(v(1) == doctest::Approx(p).epsilon(1e-13));
    CHECK(v(2) == doctest::Approx(x).epsilon(1e-13));
    const Vec n = normal_rhs(nr, as_span(vec({x0, x, p, u})));
    const Vec full = pmp_rhs(sys, as_span(vec({x0, x, -1.0, p, u})));
    CHECK(std::abs(n(0) - full(0)) <= 1e-12);
    CHECK(std::abs(n(1) - full(1)) <= 1e-12);
    CHECK(std::abs(n(2) - full(3)) <= 1e-12);
  }
  // The contact form -lambda0 dx0 - p dx evaluates to 1 on the Reeb field.
  const Vec R = nr.reeb();
  CHECK(-nr.lambda0 * R(0) == 1.0);
  CHECK(R.tail(2).isZero(0.0));
  CHECK_THROWS_AS(normal_restriction(sys, 0.0), InputError);
}

TEST_CASE("abnormal restriction") {
  const PmpSystem sys = extend(lq());
  const AbnormalRestriction ar = abnormal_restriction(sys);
  const Vec v = abnormal_rhs(ar, as_span(vec({0.0, 0.7, 1.5, 0.2})));
  CHECK(v(2) == 0.0);  // X = u has no x dependence
  CHECK(v(1) == 0.2);
  CHECK(v(0) == doctest::Approx((0.49 + 0.04) / 2));
  // Level-0 constraint of H0 = p u is p itself: only the trivial abnormal extremal.
  CHECK(to_string(derivative(ar.reduced.H, "u")) == "p_x");

  const PmpSystem bil = extend(scalar_problem("x*u", "u^2", 1.0, 2.0));
  const AbnormalRestriction ab = abnormal_restriction(bil);
  const Vec w = abnormal_rhs(ab, as_span(vec({0.0, 2.0, 3.0, 0.5})));
  CHECK(w(2) == doctest::Approx(-3.0 * 0.5));
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> r(-2, 2);
  for (int i = 0; i < 20; ++i) {
    const double x = r(rng), p = r(rng), u = r(rng);
    const Vec a = abnormal_rhs(ab, as_span(vec({0.0, x, p, u})));
    const Vec full = pmp_rhs(bil, as_span(vec({0.0, x, 0.0, p, u})));
    CHECK(a(1) == full(1));
    CHECK(a(2) == full(3));
  }
}

TEST_CASE("LQ benchmark by shooting") {
  const auto t0 = std::chrono::steady_clock::now();
  const PmpSystem sys = extend(lq());
  const BvpSolution sol = solve_bvp(sys, -1.0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 5.0);
  CHECK(sol.terminal_residual <= 1e-8);
  // Analytic: x = sinh(1 - t)/sinh(1), p = u = x' = -cosh(1 - t)/sinh(1).
  CHECK(sol.p_start(0) == doctest::Approx(-std::cosh(1.0) / std::sinh(1.0)).epsilon(1e-7));
  const Trajectory& tr = sol.trajectory;
  double err = 0.0, drift = 0.0, dHdu = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double t = tr.times[i];
    err = std::max(err, std::abs(tr.samples[i](1) - std::sinh(1 - t) / std::sinh(1.0)));
    drift = std::max(drift, std::abs(tr.samples[i](2) + 1.0));
    dHdu = std::max(dHdu, tr.diagnostics[i][1]);
  }
  CHECK(err <= 1e-6);
  CHECK(drift <= 1e-9);
  CHECK(dHdu <= 1e-8);
  // Cost bookkeeping: x0(b) equals the integral of F (Simpson on dense output, u = p).
  const int N = 2000;
  double quad = 0.0;
  for (int i = 0; i <= N; ++i) {
    const Vec s = tr.at(static_cast<double>(i) / N);
    const double F = 0.5 * (s(1) * s(1) + s(3) * s(3));
    quad += (i == 0 || i == N ? 1.0 : (i % 2 ? 4.0 : 2.0)) * F / (3.0 * N);
  }
  CHECK(std::abs(tr.samples.back()(0) - quad) <= 1e-6);
  const double exact_cost = 0.5 * std::cosh(1.0) / std::sinh(1.0);
  CHECK(tr.samples.back()(0) == doctest::Approx(exact_cost).epsilon(1e-8));
}

TEST_CASE("multiple shooting agrees with single shooting") {
  const PmpSystem sys = extend(lq());
  BvpConfig cfg;
  cfg.segments = 4;
  const BvpSolution multi = solve_bvp(sys, -1.0, cfg);
  CHECK(multi.terminal_residual <= 1e-8);
  for (std::size_t i = 0; i < multi.trajectory.size(); ++i) {
    const double t = multi.trajectory.times[i];
    CHECK(std::abs(multi.trajectory.samples[i](1) - std::sinh(1 - t) / std::sinh(1.0)) <= 1e-6);
  }
  CHECK(multi.trajectory.samples.back()(0) == doctest::Approx(0.5 / std::tanh(1.0)).epsilon(1e-7));
}

TEST_CASE("minimum-energy transfer is a straight line") {
  const PmpSystem sys = extend(scalar_problem("u", "u^2/2", 0.0, 1.0));
  const BvpSolution sol = solve_bvp(sys, -1.0);
  for (std::size_t i = 0; i < sol.trajectory.size(); ++i) {
    CHECK(std::abs(sol.trajectory.samples[i](1) - sol.trajectory.times[i]) <= 1e-9);
    CHECK(std::abs(sol.trajectory.samples[i](4) - 1.0) <= 1e-9);
  }
  const BvpSolution rest = solve_bvp(extend(scalar_problem("u", "u^2/2", 0.3, 0.3)), -1.0);
  for (const Vec& s : rest.trajectory.samples) {
    CHECK(std::abs(s(1) - 0.3) <= 1e-12);
    CHECK(std::abs(s(4)) <= 1e-12);
  }
}

TEST_CASE("p0 is conserved over a thousand RK4 steps") {
  const PmpSystem sys = extend(scalar_problem("x*u + sin(x)", "x^2 + u^2 + x*u/2", 0.5, 0.0));
  const Trajectory tr = integrate(pmp_flow(sys, vec({0.0})), vec({0.0, 0.5, -1.0, 0.3}), 0.0, 1.0,
                                  IntegratorConfig::rk4(1e-3));
  CHECK(tr.size() == 1001);
  for (const Vec& s : tr.samples) CHECK(std::abs(s(2) + 1.0) <= 1e-9);
}

TEST_CASE("extremals scale with lambda0") {
  // H is homogeneous in (p0, p): (lambda0, p) and (c lambda0, c p) give the same states.
  const PmpSystem sys = extend(lq());
  BvpConfig a;
  const BvpSolution s1 = solve_bvp(sys, -1.0, a);
  const BvpSolution s2 = solve_bvp(sys, -2.5, a);
  CHECK(s2.p_start(0) == doctest::Approx(2.5 * s1.p_start(0)).epsilon(1e-7));
  CHECK(s2.trajectory.at(0.5)(1) == doctest::Approx(s1.trajectory.at(0.5)(1)).epsilon(1e-8));
}

TEST_CASE("shooting failure surfaces") {
  // Linear control: singular elimination on every attempt.
  const PmpSystem sys = extend(scalar_problem("u", "x^2/2", 1.0, 0.0));
  BvpConfig cfg;
  cfg.shooting.restarts = 1;
  CHECK_THROWS_AS(solve_bvp(sys, -1.0, cfg), Error);
}
