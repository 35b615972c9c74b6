#include <cmath>
#include <random>

#include "doctest.h"
#include "cpmp/error.hpp"
#include "cpmp/herglotz_ocp.hpp"
#include "cpmp/jet.hpp"

using namespace cpmp;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

HerglotzOcpProblem scalar(const char* X, const char* F, double x0, double x1) {
  HerglotzOcpProblem pb;
  pb.states = {"q"};
  pb.controls = {"v"};
  pb.dynamics = {parse(X)};
  pb.cost = parse(F);
  pb.x_start = vec({x0});
  pb.x_end = vec({x1});
  return pb;
}

HerglotzOcpProblem damped() { return scalar("v", "0.5*v^2 - 0.5*q^2 - 0.1*z", 0.0, 1.0); }

// Full base point (x0, p0, q, p, z, p_z) with x0 = z.
Vec full_base(double lambda0, double q, double p, double z, double pz) { return vec({z, lambda0, q, p, z, pz}); }

}  // namespace

TEST_CASE("full extended field components") {
  const FullHerglotzSystem sys = extend(damped());
  CHECK(sys.chart() == std::vector<std::string>{"x0", "p0", "q", "p_q", "z", "p_z", "v"});
  CHECK(sys.base_dim() == 6);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> r(-2, 2);
  for (int s = 0; s < 50; ++s) {
    const double p0 = r(rng), q = r(rng), p = r(rng), z = r(rng), pz = r(rng), v = r(rng);
    const Vec x = vec({r(rng), p0, q, p, z, pz, v});
    const Vec d = full_extended_rhs(sys, as_span(x));
    const double F = 0.5 * v * v - 0.5 * q * q - 0.1 * z;
    CHECK(d(0) == doctest::Approx(F).epsilon(1e-14));
    CHECK(d(1) == 0.0);
    CHECK(d(2) == doctest::Approx(v).epsilon(1e-14));
    // p' = -(p0 + p_z) F_q with F_q = -q.
    CHECK(d(3) == doctest::Approx((p0 + pz) * q).epsilon(1e-14));
    CHECK(d(4) == doctest::Approx(F).epsilon(1e-14));
    // p_z' = -(p0 + p_z) F_z with F_z = -0.1.
    CHECK(d(5) == doctest::Approx(0.1 * (p0 + pz)).epsilon(1e-14));
  }

  // Pure dissipation.
  HerglotzOcpProblem pd = scalar("v", "-0.1*z", 0, 1);
  const Vec d = full_extended_rhs(extend(pd), as_span(vec({0, -1, 0.3, 0.2, 0.5, 0, 0.1})));
  CHECK(d(5) == doctest::Approx(-0.1).epsilon(1e-15));

  // z-independent cost: p_z' vanishes exactly.
  const FullHerglotzSystem zi = extend(scalar("v", "(q^2 + v^2)/2", 1, 0));
  for (int s = 0; s < 20; ++s) {
    const Vec x = vec({r(rng), r(rng), r(rng), r(rng), r(rng), r(rng), r(rng)});
    CHECK(full_extended_rhs(zi, as_span(x))(5) == 0.0);
  }

  // X depending on z contributes -p X_z to p_z'.
  const FullHerglotzSystem xz = extend(scalar("v + 0.5*z*q", "v^2/2", 0, 1));
  const Vec dz = full_extended_rhs(xz, as_span(vec({0, -1, 2.0, 3.0, 0.0, 0.25, 1.0})));
  CHECK(dz(5) == doctest::Approx(-3.0 * 0.5 * 2.0).epsilon(1e-15));
  CHECK(dz(3) == doctest::Approx(-3.0 * 0.5 * 0.0).epsilon(1e-15));
}

TEST_CASE("problem validation and reserved names") {
  HerglotzOcpProblem bad = damped();
  bad.cost = parse("w*v");
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = damped();
  bad.states = {"z"};
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = damped();
  bad.controls = {"p_z"};
  bad.cost = parse("p_z^2");
  bad.dynamics = {parse("p_z")};
  CHECK_THROWS_AS(extend(bad), InputError);
  bad.b = -1;
  CHECK_THROWS_AS(bad.validate(), InputError);
  CHECK(damped().z_dependent());
  CHECK_FALSE(scalar("v", "v^2", 0, 1).z_dependent());
  CHECK(scalar("v*z", "v^2", 0, 1).z_dependent());
  CHECK_THROWS_AS(to_classical(damped()), InputError);
  CHECK(to_classical(scalar("v", "v^2", 0, 1)).states == std::vector<std::string>{"q"});
}

TEST_CASE("reduced system from the contact field") {
  CHECK_THROWS_AS(reduce(damped(), 0.0), InputError);
  const ReducedContactOcp r = reduce(damped(), -1.0);
  CHECK(r.chart() == std::vector<std::string>{"q", "p_q", "z", "v"});
  CHECK(to_string(r.hamiltonian()) == "p_q*v - (0.5*v^2 - 0.5*q^2 - 0.1*z)");

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int s = 0; s < 100; ++s) {
    const Vec x = vec({u(rng), u(rng), u(rng), u(rng)});
    const Vec a = reduced_rhs(r, as_span(x));
    const Vec b = contact_vf(r.contact(), as_span(x));
    CHECK((a - b).lpNorm<Eigen::Infinity>() <= 1e-12);
    // Velocity controls: q' = v, P' = P L_z + L_q, z' = L.
    const double q = x(0), P = x(1), z = x(2), v = x(3);
    const double L = 0.5 * v * v - 0.5 * q * q - 0.1 * z;
    CHECK(a(0) == doctest::Approx(v).epsilon(1e-14));
    CHECK(a(1) == doctest::Approx(-0.1 * P - q).epsilon(1e-13));
    CHECK(a(2) == doctest::Approx(L).epsilon(1e-13));
    // The constraint dH0/dv = 0 is P = L_v.
    const Vec w = solve_control_stationarity(r.compiled(), as_span(Vec(x.head(3))), vec({0.0}));
    CHECK(w(0) == doctest::Approx(P).epsilon(1e-12));
  }

  // F = 0: the action is frozen.
  const ReducedContactOcp f0 = reduce(scalar("q*v", "0", 0, 1), 1.0);
  CHECK(reduced_rhs(f0, as_span(vec({0.5, 2.0, 3.0, 1.5})))(2) == 0.0);
}

TEST_CASE("z-independent reduction agrees with the classical normal field") {
  const HerglotzOcpProblem hp = scalar("sin(q) + v", "(q^2 + v^2)/2 + q*v", 0.3, 0.0);
  const ReducedContactOcp r = reduce(hp, -1.0);
  const PmpSystem classical = extend(to_classical(hp));
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int s = 0; s < 50; ++s) {
    const double q = u(rng), p = u(rng), z = u(rng), v = u(rng);
    const Vec red = reduced_rhs(r, as_span(vec({q, p, z, v})));
    // Classical chart (x0, x, p0, p, u) with p0 = -1 and P = p.
    const Vec cl = pmp_rhs(classical, as_span(vec({z, q, -1.0, p, v})));
    CHECK(red(0) == doctest::Approx(cl(1)).epsilon(1e-14));
    CHECK(red(1) == doctest::Approx(cl(3)).epsilon(1e-13));
    CHECK(red(2) == doctest::Approx(cl(0)).epsilon(1e-13));
  }
}

TEST_CASE("sign audit against the reduced closed form") {
  HerglotzOcpProblem pb;
  pb.states = {"a", "b"};
  pb.controls = {"u"};
  pb.dynamics = {parse("b + 0.3*z*a"), parse("u - sin(a)*z")};
  pb.cost = parse("(a^2 + u^2)/2 - 0.2*z*b + exp(0.1*z)*u");
  pb.x_start = vec({0, 0});
  pb.x_end = vec({1, 0});
  const ClosedFormAudit audit = reduced_closed_form_audit(reduce(pb, -1.0), 100);
  // The state and costate rates match the closed form term by term.
  CHECK(audit.rhs_residual <= 1e-12);
  // The printed constraint is -dH0/du: same zero set, opposite sign.
  CHECK(audit.constraint_sum <= 1e-12);
  CHECK(audit.constraint_difference > 0.1);
}

TEST_CASE("conformal pullback of the reduction map") {
  HerglotzOcpProblem pb;
  pb.states = {"a", "b"};
  pb.controls = {"u"};
  pb.dynamics = {parse("b*z"), parse("u")};
  pb.cost = parse("u^2/2 + a*b - 0.3*z");
  pb.x_start = vec({0, 0});
  pb.x_end = vec({1, 0});
  for (double lambda0 : {-1.0, 1.0, -2.5}) {
    const ReducedContactOcp r = reduce(pb, lambda0);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int s = 0; s < 100; ++s) {
      // (a, b, p_a, p_b, z, p_z, u) with lambda0 + p_z kept away from 0.
      Vec x = vec({u(rng), u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)});
      if (std::abs(lambda0 + x(5)) < 0.2) x(5) += 0.5;
      const ConformalResidual c = conformal_pullback_check(r, as_span(x));
      CHECK(c.form <= 1e-10);
      CHECK(c.hamiltonian <= 1e-10);
    }
  }
  // The printed map P = -(lambda0 + p_z) p with factor -(lambda0 + p_z) fails
  // unless (lambda0 + p_z)^2 = 1.
  const ReducedContactOcp r = reduce(pb, -1.0);
  const Vec x = vec({0.4, -0.7, 1.1, 0.3, 0.2, -0.5, 0.9});
  const ConformalResidual printed = conformal_pullback_check(r, as_span(x), ReductionMap::Printed);
  CHECK(printed.form == doctest::Approx(1.25).epsilon(1e-12));
  CHECK(printed.hamiltonian > 0.05);
  const Vec unit = vec({0.4, -0.7, 1.1, 0.3, 0.2, 0.0, 0.9});
  CHECK(conformal_pullback_check(r, as_span(unit), ReductionMap::Printed).form <= 1e-14);
}

TEST_CASE("p0 + p_z follows its exponential law") {
  const FullHerglotzSystem sys = extend(damped());
  const double gamma = 0.1;
  const Trajectory tr =
      integrate_full(sys, full_base(-1.0, 0.0, 0.7, 0.0, 0.3), 0.0, 2.0, IntegratorConfig::rk45(1e-11, 1e-13));
  double worst = 0.0;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const double mu = tr.samples[i](1) + tr.samples[i](5);
    const double expected = -0.7 * std::exp(gamma * tr.times[i]);
    worst = std::max(worst, std::abs(mu - expected) / std::abs(expected));
  }
  CHECK(worst <= 1e-9);
  const PzReport rep = pz_invariant_check(sys, tr);
  CHECK(rep.law_applicable);
  CHECK_FALSE(rep.degenerate);
  CHECK(rep.max_rel_error <= 1e-9);
  CHECK(rep.min_abs == doctest::Approx(0.7).epsilon(1e-9));

  // Without the running integral the law is checked by quadrature.
  Trajectory bare = tr;
  bare.diagnostic_names.clear();
  bare.diagnostics.clear();
  CHECK(pz_invariant_check(sys, bare).max_rel_error <= 1e-6);

  // z-independent cost: the factor is constant.
  const FullHerglotzSystem zi = extend(scalar("v", "(q^2 + v^2)/2", 1, 0));
  const Trajectory t2 = integrate_full(zi, full_base(-1.0, 1.0, 0.2, 0.0, 0.4), 0.0, 1.0, IntegratorConfig::rk4(1e-2));
  for (const auto& s : t2.samples) CHECK(s(5) == 0.4);
  CHECK(pz_invariant_check(zi, t2).max_rel_error == 0.0);

  // Vanishing initial factor stays zero (no controls, so no elimination).
  HerglotzOcpProblem nc;
  nc.states = {"x"};
  nc.dynamics = {parse("-x")};
  nc.cost = parse("x^2 - 0.3*z");
  nc.x_start = vec({1});
  nc.x_end = vec({0});
  const FullHerglotzSystem ncs = extend(nc);
  Vec b0(6);
  b0 << 0.0, -1.0, 1.0, 0.5, 0.0, 1.0;
  const PzReport deg = pz_invariant_check(ncs, integrate_full(ncs, b0, 0.0, 1.0, IntegratorConfig::rk4(1e-2)));
  CHECK(deg.degenerate);
  CHECK(deg.min_abs == 0.0);
  CHECK(deg.max_rel_error == 0.0);

  // X depending on z: the closed form does not apply.
  CHECK_FALSE(pz_invariant_check(extend(scalar("v*z", "v^2", 0, 1)), tr).law_applicable);
}

TEST_CASE("x0 and z stay equal along the full flow") {
  const FullHerglotzSystem sys = extend(damped());
  const Trajectory tr =
      integrate_full(sys, full_base(-1.0, 0.1, 0.8, 0.25, 0.1), 0.0, 1.0, IntegratorConfig::rk4(1e-3));
  CHECK(tr.size() == 1001);
  double drift = 0.0;
  for (const auto& s : tr.samples) drift = std::max(drift, std::abs(s(0) - s(4)));
  CHECK(drift <= 1e-9);
}

TEST_CASE("projection of the full flow satisfies the reduced flow") {
  const HerglotzOcpProblem pb = damped();
  const FullHerglotzSystem sys = extend(pb);
  const ReducedContactOcp r = reduce(pb, -1.0);
  const IntegratorConfig cfg = IntegratorConfig::rk45(1e-12, 1e-14);
  const Vec start = full_base(-1.0, 0.0, 0.9, 0.0, 0.2);
  const Trajectory full = integrate_full(sys, start, 0.0, 1.0, cfg);
  const ProjectionReport rep = consistency_project(r, full);
  CHECK(rep.x0_z_drift <= 1e-9);
  CHECK(rep.rhs_residual <= 1e-6);

  // Independent integration of the reduced flow from the projected start.
  const Vec y0 = r.project(as_span(start));
  CHECK(y0(1) == doctest::Approx(-0.9 / (-1.0 + 0.2)).epsilon(1e-15));
  const Trajectory red = integrate(reduced_flow(r), y0, 0.0, 1.0, cfg);
  double worst = 0.0;
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    worst = std::max(worst, (red.at(t) - rep.reduced.at(t).head(3)).lpNorm<Eigen::Infinity>());
  }
  CHECK(worst <= 1e-6);

  // The printed map does not intertwine the flows.
  CHECK(consistency_project(r, full, ReductionMap::Printed).rhs_residual > 1e-2);

  // Unequal x0 and z, or p0 other than lambda0, are rejected.
  Vec off = start;
  off(0) += 0.5;
  CHECK_THROWS_AS(consistency_project(r, integrate_full(sys, off, 0.0, 0.5, cfg)), InputError);
  CHECK_THROWS_AS(consistency_project(reduce(pb, 1.0), full), InputError);

  // z-independent case with p_z = 0 and lambda0 = -1: the projection drops
  // (x0, p0, p_z).
  const HerglotzOcpProblem zi = scalar("v", "(q^2 + v^2)/2", 1, 0);
  const Trajectory fz = integrate_full(extend(zi), full_base(-1.0, 1.0, -1.3, 0.0, 0.0), 0.0, 1.0, cfg);
  const ProjectionReport pz = consistency_project(reduce(zi, -1.0), fz);
  for (std::size_t i = 0; i < fz.size(); ++i) {
    CHECK(pz.reduced.samples[i](0) == fz.samples[i](2));
    CHECK(pz.reduced.samples[i](1) == fz.samples[i](3));
    CHECK(pz.reduced.samples[i](2) == fz.samples[i](4));
  }
}

TEST_CASE("full and reduced boundary value solutions agree") {
  const HerglotzOcpProblem pb = damped();
  const FullHerglotzSystem sys = extend(pb);
  const ReducedContactOcp r = reduce(pb, -1.0);
  const FullSolution full = solve_full(sys, -1.0);
  const ReducedSolution red = solve_reduced(r);
  CHECK(full.terminal_residual <= 1e-8);
  CHECK(red.terminal_residual <= 1e-8);
  CHECK(full.warnings.empty());
  CHECK(full.min_abs_mu > 0.5);
  const double mu_a = -1.0 + full.pz_start;
  CHECK(red.p_start(0) == doctest::Approx(-full.p_start(0) / mu_a).epsilon(1e-7));
  for (double t = 0.0; t <= 1.0; t += 0.1) {
    const Vec a = full.trajectory.at(t), b = red.trajectory.at(t);
    CHECK(a(2) == doctest::Approx(b(0)).epsilon(1e-7));
    CHECK(a(4) == doctest::Approx(b(2)).epsilon(1e-7));
    CHECK(std::abs(a(6) - b(3)) <= 1e-6);
  }
  for (double g : full.trajectory.diagnostic("dH_du")) CHECK(g <= 1e-10);
  for (double g : red.trajectory.diagnostic("dH0_du")) CHECK(g <= 1e-10);
  // The contact Hamiltonian obeys dH0/dt = -H0 dH0/dz = -0.1 H0 along the flow.
  const auto h = red.trajectory.diagnostic("H0");
  const double expect = h.front() * std::exp(-0.1 * (red.trajectory.times.back() - red.trajectory.times.front()));
  CHECK(h.back() == doctest::Approx(expect).epsilon(1e-8));
}

TEST_CASE("classical limit matches the classical maximum principle") {
  const HerglotzOcpProblem pb = scalar("v", "(q^2 + v^2)/2", 1.0, 0.0);
  BvpConfig ccfg;
  ccfg.shooting.tol = 1e-12;
  ccfg.integrator = IntegratorConfig::rk4(1e-3);
  HerglotzBvpConfig hcfg;
  hcfg.shooting.tol = 1e-12;
  hcfg.integrator = ccfg.integrator;
  const BvpSolution cl = solve_bvp(extend(to_classical(pb)), -1.0, ccfg);
  const FullSolution full = solve_full(extend(pb), -1.0, hcfg);
  const ReducedSolution red = solve_reduced(reduce(pb, -1.0), hcfg);
  for (const auto& s : full.trajectory.samples) CHECK(std::abs(s(5)) <= 1e-12);
  double worst_full = 0.0, worst_red = 0.0;
  for (double t = 0.0; t <= 1.0; t += 0.01) {
    const Vec c = cl.trajectory.at(t), f = full.trajectory.at(t), r = red.trajectory.at(t);
    worst_full = std::max({worst_full, std::abs(c(1) - f(2)), std::abs(c(3) - f(3))});
    worst_red = std::max({worst_red, std::abs(c(1) - r(0)), std::abs(c(3) - r(1))});
  }
  CHECK(worst_full <= 1e-9);
  CHECK(worst_red <= 1e-9);
}

TEST_CASE("Herglotz equations recovered from the velocity-controlled problem") {
  const HerglotzLagrangian lag = HerglotzLagrangian::standard(1, parse("0.5*v^2 - 0.5*q^2 - 0.1*z"));
  const RecoveryReport rep = herglotz_equation_recovery(lag, 0.0, 1.0, vec({0.0}), vec({1.0}));
  CHECK(rep.el_residual <= 1e-6);
  CHECK(rep.flow_agreement <= 1e-6);
  CHECK(rep.solution.size() == 1001);
  CHECK(rep.solution.samples.back()(0) == doctest::Approx(1.0).epsilon(1e-8));

  // gamma = 0: classical q'' = -q, so q = sin t / sin 1.
  const HerglotzLagrangian cl = HerglotzLagrangian::standard(1, parse("0.5*v^2 - 0.5*q^2"));
  const RecoveryReport rc = herglotz_equation_recovery(cl, 0.0, 1.0, vec({0.0}), vec({1.0}));
  for (std::size_t i = 0; i < rc.solution.size(); i += 50) {
    const double t = rc.solution.times[i];
    CHECK(rc.solution.samples[i](0) == doctest::Approx(std::sin(t) / std::sin(1.0)).epsilon(1e-9));
  }

  // Free particle: straight line at unit speed.
  const HerglotzLagrangian fp = HerglotzLagrangian::standard(1, parse("0.5*v^2"));
  HerglotzBvpConfig tight;
  tight.shooting.tol = 1e-12;
  const RecoveryReport rf = herglotz_equation_recovery(fp, 0.0, 2.0, vec({1.0}), vec({3.0}), 0.0, tight);
  for (std::size_t i = 0; i < rf.solution.size(); ++i) {
    CHECK(rf.solution.samples[i](0) == doctest::Approx(1.0 + rf.solution.times[i]).epsilon(1e-10));
    CHECK(rf.solution.samples[i](1) == doctest::Approx(1.0).epsilon(1e-10));
  }

  const HerglotzLagrangian sing = HerglotzLagrangian::standard(1, parse("v - q^2"));
  CHECK_THROWS_AS(herglotz_equation_recovery(sing, 0.0, 1.0, vec({0.0}), vec({1.0})), SingularError);
}
