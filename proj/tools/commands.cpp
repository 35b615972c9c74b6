#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>

#include "problem.hpp"

#include "cpmp/error.hpp"
#include "cpmp/oracle.hpp"
#include "cpmp/sampling.hpp"

namespace cpmp::cli {
namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

// Failure inside a named pipeline stage; keeps the exit-code class.
template <class E>
[[noreturn]] void rethrow_in(const std::string& stage, const E& e) {
  throw E(stage + ": " + e.what());
}

template <class F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const SingularError& e) {
    rethrow_in(name, e);
  } catch (const ConvergenceError& e) {
    rethrow_in(name, e);
  } catch (const EvalError& e) {
    rethrow_in(name, e);
  } catch (const InputError& e) {
    rethrow_in(name, e);
  }
}

struct Checks {
  json list = json::array();
  bool passed = true;

  void add(const std::string& name, double value, double tol, bool ok) {
    list.push_back({{"name", name}, {"value", value}, {"tolerance", tol}, {"pass", ok}});
    passed = passed && ok;
  }
  void at_most(const std::string& name, double value, double tol) { add(name, value, tol, value <= tol); }
  void at_least(const std::string& name, double value, double bound) { add(name, value, bound, value >= bound); }
};

struct Run {
  Trajectory trajectory;
  json report = json::object();
  Checks checks;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json vec_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

double column_drift(const Trajectory& tr, const std::string& name) {
  const auto c = tr.column(name);
  double d = 0.0;
  for (double v : c) d = std::max(d, std::abs(v - c.front()));
  return d;
}

double diagnostic_max(const Trajectory& tr, const std::string& name) {
  double d = 0.0;
  for (double v : tr.diagnostic(name)) d = std::max(d, std::abs(v));
  return d;
}

void apply(Problem& pb, const Options& opt) {
  pb.shooting.seed = opt.seed;
  if (opt.tol) {
    if (!(*opt.tol > 0.0)) throw InputError("--tol must be positive");
    pb.shooting.tol = *opt.tol;
  }
  if (opt.steps) {
    if (*opt.steps < 1) throw InputError("--steps must be positive");
    if (pb.kind == Kind::GasPiston) {
      pb.integrator.max_step = pb.gas.horizon / *opt.steps;
    } else {
      pb.integrator = IntegratorConfig::rk4((pb.b - pb.a) / *opt.steps);
    }
  }
  if (opt.depth < 0) throw InputError("--depth must be nonnegative");
  if (opt.lambda0) pb.lambda0 = opt.lambda0;
}

double terminal_tol(const Options& opt) { return opt.tol ? std::max(*opt.tol, 1e-8) : 1e-8; }

json dump_constraints(const ConstraintSet& cs) {
  json levels = json::array();
  for (const auto& level : cs.levels) {
    json l = {{"level", level.level}, {"constraints", json::array()}};
    for (const auto& c : level.constraints) l["constraints"].push_back({{"expr", to_string(c.expr)}, {"from", c.provenance}});
    levels.push_back(l);
  }
  return {{"levels", levels}, {"closed", cs.closed}, {"closure_level", cs.closure_level}, {"reason", cs.closure_reason}};
}

// Control elimination needs an invertible d2H/du2 somewhere; when it is
// singular at every probe the constraint set is dumped and the run stops.
void require_regular(const PresymplecticControlSystem& pre, const Options& opt, Run& run) {
  if (pre.controls.empty()) return;
  const auto n = static_cast<Eigen::Index>(pre.chart().size());
  const Vec lo = Vec::Constant(n, 0.25), hi = Vec::Constant(n, 1.25);
  for (std::size_t i = 1; i <= 8; ++i) {
    if (regularity_test(pre, as_span(halton_in_box(i, lo, hi)))) return;
  }
  run.report["constraints"] = dump_constraints(compatibility_constraints(pre, opt.depth));
  throw SingularError("control elimination (dH/du = 0) is singular: d2H/du2 is not invertible; constraint set "
                      "up to depth " + std::to_string(opt.depth) + " is in the report");
}

// --- per-kind pipelines -----------------------------------------------------

void run_ocp(const Problem& pb, const Options& opt, Run& run) {
  const PmpSystem sys = extend(pb.ocp);
  const double lambda0 = pb.lambda0.value_or(default_lambda0(pb.ocp.sense));
  run.report["branch"] = lambda0 == 0.0 ? "abnormal" : "normal";
  run.report["lambda0"] = lambda0;
  BvpConfig cfg;
  cfg.integrator = pb.integrator;
  cfg.shooting = pb.shooting;
  cfg.p_guess = pb.p_guess;
  cfg.u_guess = pb.u_guess;
  require_regular(sys.presymplectic(), opt, run);
  const BvpSolution sol = stage("indirect shooting", [&] { return solve_bvp(sys, lambda0, cfg); });
  run.trajectory = sol.trajectory;
  run.report["p_start"] = vec_json(sol.p_start);
  run.report["terminal_residual"] = sol.terminal_residual;
  run.report["shooting_attempts"] = sol.shooting_attempts;
  run.report["objective"] = sol.trajectory.column("x0").back() - sol.trajectory.column("x0").front();
  run.checks.at_most("terminal residual", sol.terminal_residual, terminal_tol(opt));
  run.checks.at_most("p0 drift", column_drift(sol.trajectory, "p0"), 1e-9);
  run.checks.at_most("dH/du norm", diagnostic_max(sol.trajectory, "dH_du"), 1e-6);
  return;
}

void run_herglotz(const Problem& pb, const Options& opt, Run& run) {
  const HerglotzOcpProblem& hp = pb.herglotz;
  const double lambda0 = pb.lambda0.value_or(default_lambda0(hp.sense));
  run.report["lambda0"] = lambda0;
  HerglotzBvpConfig cfg;
  cfg.integrator = pb.integrator;
  cfg.shooting = pb.shooting;
  cfg.p_guess = pb.p_guess;
  cfg.pz_guess = pb.pz_guess;
  cfg.u_guess = pb.u_guess;

  if (pb.form == "reduced") {
    if (lambda0 == 0.0) throw InputError("the reduced form needs lambda0 != 0");
    run.report["branch"] = "reduced";
    require_regular(extend(hp).presymplectic(), opt, run);
    const ReducedContactOcp r = reduce(hp, lambda0);
    const ReducedSolution sol = stage("reduced shooting", [&] { return solve_reduced(r, cfg); });
    run.trajectory = sol.trajectory;
    run.report["p_start"] = vec_json(sol.p_start);
    run.report["terminal_residual"] = sol.terminal_residual;
    run.report["shooting_attempts"] = sol.shooting_attempts;
    run.report["objective"] = sol.trajectory.column(hp.z_name).back();
    run.checks.at_most("terminal residual", sol.terminal_residual, terminal_tol(opt));
    run.checks.at_most("dH0/du norm", diagnostic_max(sol.trajectory, "dH0_du"), 1e-6);
    return;
  }

  run.report["branch"] = lambda0 == 0.0 ? "abnormal" : "normal";
  const FullHerglotzSystem sys = extend(hp);
  require_regular(sys.presymplectic(), opt, run);
  const FullSolution sol = stage("full-system shooting", [&] { return solve_full(sys, lambda0, cfg); });
  run.trajectory = sol.trajectory;
  run.report["p_start"] = vec_json(sol.p_start);
  run.report["pz_start"] = sol.pz_start;
  run.report["terminal_residual"] = sol.terminal_residual;
  run.report["shooting_attempts"] = sol.shooting_attempts;
  run.report["min_abs_mu"] = sol.min_abs_mu;
  run.report["warnings"] = sol.warnings;
  run.report["objective"] = sol.trajectory.column(hp.z_name).back();
  run.checks.at_most("terminal residual", sol.terminal_residual, terminal_tol(opt));
  run.checks.at_most("p0 drift", column_drift(sol.trajectory, "p0"), 1e-9);
  run.checks.at_most("dH/du norm", diagnostic_max(sol.trajectory, "dH_du"), 1e-6);

  const PzReport law = pz_invariant_check(sys, sol.trajectory);
  run.report["p0_plus_pz_law"] = {{"applicable", law.law_applicable},
                                  {"degenerate", law.degenerate},
                                  {"min_abs", law.min_abs},
                                  {"max_rel_error", law.max_rel_error}};
  if (law.law_applicable && !law.degenerate) run.checks.at_most("p0+p_z law", law.max_rel_error, 1e-6);

  if (lambda0 != 0.0 && sol.min_abs_mu > 1e-10) {
    const ReducedContactOcp r = reduce(hp, lambda0);
    const ProjectionReport proj = stage("reduction", [&] { return consistency_project(r, sol.trajectory); });
    run.checks.at_most("x0 - z drift", proj.x0_z_drift, 1e-9);
    run.checks.at_most("reduced field residual", proj.rhs_residual, 1e-6);
    const int m = r.m(), k = r.k();
    Vec lo = Vec::Constant(2 * m + 2 + k, -1.0), hi = Vec::Constant(2 * m + 2 + k, 1.0);
    lo(2 * m + 1) = -0.5 * std::abs(lambda0);
    hi(2 * m + 1) = 0.5 * std::abs(lambda0);
    double conformal = 0.0;
    for (std::size_t i = 1; i <= 100; ++i) {
      const ConformalResidual c = conformal_pullback_check(r, as_span(halton_in_box(i, lo, hi)));
      conformal = std::max({conformal, c.form, c.hamiltonian});
    }
    run.checks.at_most("conformal pullback", conformal, 1e-10);
  }
  return;
}

void run_lagrangian(const Problem& pb, const Options& opt, Run& run) {
  run.report["branch"] = "normal";
  const LagrangianProblem& lp = pb.lagrangian;
  HerglotzBvpConfig cfg;
  cfg.integrator = pb.integrator;
  cfg.shooting = pb.shooting;
  cfg.p_guess = pb.p_guess;
  const double step = opt.steps ? (pb.b - pb.a) / *opt.steps : 1e-3;
  const RecoveryReport rec = stage("Herglotz recovery", [&] {
    return herglotz_equation_recovery(lp.lagrangian, pb.a, pb.b, lp.q_start, lp.q_end, lp.z_start, cfg, step);
  });
  run.trajectory = rec.solution;
  run.report["p_start"] = vec_json(rec.p_start);
  run.checks.at_most("generalized Euler-Lagrange residual", rec.el_residual, 1e-6);
  run.checks.at_most("agreement with the Herglotz flow", rec.flow_agreement, 1e-6);
  return;
}

void run_contact(const Problem& pb, const Options&, Run& run) {
  run.report["branch"] = "contact";
  const ContactSystem& sys = pb.contact.system;
  const Vec& params = pb.contact.params;
  run.trajectory = stage("contact flow", [&] {
    return integrate(contact_rhs(sys, params), pb.contact.start, pb.a, pb.b, pb.integrator, sys.chart());
  });
  Trajectory& tr = run.trajectory;
  const auto full = [&](const Vec& y) {
    Vec x(y.size() + params.size());
    x << y, params;
    return x;
  };
  std::vector<int> wrt(static_cast<std::size_t>(sys.dim()));
  for (int i = 0; i < sys.dim(); ++i) wrt[static_cast<std::size_t>(i)] = i;
  double dissipation = 0.0;
  tr.add_diagnostic("H", [&](double, const Vec& y) { return sys.compiled().value(as_span(full(y))); });
  std::size_t row = 0;
  tr.add_diagnostic("dissipation_residual", [&](double, const Vec& y) {
    const JetValue j = sys.compiled().jet(as_span(full(y)), wrt, 1);
    const Vec& slope = tr.slopes.empty() ? contact_vf(sys, as_span(full(y))) : tr.slopes[row];
    ++row;
    const double r = std::abs(j.grad.dot(slope) + j.value * j.grad(sys.dim() - 1));
    dissipation = std::max(dissipation, r / (1.0 + std::abs(j.value)));
    return r;
  });
  run.checks.at_most("dH/dt + H dH/dz (relative)", dissipation, 1e-6);

  double eta = 0.0, lie = 0.0;
  const Vec lo = pb.contact.start.array() - 0.5, hi = pb.contact.start.array() + 0.5;
  for (std::size_t i = 0; i < 10; ++i) {
    const Vec y = i == 0 ? pb.contact.start : Vec(halton_in_box(i, lo, hi));
    const IdentityResiduals r = check_contact_identities(sys, as_span(full(y)));
    eta = std::max(eta, r.eta);
    lie = std::max(lie, r.lie);
  }
  run.checks.at_most("eta(X_H) + H", eta, 1e-9);
  run.checks.at_most("L_X eta + R(H) eta", lie, 1e-9);
  return;
}

void run_gas_piston(const GasPistonProblem& g, const IntegratorConfig& integrator, Run& run) {
  run.report["branch"] = "contact";
  const GasPiston gp = stage("gas-piston construction", [&] { return gas_piston_system(g.params); });
  const ThermoCheck c = check_port_thermo(gp.system, gp.sample_legendrian(50), Vec::Constant(1, 0.7));
  run.checks.at_most("h_internal on the Legendrian submanifold", c.h_internal, 1e-10);
  run.checks.at_most("h_control on the Legendrian submanifold", c.h_control, 1e-10);
  run.checks.at_least("entropy production rate (sampled)", c.min_entropy_rate, 0.0);
  run.report["min_dh_dS"] = c.min_dh_dS;
  try {
    const GasPistonRun sim = stage(
        "gas-piston flow", [&] { return simulate_gas_piston(gp, g.V, g.pi, g.S, g.law, g.horizon, integrator); });
    run.trajectory = sim.trajectory;
    run.checks.at_least("entropy production rate (run)", sim.min_entropy_rate, 0.0);
    run.checks.at_most("entropy decrease per step", sim.max_entropy_decrease, 1e-12);
    run.checks.at_most("Legendrian tangency residual", sim.max_legendrian_residual, 1e-6);
    run.report["steps"] = sim.steps;
  } catch (const Error& e) {
    // A failed flow is itself a failed check when the premises are violated.
    if (c.min_entropy_rate >= 0.0) throw;
    run.report["flow_error"] = e.what();
    run.checks.add("gas-piston flow completed", 0.0, 0.0, false);
  }
  return;
}

IntegratorConfig gas_piston_integrator(const Problem* pb, const GasPistonProblem& g, const Options& opt) {
  IntegratorConfig cfg = pb && pb->integrator.method == Method::Rk45 ? pb->integrator : IntegratorConfig::rk45(1e-10, 1e-12);
  if (!pb || !std::isfinite(cfg.max_step)) cfg.max_step = g.horizon / opt.steps.value_or(1000);
  return cfg;
}

void dispatch(Problem& pb, const Options& opt, Run& run) {
  switch (pb.kind) {
    case Kind::Ocp:
      return run_ocp(pb, opt, run);
    case Kind::HerglotzOcp:
      return run_herglotz(pb, opt, run);
    case Kind::HerglotzLagrangian:
      return run_lagrangian(pb, opt, run);
    case Kind::Contact:
      return run_contact(pb, opt, run);
    case Kind::GasPiston:
      return run_gas_piston(pb.gas, gas_piston_integrator(&pb, pb.gas, opt), run);
  }
  throw InputError("unsupported problem kind");
}

// --- output -----------------------------------------------------------------

void emit(const Options& opt, const Trajectory* tr, const json& report) {
  if (tr && !opt.out.empty()) {
    std::ofstream out(opt.out, std::ios::binary);
    if (!out) throw InputError("cannot write '" + opt.out + "'");
    write_csv(*tr, out);
  }
  const std::string text = report.dump(2) + "\n";
  if (opt.report.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(opt.report, std::ios::binary);
    if (!out) throw InputError("cannot write '" + opt.report + "'");
    out << text;
  }
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const InputError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
      dynamic_cast<const json::exception*>(&e)) {
    return 1;
  }
  return 2;
}

// Runs `body`, maps exceptions to exit codes and still writes a report.
int guarded(const std::string& command, const Options& opt, std::ostream& err,
            const std::function<int(json&, Trajectory*&, Run&)>& body) {
  const auto t0 = Clock::now();
  json report = {{"command", command}, {"seed", opt.seed}};
  Trajectory* tr = nullptr;
  Run run;
  int code = 0;
  try {
    code = body(report, tr, run);
  } catch (const std::exception& e) {
    code = exit_code_for(e);
    err << "error: " << e.what() << "\n";
    for (const auto& [k, v] : run.report.items()) report[k] = v;
    report["error"] = e.what();
    tr = nullptr;
  }
  report["exit_code"] = code;
  report["wall_time_s"] = std::chrono::duration<double>(Clock::now() - t0).count();
  try {
    emit(opt, tr, report);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return code ? code : 1;
  }
  return code;
}

void merge(json& report, const Run& run) {
  for (const auto& [k, v] : run.report.items()) report[k] = v;
  report["checks"] = run.checks.list;
  report["passed"] = run.checks.passed;
  report["accepted_steps"] = run.trajectory.size() ? run.trajectory.size() - 1 : 0;
}

}  // namespace

void write_csv(const Trajectory& tr, std::ostream& out) {
  std::string line = "t";
  for (const auto& c : tr.chart) line += "," + c;
  for (const auto& d : tr.diagnostic_names) line += "," + d;
  out << line << '\n';
  for (std::size_t i = 0; i < tr.size(); ++i) {
    line = fmt(tr.times[i]);
    for (Eigen::Index k = 0; k < tr.samples[i].size(); ++k) line += "," + fmt(tr.samples[i](k));
    if (i < tr.diagnostics.size()) {
      for (double v : tr.diagnostics[i]) line += "," + fmt(v);
    }
    out << line << '\n';
  }
}

int cmd_solve(const std::string& problem_path, const Options& opt, std::ostream& err) {
  return guarded("solve", opt, err, [&](json& report, Trajectory*& tr, Run& run) {
    Problem pb = load_problem(problem_path);
    apply(pb, opt);
    report["kind"] = pb.kind_name;
    dispatch(pb, opt, run);
    merge(report, run);
    tr = &run.trajectory;
    return 0;
  });
}

int cmd_verify(const std::string& problem_path, const Options& opt, std::ostream& err) {
  return guarded("verify", opt, err, [&](json& report, Trajectory*& tr, Run& run) {
    Problem pb = load_problem(problem_path);
    apply(pb, opt);
    report["kind"] = pb.kind_name;
    dispatch(pb, opt, run);
    merge(report, run);
    tr = &run.trajectory;
    if (!run.checks.passed) {
      for (const auto& c : run.checks.list) {
        if (!c["pass"].get<bool>()) err << "check failed: " << c["name"].get<std::string>() << " = " << c["value"] << "\n";
      }
      return 2;
    }
    return 0;
  });
}

int cmd_oracle(const std::string& problem_path, const Options& opt, std::ostream& err) {
  return guarded("oracle", opt, err, [&](json& report, Trajectory*& tr, Run& run) {
    Problem pb = load_problem(problem_path);
    apply(pb, opt);
    report["kind"] = pb.kind_name;
    report["branch"] = "oracle";
    if (pb.kind != Kind::Ocp && pb.kind != Kind::HerglotzOcp) {
      throw InputError("the oracle supports kinds ocp and herglotz_ocp only");
    }
    if (opt.N < 4) throw InputError("--N must be at least 4");

    // Indirect reference, when it can be computed.
    std::optional<Trajectory> reference;
    std::vector<std::string> shared;
    double ref_objective = 0.0;
    try {
      Run indirect;
      if (pb.kind == Kind::Ocp) {
        run_ocp(pb, opt, indirect);
      } else {
        run_herglotz(pb, opt, indirect);
      }
      reference = indirect.trajectory;
      ref_objective = indirect.report["objective"].get<double>();
      report["indirect"] = {{"objective", ref_objective}, {"terminal_residual", indirect.report["terminal_residual"]}};
    } catch (const Error& e) {
      report["indirect"] = nullptr;
      report["indirect_error"] = e.what();
    }
    if (pb.kind == Kind::Ocp) {
      shared = pb.ocp.states;
    } else {
      shared = pb.herglotz.states;
      shared.push_back(pb.herglotz.z_name);
    }

    std::vector<int> Ns{opt.N};
    if (opt.refine) {
      Ns.clear();
      for (int div : {16, 8, 4, 2, 1}) {
        const int n = opt.N / div;
        if (n >= 4 && (Ns.empty() || Ns.back() != n)) Ns.push_back(n);
      }
    }
    json runs = json::array();
    std::vector<double> gaps, objective_gaps;
    TranscriptionResult last;
    for (int n : Ns) {
      TranscriptionConfig cfg;
      cfg.N = n;
      if (pb.u_guess.size()) cfg.u_guess = pb.u_guess;
      last = stage("direct transcription", [&] {
        return pb.kind == Kind::Ocp ? transcribe_classical(pb.ocp, cfg) : transcribe_herglotz(pb.herglotz, cfg);
      });
      json r = {{"N", n},
                {"objective", last.objective},
                {"terminal_violation", last.terminal_violation},
                {"gradient_norm", last.gradient_norm},
                {"iterations", last.iterations},
                {"converged", last.converged}};
      if (!last.message.empty()) r["message"] = last.message;
      if (reference) {
        gaps.push_back(interior_gap(last, *reference, shared));
        objective_gaps.push_back(std::abs(last.objective - ref_objective));
        r["interior_gap"] = gaps.back();
        r["objective_gap"] = objective_gaps.back();
      }
      runs.push_back(r);
    }
    report["runs"] = runs;
    if (opt.refine && gaps.size() > 1) {
      const auto decreasing = [](const std::vector<double>& v) {
        for (std::size_t i = 1; i < v.size(); ++i) {
          if (!(v[i] < v[i - 1])) return false;
        }
        return true;
      };
      // The interior gap levels off at the optimizer tolerance on fine grids;
      // the objective gap follows the quadrature order.
      report["refinement"] = {{"objective_gap_decreases", decreasing(objective_gaps)},
                              {"interior_gap_decreases", decreasing(gaps)},
                              {"interior_gap_coarsest", gaps.front()},
                              {"interior_gap_finest", gaps.back()}};
    }
    run.trajectory = last.trajectory;
    report["accepted_steps"] = run.trajectory.size() - 1;
    tr = &run.trajectory;
    if (!last.converged) {
      err << "warning: " << last.message << "\n";
      return 2;
    }
    return 0;
  });
}

int cmd_demo_gas_piston(const std::string& config_path, const Options& opt, std::ostream& err) {
  return guarded("demo", opt, err, [&](json& report, Trajectory*& tr, Run& run) {
    GasPistonProblem g;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw InputError("cannot open config '" + config_path + "'");
      json j;
      try {
        j = json::parse(in);
      } catch (const json::parse_error& e) {
        throw InputError(config_path + ": invalid JSON: " + e.what());
      }
      g = parse_gas_piston(j);
    }
    report["kind"] = "gas_piston";
    report["config"] = {{"m", g.params.m},
                        {"d", g.params.d},
                        {"U", to_string(g.params.U)},
                        {"u", to_string(g.law.u)},
                        {"box",
                         {{"V", {g.params.V_lo, g.params.V_hi}},
                          {"pi", {g.params.pi_lo, g.params.pi_hi}},
                          {"S", {g.params.S_lo, g.params.S_hi}}}},
                        {"start", {{"V", g.V}, {"pi", g.pi}, {"S", g.S}}},
                        {"horizon", g.horizon}};
    run_gas_piston(g, gas_piston_integrator(nullptr, g, opt), run);
    merge(report, run);
    tr = &run.trajectory;

    const GasPiston gp = gas_piston_system(g.params);
    const LiftedControlSystem lifted =
        stage("lifted Hamiltonian", [&] { return gas_piston_control_hamiltonian(gp, std::max(opt.depth, 1)); });
    const TermCheckReport terms = gas_piston_term_check(gp, lifted, 50);
    json tc = json::array();
    for (const auto& t : terms.hamiltonian_terms) {
      tc.push_back({{"term", t.term}, {"max_residual", t.max_residual}, {"matches", t.matches}});
    }
    report["lifted"] = {{"hamiltonian", to_string(lifted.contact.hamiltonian())},
                        {"elimination_level", lifted.elimination_level},
                        {"term_check", tc},
                        {"discrepant_terms", terms.discrepant_terms()},
                        {"alpha_residual", terms.alpha_residual},
                        {"constraint_residual", terms.constraint_residual},
                        {"constraint_residual_sign_fixed", terms.constraint_residual_sign_fixed}};

    // Lifted flow from the starting state with unit momenta made admissible.
    const Vec on = gp.on_legendrian(g.V, g.pi, g.S);
    Vec x(13);
    x << on.head(6), Vec::Constant(6, 0.1), on(6);
    try {
      const Vec start = stage("admissible lift", [&] { return admissible_lift(lifted, x); });
      const LiftedRun lr = stage("lifted flow", [&] {
        return integrate_lifted(lifted, start, std::min(1.0, g.horizon), IntegratorConfig::rk45(1e-10, 1e-12));
      });
      const auto us = lr.trajectory.diagnostic("u");
      report["lifted"]["flow"] = {{"steps", lr.trajectory.size() - 1},
                                  {"constraint_drift", lr.constraint_drift},
                                  {"u_min", *std::min_element(us.begin(), us.end())},
                                  {"u_max", *std::max_element(us.begin(), us.end())}};
    } catch (const Error& e) {
      report["lifted"]["flow"] = {{"error", e.what()}};
    }
    return run.checks.passed ? 0 : 2;
  });
}

}  // namespace cpmp::cli
