#include "cpmp/herglotz_ocp.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

#include "cpmp/error.hpp"
#include "cpmp/sampling.hpp"

namespace cpmp {
namespace {

std::vector<int> range(int from, int to) {
  std::vector<int> v;
  for (int i = from; i < to; ++i) v.push_back(i);
  return v;
}

Vec join(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

// Appends eliminated controls to every sample of a flow trajectory over the
// leading entries of `H`'s chart; control slopes by neighbour differences.
Trajectory attach_controls(const Trajectory& base, const CompiledExpr& H, Vec u) {
  const int k = static_cast<int>(u.size());
  Trajectory tr;
  tr.chart = H.chart();
  tr.times = base.times;
  for (std::size_t i = 0; i < base.size(); ++i) {
    u = solve_control_stationarity(H, as_span(base.samples[i]), u);
    tr.samples.push_back(join(base.samples[i], u));
    tr.slopes.push_back(join(base.slopes[i], Vec::Zero(k)));
  }
  const std::size_t n = tr.size();
  for (std::size_t i = 0; i < n && n > 1; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1, hi = i + 1 == n ? i : i + 1;
    tr.slopes[i].tail(k) = (tr.samples[hi].tail(k) - tr.samples[lo].tail(k)) / (tr.times[hi] - tr.times[lo]);
  }
  return tr;
}

double control_gradient_norm(const CompiledExpr& H, const Vec& x, int k) {
  if (k == 0) return 0.0;
  const int d = static_cast<int>(x.size());
  return H.jet(as_span(x), range(d - k, d), 1).grad.lpNorm<Eigen::Infinity>();
}

}  // namespace

void HerglotzOcpProblem::validate() const {
  if (states.empty()) throw InputError("problem needs at least one state");
  if (dynamics.size() != states.size()) throw InputError("problem needs one dynamics expression per state");
  if (!(b > a)) throw InputError("interval must satisfy b > a");
  if (x_start.size() != static_cast<Eigen::Index>(states.size())) throw InputError("x_start does not match the states");
  if (x_end.size() != static_cast<Eigen::Index>(states.size())) throw InputError("x_end does not match the states");
  if (z_name.empty()) throw InputError("the action variable needs a name");
  std::set<std::string> names{z_name};
  for (const auto& s : states) {
    if (!names.insert(s).second) throw InputError("name '" + s + "' is declared twice");
  }
  for (const auto& u : controls) {
    if (!names.insert(u).second) throw InputError("name '" + u + "' is declared twice");
  }
  auto check = [&](const Expr& e, const std::string& what) {
    for (const auto& v : e.variables()) {
      if (!names.count(v)) throw InputError(what + " references undeclared name '" + v + "'");
    }
  };
  for (std::size_t i = 0; i < states.size(); ++i) check(dynamics[i], "dynamics of " + states[i]);
  check(cost, "cost");
}

bool HerglotzOcpProblem::z_dependent() const {
  if (cost.depends_on(z_name)) return true;
  for (const auto& X : dynamics) {
    if (X.depends_on(z_name)) return true;
  }
  return false;
}

OcpProblem to_classical(const HerglotzOcpProblem& problem) {
  problem.validate();
  if (problem.z_dependent()) throw InputError("a z-dependent problem has no classical counterpart");
  OcpProblem pb;
  pb.states = problem.states;
  pb.controls = problem.controls;
  pb.dynamics = problem.dynamics;
  pb.cost = problem.cost;
  pb.a = problem.a;
  pb.b = problem.b;
  pb.x_start = problem.x_start;
  pb.x_end = problem.x_end;
  pb.sense = problem.sense;
  return pb;
}

FullHerglotzSystem::FullHerglotzSystem(HerglotzOcpProblem problem) : problem_(std::move(problem)) {
  problem_.validate();
  const auto& pb = problem_;
  std::set<std::string> user(pb.states.begin(), pb.states.end());
  user.insert(pb.controls.begin(), pb.controls.end());
  user.insert(pb.z_name);
  std::vector<std::string> reserved{"x0", "p0", costate_name(pb.z_name)};
  for (const auto& s : pb.states) reserved.push_back(costate_name(s));
  for (const auto& r : reserved) {
    if (user.count(r)) throw InputError("name '" + r + "' is reserved for the extended system");
  }
  const Expr p0 = Expr::variable("p0"), pz = Expr::variable(costate_name(pb.z_name));
  std::vector<Expr> terms{p0 * pb.cost};
  chart_ = {"x0", "p0"};
  pre_.positions = {"x0"};
  pre_.momenta = {"p0"};
  for (std::size_t i = 0; i < pb.states.size(); ++i) {
    chart_.push_back(pb.states[i]);
    pre_.positions.push_back(pb.states[i]);
    pre_.momenta.push_back(costate_name(pb.states[i]));
    terms.push_back(Expr::variable(costate_name(pb.states[i])) * pb.dynamics[i]);
  }
  for (const auto& s : pb.states) chart_.push_back(costate_name(s));
  terms.push_back(pz * pb.cost);
  chart_.push_back(pb.z_name);
  chart_.push_back(costate_name(pb.z_name));
  pre_.positions.push_back(pb.z_name);
  pre_.momenta.push_back(costate_name(pb.z_name));
  chart_.insert(chart_.end(), pb.controls.begin(), pb.controls.end());
  pre_.controls = pb.controls;
  H_ = sum(terms);
  pre_.H = H_;
  compiled_ = CompiledExpr(H_, chart_);
  F_ = CompiledExpr(pb.cost, chart_);
  Fz_ = CompiledExpr(derivative(pb.cost, pb.z_name), chart_);
}

FullHerglotzSystem extend(const HerglotzOcpProblem& problem) { return FullHerglotzSystem(problem); }

Vec full_extended_rhs(const FullHerglotzSystem& sys, std::span<const double> point) {
  if (point.size() != sys.chart().size()) throw InputError("full Herglotz point does not match the chart");
  const int m = sys.m();
  const JetValue j = sys.compiled().jet(point, range(0, sys.base_dim()), 1);
  Vec out(sys.base_dim());
  auto pair = [&](int q, int p) {
    out(q) = j.grad(p);
    out(p) = -j.grad(q);
  };
  pair(sys.ix0(), sys.ip0());
  for (int i = 0; i < m; ++i) pair(sys.ix(i), sys.ip(i));
  pair(sys.iz(), sys.ipz());
  return out;
}

OdeRhs full_flow(const FullHerglotzSystem& sys, Vec u_guess) {
  if (u_guess.size() == 0) u_guess = Vec::Zero(sys.k());
  if (u_guess.size() != sys.k()) throw InputError("control guess does not match the controls");
  auto warm = std::make_shared<Vec>(u_guess);
  return [sys, warm](double, const Vec& y) {
    *warm = solve_control_stationarity(sys.compiled(), as_span(y), *warm);
    const Vec x = join(y, *warm);
    return full_extended_rhs(sys, as_span(x));
  };
}

Trajectory integrate_full(const FullHerglotzSystem& sys, const Vec& base_start, double a, double b,
                          const IntegratorConfig& cfg, Vec u_guess) {
  const int d = sys.base_dim();
  if (base_start.size() != d) throw InputError("start point does not match the base chart");
  if (u_guess.size() == 0) u_guess = Vec::Zero(sys.k());
  if (u_guess.size() != sys.k()) throw InputError("control guess does not match the controls");
  // The base flow augmented by the running integral of F_z.
  auto warm = std::make_shared<Vec>(u_guess);
  const OdeRhs aug = [sys, warm, d](double, const Vec& y) {
    const Vec base = y.head(d);
    *warm = solve_control_stationarity(sys.compiled(), as_span(base), *warm);
    const Vec x = join(base, *warm);
    Vec out(d + 1);
    out << full_extended_rhs(sys, as_span(x)), sys.cost_z().value(as_span(x));
    return out;
  };
  Vec y0(d + 1);
  y0 << base_start, 0.0;
  const Trajectory raw = integrate(aug, y0, a, b, cfg);
  Trajectory base;
  std::vector<double> integral;
  base.times = raw.times;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    base.samples.push_back(raw.samples[i].head(d));
    base.slopes.push_back(raw.slopes[i].head(d));
    integral.push_back(raw.samples[i](d));
  }
  Trajectory tr = attach_controls(base, sys.compiled(), u_guess);
  tr.diagnostic_names = {"int_Fz", "mu"};
  for (std::size_t i = 0; i < tr.size(); ++i) {
    const Vec& x = tr.samples[i];
    tr.diagnostics.push_back({integral[i], x(sys.ip0()) + x(sys.ipz())});
  }
  return tr;
}

PzReport pz_invariant_check(const FullHerglotzSystem& sys, const Trajectory& traj) {
  PzReport rep;
  const std::size_t n = traj.size();
  if (n == 0) return rep;
  const int ip0 = traj.index("p0"), ipz = traj.index(costate_name(sys.problem().z_name));
  for (const auto& X : sys.problem().dynamics) {
    if (X.depends_on(sys.problem().z_name)) rep.law_applicable = false;
  }
  std::vector<double> integral;
  const auto& names = traj.diagnostic_names;
  if (std::find(names.begin(), names.end(), "int_Fz") != names.end()) {
    integral = traj.diagnostic("int_Fz");
  } else {
    auto fz = [&](double t) {
      const Vec x = traj.at(t);
      return sys.cost_z().value(as_span(x));
    };
    integral.push_back(0.0);
    for (std::size_t i = 1; i < n; ++i) {
      const double t0 = traj.times[i - 1], t1 = traj.times[i];
      integral.push_back(integral.back() + (t1 - t0) / 6.0 * (fz(t0) + 4.0 * fz(0.5 * (t0 + t1)) + fz(t1)));
    }
  }
  const double mu_a = traj.samples[0](ip0) + traj.samples[0](ipz);
  rep.degenerate = mu_a == 0.0;
  rep.min_abs = std::abs(mu_a);
  for (std::size_t i = 0; i < n; ++i) {
    const double mu = traj.samples[i](ip0) + traj.samples[i](ipz);
    rep.min_abs = std::min(rep.min_abs, std::abs(mu));
    const double closed = mu_a * std::exp(-integral[i]);
    const double err = closed != 0.0 ? std::abs(mu - closed) / std::abs(closed) : std::abs(mu);
    rep.max_rel_error = std::max(rep.max_rel_error, err);
  }
  return rep;
}

ReducedContactOcp::ReducedContactOcp(HerglotzOcpProblem problem, double lambda0)
    : problem_(std::move(problem)), lambda0_(lambda0) {
  problem_.validate();
  if (lambda0 == 0.0) throw InputError("the reduced system needs lambda0 != 0");
  const auto& pb = problem_;
  std::set<std::string> user(pb.states.begin(), pb.states.end());
  user.insert(pb.controls.begin(), pb.controls.end());
  user.insert(pb.z_name);
  std::vector<std::string> P;
  std::vector<Expr> terms;
  for (std::size_t i = 0; i < pb.states.size(); ++i) {
    P.push_back(costate_name(pb.states[i]));
    if (user.count(P.back())) throw InputError("name '" + P.back() + "' is reserved for the reduced system");
    terms.push_back(Expr::variable(P.back()) * pb.dynamics[i]);
  }
  H0_ = sum(terms) - pb.cost;
  contact_ = ContactSystem(pb.states, P, pb.z_name, H0_, pb.controls);
  chart_ = contact_.chart();
  chart_.insert(chart_.end(), pb.controls.begin(), pb.controls.end());
}

Vec ReducedContactOcp::project(std::span<const double> full_base, ReductionMap map) const {
  const int m = this->m();
  if (static_cast<int>(full_base.size()) < 2 * m + 4) throw InputError("full point is too short for the projection");
  auto at = [&](int i) { return full_base[static_cast<std::size_t>(i)]; };
  const double mu = lambda0_ + at(3 + 2 * m);
  if (map == ReductionMap::Corrected && mu == 0.0) throw SingularError("projection undefined where lambda0 + p_z = 0");
  Vec y(2 * m + 1);
  for (int i = 0; i < m; ++i) {
    y(i) = at(2 + i);
    const double p = at(2 + m + i);
    y(m + i) = map == ReductionMap::Corrected ? -p / mu : -mu * p;
  }
  y(2 * m) = at(2 + 2 * m);
  return y;
}

ReducedContactOcp reduce(const HerglotzOcpProblem& problem, double lambda0) {
  return ReducedContactOcp(problem, lambda0);
}

Vec reduced_rhs(const ReducedContactOcp& r, std::span<const double> point) {
  if (point.size() != r.chart().size()) throw InputError("reduced point does not match (x, P, z, u)");
  return contact_vf(r.contact(), point);
}

OdeRhs reduced_flow(const ReducedContactOcp& r, Vec u_guess) {
  if (u_guess.size() == 0) u_guess = Vec::Zero(r.k());
  if (u_guess.size() != r.k()) throw InputError("control guess does not match the controls");
  auto warm = std::make_shared<Vec>(u_guess);
  return [r, warm](double, const Vec& y) {
    *warm = solve_control_stationarity(r.compiled(), as_span(y), *warm);
    const Vec x = join(y, *warm);
    return contact_vf(r.contact(), as_span(x));
  };
}

ClosedFormAudit reduced_closed_form_audit(const ReducedContactOcp& r, int points) {
  const auto& pb = r.problem();
  const int m = r.m(), k = r.k(), d = 2 * m + 1 + k;
  const CompiledExpr F(pb.cost, r.chart());
  std::vector<CompiledExpr> X;
  for (const auto& e : pb.dynamics) X.emplace_back(e, r.chart());
  const std::vector<int> all = range(0, d);
  const int iz = 2 * m;
  ClosedFormAudit out;
  for (int s = 1; s <= points; ++s) {
    const Vec x = halton_in_box(static_cast<std::size_t>(s), Vec::Constant(d, -1.0), Vec::Constant(d, 1.0));
    const auto sx = as_span(x);
    const JetValue jf = F.jet(sx, all, 1);
    std::vector<JetValue> jx;
    for (const auto& c : X) jx.push_back(c.jet(sx, all, 1));
    const Vec gen = contact_vf(r.contact(), sx);
    auto P = [&](int i) { return x(m + i); };
    double res = std::abs(gen(iz) - jf.value);
    for (int i = 0; i < m; ++i) {
      double printed = P(i) * jf.grad(iz) + jf.grad(i);
      for (int j = 0; j < m; ++j) printed += -P(j) * jx[static_cast<std::size_t>(j)].grad(i)
                                             - jx[static_cast<std::size_t>(j)].grad(iz) * P(i) * P(j);
      res = std::max(res, std::abs(gen(i) - jx[static_cast<std::size_t>(i)].value));
      res = std::max(res, std::abs(gen(m + i) - printed));
    }
    out.rhs_residual = std::max(out.rhs_residual, res);
    if (k > 0) {
      const JetValue jh = r.compiled().jet(sx, range(2 * m + 1, d), 1);
      for (int a = 0; a < k; ++a) {
        double printed = jf.grad(2 * m + 1 + a);
        for (int j = 0; j < m; ++j) printed -= P(j) * jx[static_cast<std::size_t>(j)].grad(2 * m + 1 + a);
        out.constraint_sum = std::max(out.constraint_sum, std::abs(printed + jh.grad(a)));
        out.constraint_difference = std::max(out.constraint_difference, std::abs(printed - jh.grad(a)));
      }
    }
  }
  return out;
}

ConformalResidual conformal_pullback_check(const ReducedContactOcp& r, std::span<const double> point,
                                           ReductionMap map) {
  const auto& pb = r.problem();
  const int m = r.m(), k = r.k();
  if (static_cast<int>(point.size()) != 2 * m + 2 + k) throw InputError("point does not match (x, p, z, p_z, u)");
  // Slice chart x0 = z: (x, p, z, p_z, u). The map is built symbolically and
  // differentiated, so the pullback is exact up to rounding.
  std::vector<std::string> slice;
  for (const auto& s : pb.states) slice.push_back(s);
  for (const auto& s : pb.states) slice.push_back(costate_name(s));
  slice.push_back(pb.z_name);
  slice.push_back(costate_name(pb.z_name));
  slice.insert(slice.end(), pb.controls.begin(), pb.controls.end());
  const Expr mu = Expr::number(r.lambda0()) + Expr::variable(costate_name(pb.z_name));
  std::vector<Expr> Pmap;
  for (const auto& s : pb.states) {
    const Expr p = Expr::variable(costate_name(s));
    Pmap.push_back(map == ReductionMap::Corrected ? -p / mu : -(mu * p));
  }
  const int ns = 2 * m + 2;  // covector components over (x, p, z, p_z)
  Vec pull = Vec::Zero(ns);
  pull(2 * m) = 1.0;  // dz
  for (int i = 0; i < m; ++i) {
    const CompiledExpr Pi(Pmap[static_cast<std::size_t>(i)], slice);
    // eta0 = dz - P_i dx^i; dx^i pulls back to dx^i.
    pull(i) -= Pi.value(point);
  }
  const double muv = r.lambda0() + point[static_cast<std::size_t>(2 * m + 1)];
  const double c = map == ReductionMap::Corrected ? -1.0 / muv : -muv;
  Vec tilde = Vec::Zero(ns);
  for (int i = 0; i < m; ++i) tilde(i) = -point[static_cast<std::size_t>(m + i)];
  tilde(2 * m) = -muv;
  ConformalResidual out;
  out.form = (pull - c * tilde).lpNorm<Eigen::Infinity>();

  std::map<std::string, Expr, std::less<>> bind;
  for (int i = 0; i < m; ++i) bind[costate_name(pb.states[static_cast<std::size_t>(i)])] = Pmap[static_cast<std::size_t>(i)];
  const Expr H0phi = substitute(r.hamiltonian(), bind);
  std::vector<Expr> terms{mu * pb.cost};
  for (int i = 0; i < m; ++i) {
    terms.push_back(Expr::variable(costate_name(pb.states[static_cast<std::size_t>(i)])) *
                    pb.dynamics[static_cast<std::size_t>(i)]);
  }
  const double h0 = CompiledExpr(H0phi, slice).value(point);
  const double ht = CompiledExpr(sum(terms), slice).value(point);
  out.hamiltonian = std::abs(h0 - c * ht);
  return out;
}

ProjectionReport consistency_project(const ReducedContactOcp& r, const Trajectory& full_traj, ReductionMap map) {
  const auto& pb = r.problem();
  const int m = r.m(), k = r.k();
  if (full_traj.size() == 0) throw InputError("empty trajectory");
  if (full_traj.slopes.size() != full_traj.size()) throw InputError("projection needs trajectory slopes");
  // Column positions of the full base chart and the controls.
  std::vector<int> cols{full_traj.index("x0"), full_traj.index("p0")};
  for (const auto& s : pb.states) cols.push_back(full_traj.index(s));
  for (const auto& s : pb.states) cols.push_back(full_traj.index(costate_name(s)));
  cols.push_back(full_traj.index(pb.z_name));
  cols.push_back(full_traj.index(costate_name(pb.z_name)));
  for (const auto& u : pb.controls) cols.push_back(full_traj.index(u));
  auto gather = [&](const Vec& v) {
    Vec out(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(cols[i]);
    return out;
  };
  const int ix0 = 0, ip0 = 1, iz = 2 + 2 * m, ipz = 3 + 2 * m;

  const Vec first = gather(full_traj.samples[0]);
  if (std::abs(first(ix0) - first(iz)) > 1e-12 * (1.0 + std::abs(first(iz)))) {
    throw InputError("full trajectory must start with x0(a) = z(a)");
  }
  ProjectionReport rep;
  Trajectory& tr = rep.reduced;
  tr.chart = r.chart();
  tr.times = full_traj.times;
  for (std::size_t s = 0; s < full_traj.size(); ++s) {
    const Vec x = gather(full_traj.samples[s]);
    const Vec dx = gather(full_traj.slopes[s]);
    if (std::abs(x(ip0) - r.lambda0()) > 1e-12 * (1.0 + std::abs(r.lambda0()))) {
      throw InputError("full trajectory has p0 different from lambda0");
    }
    rep.x0_z_drift = std::max(rep.x0_z_drift, std::abs(x(ix0) - x(iz)));
    const Vec y = r.project(as_span(x), map);
    const double mu = r.lambda0() + x(ipz), dmu = dx(ipz);
    Vec dy(2 * m + 1);
    for (int i = 0; i < m; ++i) {
      dy(i) = dx(2 + i);
      const double p = x(2 + m + i), dp = dx(2 + m + i);
      dy(m + i) = map == ReductionMap::Corrected ? -dp / mu + p * dmu / (mu * mu) : -dmu * p - mu * dp;
    }
    dy(2 * m) = dx(iz);
    const Vec pt = join(y, x.tail(k));
    rep.rhs_residual = std::max(rep.rhs_residual, (dy - reduced_rhs(r, as_span(pt))).lpNorm<Eigen::Infinity>());
    tr.samples.push_back(pt);
    tr.slopes.push_back(join(dy, dx.tail(k)));
  }
  return rep;
}

FullSolution solve_full(const FullHerglotzSystem& sys, double lambda0, const HerglotzBvpConfig& cfg) {
  const auto& pb = sys.problem();
  const int m = sys.m(), k = sys.k();
  const Vec u0 = cfg.u_guess.size() ? cfg.u_guess : Vec::Zero(k);
  if (u0.size() != k) throw InputError("control guess does not match the controls");
  const Vec pg = cfg.p_guess.size() ? cfg.p_guess : Vec::Zero(m);
  if (pg.size() != m) throw InputError("costate guess does not match the states");

  auto start = [&](const Vec& y) {
    Vec base(sys.base_dim());
    base(sys.ix0()) = pb.z_start;
    base(sys.ip0()) = lambda0;
    base.segment(sys.ix(0), m) = pb.x_start;
    base.segment(sys.ip(0), m) = y.head(m);
    base(sys.iz()) = pb.z_start;
    base(sys.ipz()) = y(m);
    return base;
  };
  const ResidualFn residual = [&](const Vec& y) {
    const Vec end = integrate_to(full_flow(sys, u0), start(y), pb.a, pb.b, cfg.integrator);
    Vec r(m + 1);
    r << end.segment(sys.ix(0), m) - pb.x_end, end(sys.ipz());
    return r;
  };
  Vec guess(m + 1);
  guess << pg, cfg.pz_guess;
  const ShootResult sr = shoot(residual, guess, cfg.shooting);

  FullSolution sol;
  sol.p_start = sr.unknowns.head(m);
  sol.pz_start = sr.unknowns(m);
  sol.shooting_attempts = sr.attempts;
  sol.trajectory = integrate_full(sys, start(sr.unknowns), pb.a, pb.b, cfg.integrator, u0);
  Trajectory& tr = sol.trajectory;
  tr.add_diagnostic("H", [&](double, const Vec& x) { return sys.compiled().value(as_span(x)); });
  tr.add_diagnostic("dH_du", [&](double, const Vec& x) { return control_gradient_norm(sys.compiled(), x, k); });
  const Vec& last = tr.samples.back();
  sol.terminal_residual =
      std::max((last.segment(sys.ix(0), m) - pb.x_end).lpNorm<Eigen::Infinity>(), std::abs(last(sys.ipz())));
  sol.min_abs_mu = pz_invariant_check(sys, tr).min_abs;
  if (sol.min_abs_mu < 1e-10) {
    sol.warnings.push_back("p0 + p_z nearly vanishes along the solution (min " + std::to_string(sol.min_abs_mu) + ")");
  }
  return sol;
}

ReducedSolution solve_reduced(const ReducedContactOcp& r, const HerglotzBvpConfig& cfg) {
  const auto& pb = r.problem();
  const int m = r.m(), k = r.k();
  const Vec u0 = cfg.u_guess.size() ? cfg.u_guess : Vec::Zero(k);
  if (u0.size() != k) throw InputError("control guess does not match the controls");
  const Vec pg = cfg.p_guess.size() ? cfg.p_guess : Vec::Zero(m);
  if (pg.size() != m) throw InputError("costate guess does not match the states");

  auto start = [&](const Vec& P) {
    Vec y(2 * m + 1);
    y << pb.x_start, P, pb.z_start;
    return y;
  };
  const ResidualFn residual = [&](const Vec& P) {
    const Vec end = integrate_to(reduced_flow(r, u0), start(P), pb.a, pb.b, cfg.integrator);
    return Vec(end.head(m) - pb.x_end);
  };
  const ShootResult sr = shoot(residual, pg, cfg.shooting);

  ReducedSolution sol;
  sol.p_start = sr.unknowns;
  sol.shooting_attempts = sr.attempts;
  const Trajectory base = integrate(reduced_flow(r, u0), start(sr.unknowns), pb.a, pb.b, cfg.integrator);
  sol.trajectory = attach_controls(base, r.compiled(), u0);
  Trajectory& tr = sol.trajectory;
  tr.add_diagnostic("H0", [&](double, const Vec& x) { return r.compiled().value(as_span(x)); });
  tr.add_diagnostic("dH0_du", [&](double, const Vec& x) { return control_gradient_norm(r.compiled(), x, k); });
  sol.terminal_residual = (tr.samples.back().head(m) - pb.x_end).lpNorm<Eigen::Infinity>();
  return sol;
}

HerglotzOcpProblem velocity_controlled_problem(const HerglotzLagrangian& lag, double a, double b, Vec q_start,
                                               Vec q_end, double z_start) {
  HerglotzOcpProblem pb;
  pb.states = lag.positions();
  pb.controls = lag.velocities();
  for (const auto& v : pb.controls) pb.dynamics.push_back(Expr::variable(v));
  pb.cost = lag.lagrangian();
  pb.a = a;
  pb.b = b;
  pb.x_start = std::move(q_start);
  pb.x_end = std::move(q_end);
  pb.z_start = z_start;
  pb.z_name = lag.action_name();
  pb.validate();
  return pb;
}

RecoveryReport herglotz_equation_recovery(const HerglotzLagrangian& lag, double a, double b, const Vec& q_start,
                                          const Vec& q_end, double z_start, const HerglotzBvpConfig& cfg,
                                          double step) {
  const int n = lag.n();
  const HerglotzOcpProblem pb = velocity_controlled_problem(lag, a, b, q_start, q_end, z_start);
  Vec probe(2 * n + 1);
  probe << q_start, (cfg.u_guess.size() ? cfg.u_guess : Vec::Zero(n)), z_start;
  if (condition_number(velocity_hessian(lag, as_span(probe))) > 1e12) {
    throw SingularError("Lagrangian is not regular: d2L/dv dv is singular");
  }
  const ReducedContactOcp r = reduce(pb, default_lambda0(pb.sense));
  const ReducedSolution sol = solve_reduced(r, cfg);

  RecoveryReport rep;
  rep.p_start = sol.p_start;
  const IntegratorConfig rk4 = IntegratorConfig::rk4(step);
  const Vec u0 = sol.trajectory.samples.front().tail(n);
  Vec y0(2 * n + 1);
  y0 << q_start, sol.p_start, z_start;
  const Trajectory base = integrate(reduced_flow(r, u0), y0, a, b, rk4);

  Trajectory& tr = rep.solution;
  tr.chart = lag.chart();
  tr.times = base.times;
  Vec u = u0;
  for (const Vec& y : base.samples) {
    u = solve_control_stationarity(r.compiled(), as_span(y), u);
    Vec x(2 * n + 1);
    x << y.head(n), u, y(2 * n);
    tr.samples.push_back(x);
  }
  rep.el_residual = herglotz_residual(lag, tr);

  const Trajectory flow = integrate(herglotz_flow(lag), tr.samples.front(), a, b, rk4);
  if (flow.size() != tr.size()) throw ConvergenceError("Herglotz flow and reduced solution used different grids");
  for (std::size_t i = 0; i < tr.size(); ++i) {
    rep.flow_agreement = std::max(rep.flow_agreement, (flow.samples[i] - tr.samples[i]).lpNorm<Eigen::Infinity>());
  }
  return rep;
}

}  // namespace cpmp
