#include "cpmp/ocp.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

#include "cpmp/error.hpp"

namespace cpmp {
namespace {

std::vector<int> range(int from, int to) {
  std::vector<int> v;
  for (int i = from; i < to; ++i) v.push_back(i);
  return v;
}

Vec with_controls(std::span<const double> base, const Vec& u) {
  Vec x(static_cast<Eigen::Index>(base.size()) + u.size());
  for (std::size_t i = 0; i < base.size(); ++i) x(static_cast<Eigen::Index>(i)) = base[i];
  x.tail(u.size()) = u;
  return x;
}

}  // namespace

double default_lambda0(Sense sense) { return sense == Sense::Minimize ? -1.0 : 1.0; }

std::string costate_name(const std::string& state) { return "p_" + state; }

void OcpProblem::validate() const {
  if (states.empty()) throw InputError("problem needs at least one state");
  if (dynamics.size() != states.size()) throw InputError("problem needs one dynamics expression per state");
  if (!(b > a)) throw InputError("interval must satisfy b > a");
  if (x_start.size() != static_cast<Eigen::Index>(states.size())) throw InputError("x_start does not match the states");
  if (x_end.size() != static_cast<Eigen::Index>(states.size())) throw InputError("x_end does not match the states");
  std::set<std::string> names;
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

PmpSystem::PmpSystem(OcpProblem problem) : problem_(std::move(problem)) {
  problem_.validate();
  std::set<std::string> user(problem_.states.begin(), problem_.states.end());
  user.insert(problem_.controls.begin(), problem_.controls.end());
  std::vector<std::string> reserved{"x0", "p0"};
  for (const auto& s : problem_.states) reserved.push_back(costate_name(s));
  for (const auto& r : reserved) {
    if (user.count(r)) throw InputError("name '" + r + "' is reserved for the extended system");
  }
  pre_.positions.push_back("x0");
  pre_.momenta.push_back("p0");
  std::vector<Expr> terms{Expr::variable("p0") * problem_.cost};
  for (std::size_t i = 0; i < problem_.states.size(); ++i) {
    pre_.positions.push_back(problem_.states[i]);
    pre_.momenta.push_back(costate_name(problem_.states[i]));
    terms.push_back(Expr::variable(costate_name(problem_.states[i])) * problem_.dynamics[i]);
  }
  pre_.controls = problem_.controls;
  H_ = sum(terms);
  pre_.H = H_;
  chart_ = pre_.chart();
  compiled_ = CompiledExpr(H_, chart_);
}

PmpSystem extend(const OcpProblem& problem) { return PmpSystem(problem); }

Vec pmp_rhs(const PmpSystem& sys, std::span<const double> point) {
  if (point.size() != sys.chart().size()) throw InputError("PMP point does not match the chart");
  const int m = sys.m(), d = sys.base_dim();
  const JetValue j = sys.compiled().jet(point, range(0, d), 1);
  Vec out(d);
  for (int i = 0; i <= m; ++i) {
    out(i) = j.grad(m + 1 + i);
    out(m + 1 + i) = -j.grad(i);
  }
  return out;
}

Vec eliminate_controls(const PmpSystem& sys, std::span<const double> base_point, const Vec& u_guess) {
  if (static_cast<int>(base_point.size()) != sys.base_dim()) throw InputError("base point does not match the chart");
  if (u_guess.size() != sys.k()) throw InputError("control guess does not match the controls");
  return solve_control_stationarity(sys.compiled(), base_point, u_guess);
}

OdeRhs pmp_flow(const PmpSystem& sys, Vec u_guess) {
  if (u_guess.size() == 0) u_guess = Vec::Zero(sys.k());
  auto warm = std::make_shared<Vec>(u_guess);
  return [sys, warm](double, const Vec& y) {
    *warm = eliminate_controls(sys, as_span(y), *warm);
    const Vec x = with_controls(as_span(y), *warm);
    return pmp_rhs(sys, as_span(x));
  };
}

Vec NormalRestriction::to_contact(std::span<const double> xp) const {
  const int m = sys.m();
  Vec c(2 * m + 1);
  for (int i = 0; i < 2 * m; ++i) c(i) = xp[static_cast<std::size_t>(1 + i)];
  c(2 * m) = -lambda0 * xp[0];
  return c;
}

Vec NormalRestriction::from_contact(std::span<const double> c) const {
  const int m = sys.m();
  Vec xp(2 * m + 1);
  xp(0) = c[static_cast<std::size_t>(2 * m)] / (-lambda0);
  for (int i = 0; i < 2 * m; ++i) xp(1 + i) = c[static_cast<std::size_t>(i)];
  return xp;
}

Vec NormalRestriction::reeb() const {
  Vec r = Vec::Zero(2 * sys.m() + 1);
  r(0) = -1.0 / lambda0;
  return r;
}

NormalRestriction normal_restriction(const PmpSystem& sys, double lambda0) {
  if (lambda0 == 0.0) throw InputError("the normal branch needs lambda0 != 0");
  const auto& pb = sys.problem();
  std::vector<std::string> P;
  std::vector<Expr> terms{Expr::number(lambda0) * pb.cost};
  for (std::size_t i = 0; i < pb.states.size(); ++i) {
    P.push_back(costate_name(pb.states[i]));
    terms.push_back(Expr::variable(P.back()) * pb.dynamics[i]);
  }
  NormalRestriction nr;
  nr.sys = sys;
  nr.lambda0 = lambda0;
  nr.contact = ContactSystem(pb.states, P, "zeta", sum(terms), pb.controls);
  return nr;
}

Vec normal_rhs(const NormalRestriction& nr, std::span<const double> point) {
  const int m = nr.sys.m(), k = nr.sys.k();
  if (static_cast<int>(point.size()) != 2 * m + 1 + k) throw InputError("normal point does not match (x0, x, p, u)");
  const Vec c = nr.to_contact(point.first(static_cast<std::size_t>(2 * m + 1)));
  Vec cx(2 * m + 1 + k);
  cx << c, Eigen::Map<const Vec>(point.data() + 2 * m + 1, k);
  const Vec v = contact_vf(nr.contact, as_span(cx));
  // Tangent map of (x, P, zeta) -> (x0, x, p) with x0 = -zeta/lambda0.
  return nr.from_contact(as_span(v));
}

OdeRhs normal_flow(const NormalRestriction& nr, Vec u_guess) {
  if (u_guess.size() == 0) u_guess = Vec::Zero(nr.sys.k());
  auto warm = std::make_shared<Vec>(u_guess);
  return [nr, warm](double, const Vec& y) {
    const int m = nr.sys.m();
    Vec base(2 * m + 2);
    base << y(0), y.segment(1, m), nr.lambda0, y.segment(1 + m, m);
    *warm = eliminate_controls(nr.sys, as_span(base), *warm);
    Vec pt(y.size() + warm->size());
    pt << y, *warm;
    return normal_rhs(nr, as_span(pt));
  };
}

AbnormalRestriction abnormal_restriction(const PmpSystem& sys) {
  const auto& pb = sys.problem();
  AbnormalRestriction ar;
  ar.sys = sys;
  ar.reduced.positions = pb.states;
  ar.reduced.controls = pb.controls;
  std::vector<Expr> terms;
  for (std::size_t i = 0; i < pb.states.size(); ++i) {
    ar.reduced.momenta.push_back(costate_name(pb.states[i]));
    terms.push_back(Expr::variable(ar.reduced.momenta.back()) * pb.dynamics[i]);
  }
  ar.reduced.H = sum(terms);
  ar.reduced.validate();
  return ar;
}

Vec abnormal_rhs(const AbnormalRestriction& ar, std::span<const double> point) {
  const int m = ar.sys.m(), k = ar.sys.k();
  if (static_cast<int>(point.size()) != 2 * m + 1 + k) throw InputError("abnormal point does not match (x0, x, p, u)");
  const Vec v = symplectic_vf(ar.reduced, point.subspan(1));
  std::vector<std::string> names = ar.sys.problem().states;
  names.insert(names.end(), ar.sys.problem().controls.begin(), ar.sys.problem().controls.end());
  Vec xu(m + k);
  for (int i = 0; i < m; ++i) xu(i) = point[static_cast<std::size_t>(1 + i)];
  for (int a = 0; a < k; ++a) xu(m + a) = point[static_cast<std::size_t>(2 * m + 1 + a)];
  Vec out(2 * m + 1);
  out(0) = CompiledExpr(ar.sys.problem().cost, names).value(as_span(xu));
  out.tail(2 * m) = v;
  return out;
}

namespace {

struct SegmentLayout {
  int m;
  int segments;
  double a, b;
  double node(int k) const { return a + (b - a) * k / segments; }
};

// Base chart state (x0, x, p0, p) at the start of segment `s` from the unknowns.
Vec segment_start(const SegmentLayout& L, const Vec& y, const Vec& x_start, double lambda0, int s) {
  const int m = L.m;
  Vec base(2 * m + 2);
  base(0) = 0.0;
  base(m + 1) = lambda0;
  if (s == 0) {
    base.segment(1, m) = x_start;
    base.segment(m + 2, m) = y.head(m);
  } else {
    const int off = m + 2 * m * (s - 1);
    base.segment(1, m) = y.segment(off, m);
    base.segment(m + 2, m) = y.segment(off + m, m);
  }
  return base;
}

}  // namespace

BvpSolution solve_bvp(const PmpSystem& sys, double lambda0, const BvpConfig& cfg) {
  const auto& pb = sys.problem();
  const int m = sys.m(), k = sys.k();
  if (cfg.segments < 1) throw InputError("segments must be at least 1");
  const SegmentLayout L{m, cfg.segments, pb.a, pb.b};
  const Vec u0 = cfg.u_guess.size() ? cfg.u_guess : Vec::Zero(k);
  if (u0.size() != k) throw InputError("control guess does not match the controls");
  const Vec pg = cfg.p_guess.size() ? cfg.p_guess : Vec::Zero(m);
  if (pg.size() != m) throw InputError("costate guess does not match the states");

  const int nunk = m + 2 * m * (cfg.segments - 1);
  Vec guess(nunk);
  guess.head(m) = pg;
  for (int s = 1; s < cfg.segments; ++s) {
    const double w = static_cast<double>(s) / cfg.segments;
    const int off = m + 2 * m * (s - 1);
    guess.segment(off, m) = (1 - w) * pb.x_start + w * pb.x_end;
    guess.segment(off + m, m) = pg;
  }

  const ResidualFn residual = [&](const Vec& y) {
    Vec r(nunk);
    for (int s = 0; s < cfg.segments; ++s) {
      const Vec start = segment_start(L, y, pb.x_start, lambda0, s);
      const Vec end = integrate_to(pmp_flow(sys, u0), start, L.node(s), L.node(s + 1), cfg.integrator);
      if (s + 1 < cfg.segments) {
        const Vec next = segment_start(L, y, pb.x_start, lambda0, s + 1);
        const int off = 2 * m * s;
        r.segment(off, m) = end.segment(1, m) - next.segment(1, m);
        r.segment(off + m, m) = end.segment(m + 2, m) - next.segment(m + 2, m);
      } else {
        r.tail(m) = end.segment(1, m) - pb.x_end;
      }
    }
    return r;
  };

  const ShootResult sr = shoot(residual, guess, cfg.shooting);

  BvpSolution sol;
  sol.p_start = sr.unknowns.head(m);
  sol.shooting_attempts = sr.attempts;
  Trajectory& tr = sol.trajectory;
  tr.chart = sys.chart();
  double x0_offset = 0.0;
  Vec u = u0;
  for (int s = 0; s < cfg.segments; ++s) {
    const Vec start = segment_start(L, sr.unknowns, pb.x_start, lambda0, s);
    const Trajectory seg = integrate(pmp_flow(sys, u0), start, L.node(s), L.node(s + 1), cfg.integrator);
    for (std::size_t i = (s == 0 ? 0 : 1); i < seg.size(); ++i) {
      Vec base = seg.samples[i];
      base(0) += x0_offset;
      u = eliminate_controls(sys, as_span(base), u);
      const Vec full = with_controls(as_span(base), u);
      Vec slope(full.size());
      slope << seg.slopes[i], Vec::Zero(k);
      tr.times.push_back(seg.times[i]);
      tr.samples.push_back(full);
      tr.slopes.push_back(slope);
    }
    x0_offset += seg.samples.back()(0);
  }
  // Control slopes by differences of neighbouring samples.
  const std::size_t n = tr.size();
  for (std::size_t i = 0; i < n && n > 1; ++i) {
    const std::size_t lo = i == 0 ? 0 : i - 1, hi = i + 1 == n ? i : i + 1;
    tr.slopes[i].tail(k) = (tr.samples[hi].tail(k) - tr.samples[lo].tail(k)) / (tr.times[hi] - tr.times[lo]);
  }
  const std::vector<int> wrt = range(sys.base_dim(), sys.base_dim() + k);
  tr.add_diagnostic("H", [&](double, const Vec& x) { return sys.compiled().value(as_span(x)); });
  tr.add_diagnostic("dH_du", [&](double, const Vec& x) {
    return k ? sys.compiled().jet(as_span(x), wrt, 1).grad.lpNorm<Eigen::Infinity>() : 0.0;
  });
  sol.terminal_residual = (tr.samples.back().segment(1, m) - pb.x_end).lpNorm<Eigen::Infinity>();
  return sol;
}

}  // namespace cpmp
