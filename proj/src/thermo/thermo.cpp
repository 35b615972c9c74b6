#include "cpmp/thermo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <set>

#include "cpmp/error.hpp"
#include "cpmp/sampling.hpp"

namespace cpmp {
namespace {

using Bindings = std::map<std::string, Expr, std::less<>>;

void require_distinct(const std::vector<std::string>& names, const std::string& what) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw InputError(what + ": empty name");
    if (!seen.insert(n).second) throw InputError(what + ": duplicate name '" + n + "'");
  }
}

void require_within(const Expr& e, const std::vector<std::string>& allowed, const std::string& what) {
  for (const auto& v : e.variables()) {
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
      throw InputError(what + " references unknown name '" + v + "'");
    }
  }
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Symbolic derivative of f along the contact field of sys.hamiltonian() over
// its Darboux chart; parameters are held fixed.
class ContactLie {
 public:
  explicit ContactLie(const ContactSystem& sys) : sys_(sys) {
    const int n = sys.n();
    const auto& c = sys.chart();
    const Expr& H = sys.hamiltonian();
    const Expr Hz = derivative(H, c[static_cast<std::size_t>(2 * n)]);
    std::vector<Expr> pHp;
    for (int i = 0; i < n; ++i) {
      const auto& q = c[static_cast<std::size_t>(i)];
      const auto& p = c[static_cast<std::size_t>(n + i)];
      const Expr Hp = derivative(H, p);
      field_.push_back(Hp);
      pHp.push_back(Expr::variable(p) * Hp);
      (void)q;
    }
    for (int i = 0; i < n; ++i) {
      const auto& q = c[static_cast<std::size_t>(i)];
      const auto& p = c[static_cast<std::size_t>(n + i)];
      field_.push_back(-derivative(H, q) - Expr::variable(p) * Hz);
    }
    field_.push_back(sum(pHp) - H);
  }

  Expr operator()(const Expr& f) const {
    std::vector<Expr> terms;
    const auto& c = sys_.chart();
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!f.depends_on(c[i])) continue;
      terms.push_back(derivative(f, c[i]) * field_[i]);
    }
    return sum(terms);
  }

 private:
  const ContactSystem& sys_;
  std::vector<Expr> field_;
};

Vec with_params(std::span<const double> x, const Vec& params) {
  Vec out(static_cast<Eigen::Index>(x.size()) + params.size());
  for (std::size_t i = 0; i < x.size(); ++i) out(static_cast<Eigen::Index>(i)) = x[i];
  out.tail(params.size()) = params;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Homogenization

std::vector<std::string> HomogeneousSystem::momentum_names() const {
  if (!p.empty()) return p;
  std::vector<std::string> out;
  for (const auto& name : q) out.push_back("p_" + name);
  return out;
}

std::vector<std::string> HomogeneousSystem::chart() const {
  std::vector<std::string> c = q;
  c.push_back(z);
  c.insert(c.end(), P.begin(), P.end());
  c.push_back(Pz);
  return c;
}

void HomogeneousSystem::validate() const {
  if (q.empty()) throw InputError("homogeneous system needs at least one position");
  if (P.size() != q.size()) throw InputError("homogeneous system needs one momentum per position");
  if (!p.empty() && p.size() != q.size()) throw InputError("contact momentum names must match the positions");
  require_distinct(chart(), "homogeneous chart");
  std::vector<std::string> contact = concat(q, momentum_names());
  contact.push_back(z);
  require_distinct(contact, "contact chart");
  require_within(H, chart(), "H");
}

ContactSystem dehomogenized_system(const HomogeneousSystem& sys) {
  sys.validate();
  const auto p = sys.momentum_names();
  Bindings b;
  for (std::size_t i = 0; i < sys.P.size(); ++i) b[sys.P[i]] = Expr::variable(p[i]);
  b[sys.Pz] = Expr::number(-1.0);
  return ContactSystem(sys.q, p, sys.z, substitute(sys.H, b));
}

namespace {

// h for the literal pairing: h(q, p, z) = H(q, z, -p, -1).
ContactSystem literal_system(const HomogeneousSystem& sys) {
  const auto p = sys.momentum_names();
  Bindings b;
  for (std::size_t i = 0; i < sys.P.size(); ++i) b[sys.P[i]] = -Expr::variable(p[i]);
  b[sys.Pz] = Expr::number(-1.0);
  return ContactSystem(sys.q, p, sys.z, substitute(sys.H, b));
}

}  // namespace

Dehomogenized dehomogenize(const HomogeneousSystem& sys, std::span<const double> point) {
  sys.validate();
  const std::size_t n = sys.q.size();
  if (point.size() != 2 * n + 2) throw InputError("point does not match the homogeneous chart");
  const double Pz = point[2 * n + 1];
  if (!(std::abs(Pz) > 1e-12)) throw SingularError("dehomogenization needs P_z != 0");

  const CompiledExpr H(sys.H, sys.chart());
  const double value = H.value(point);
  Dehomogenized out;
  for (double lambda : {2.0, -3.0}) {
    Vec scaled(static_cast<Eigen::Index>(point.size()));
    for (std::size_t i = 0; i < point.size(); ++i) scaled(static_cast<Eigen::Index>(i)) = point[i];
    scaled.segment(static_cast<Eigen::Index>(n + 1), static_cast<Eigen::Index>(n + 1)) *= lambda;
    const double r = std::abs(H.value(as_span(scaled)) - lambda * value) / (1.0 + std::abs(lambda * value));
    out.homogeneity_residual = std::max(out.homogeneity_residual, r);
  }
  if (out.homogeneity_residual > 1e-10) {
    throw InputError("H is not homogeneous of degree 1 in the momenta (relative residual " +
                     std::to_string(out.homogeneity_residual) + ")");
  }

  out.contact_point.resize(static_cast<Eigen::Index>(2 * n + 1));
  for (std::size_t i = 0; i < n; ++i) {
    out.contact_point(static_cast<Eigen::Index>(i)) = point[i];
    out.contact_point(static_cast<Eigen::Index>(n + i)) = -point[n + 1 + i] / Pz;
  }
  out.contact_point(static_cast<Eigen::Index>(2 * n)) = point[n];
  const ContactSystem h = dehomogenized_system(sys);
  out.h = h.compiled().value(as_span(out.contact_point));
  return out;
}

double homogeneous_flow_projects(const HomogeneousSystem& sys, std::span<const double> point,
                                 DehomogenizationMap map) {
  sys.validate();
  const std::size_t n = sys.q.size();
  if (point.size() != 2 * n + 2) throw InputError("point does not match the homogeneous chart");
  const double Pz = point[2 * n + 1];
  if (!(std::abs(Pz) > 1e-12)) throw SingularError("dehomogenization needs P_z != 0");

  // Canonical field of H for omega = dq ^ dP + dz ^ dP_z.
  const auto chart = sys.chart();
  const CompiledExpr H(sys.H, chart);
  std::vector<int> wrt(chart.size());
  for (std::size_t i = 0; i < wrt.size(); ++i) wrt[i] = static_cast<int>(i);
  const JetValue j = H.jet(point, wrt, 1);
  const auto gq = [&](std::size_t i) { return j.grad(static_cast<Eigen::Index>(i)); };
  Vec qdot(static_cast<Eigen::Index>(n)), Pdot(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    qdot(static_cast<Eigen::Index>(i)) = gq(n + 1 + i);
    Pdot(static_cast<Eigen::Index>(i)) = -gq(i);
  }
  const double zdot = gq(2 * n + 1);
  const double Pzdot = -gq(n);

  const double sign = map == DehomogenizationMap::Corrected ? -1.0 : 1.0;
  Vec image(static_cast<Eigen::Index>(2 * n + 1)), pushed(static_cast<Eigen::Index>(2 * n + 1));
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double P = point[n + 1 + i];
    image(k) = point[i];
    image(static_cast<Eigen::Index>(n) + k) = sign * P / Pz;
    pushed(k) = qdot(k);
    pushed(static_cast<Eigen::Index>(n) + k) = sign * (Pdot(k) / Pz - P * Pzdot / (Pz * Pz));
  }
  image(static_cast<Eigen::Index>(2 * n)) = point[n];
  pushed(static_cast<Eigen::Index>(2 * n)) = zdot;

  const ContactSystem h = map == DehomogenizationMap::Corrected ? dehomogenized_system(sys) : literal_system(sys);
  return (pushed - contact_vf(h, as_span(image))).lpNorm<Eigen::Infinity>();
}

// ---------------------------------------------------------------------------
// Port-thermodynamic systems

std::vector<std::string> PortThermoSystem::chart() const {
  std::vector<std::string> c = concat(q, p);
  c.push_back(S);
  return c;
}

Expr PortThermoSystem::hamiltonian() const {
  std::vector<Expr> terms{h_internal};
  for (std::size_t a = 0; a < controls.size(); ++a) terms.push_back(h_control[a] * Expr::variable(controls[a]));
  return sum(terms);
}

ContactSystem PortThermoSystem::contact() const {
  validate();
  return ContactSystem(q, p, S, hamiltonian(), controls);
}

void PortThermoSystem::validate() const {
  if (q.size() != p.size() || q.empty()) throw InputError("port-thermodynamic system needs matching q and p");
  if (h_control.size() != controls.size()) throw InputError("one control Hamiltonian per control is required");
  const auto c = chart();
  require_distinct(concat(c, controls), "port-thermodynamic chart");
  require_within(h_internal, c, "h_internal");
  for (const auto& e : h_control) require_within(e, c, "h_control");
  for (const auto& e : legendrian) require_within(e, c, "Legendrian constraint");
}

ThermoCheck check_port_thermo(const PortThermoSystem& sys, const std::vector<Vec>& points, const Vec& u) {
  sys.validate();
  if (u.size() != static_cast<Eigen::Index>(sys.controls.size())) throw InputError("one value per control is needed");
  const auto chart = sys.chart();
  const CompiledExpr ha(sys.h_internal, chart);
  std::vector<CompiledExpr> hc, leg;
  for (const auto& e : sys.h_control) hc.emplace_back(e, chart);
  for (const auto& e : sys.legendrian) leg.emplace_back(e, chart);
  const ContactSystem contact = sys.contact();
  const CompiledExpr hS(derivative(sys.hamiltonian(), sys.S), concat(chart, sys.controls));

  ThermoCheck out;
  out.min_entropy_rate = std::numeric_limits<double>::infinity();
  out.min_dh_dS = std::numeric_limits<double>::infinity();
  for (const Vec& x : points) {
    if (x.size() != static_cast<Eigen::Index>(chart.size())) throw InputError("sample does not match the chart");
    out.h_internal = std::max(out.h_internal, std::abs(ha.value(as_span(x))));
    for (const auto& c : hc) out.h_control = std::max(out.h_control, std::abs(c.value(as_span(x))));
    for (const auto& c : leg) out.legendrian = std::max(out.legendrian, std::abs(c.value(as_span(x))));
    const Vec full = with_params(as_span(x), u);
    out.min_entropy_rate = std::min(out.min_entropy_rate, contact_vf(contact, as_span(full))(x.size() - 1));
    out.min_dh_dS = std::min(out.min_dh_dS, hS.value(as_span(full)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gas, piston and damper

void GasPistonParams::validate() const {
  if (!(m > 0.0)) throw InputError("piston mass must be positive");
  if (!std::isfinite(d)) throw InputError("damping coefficient must be finite");
  if (!(V_lo < V_hi) || !(pi_lo < pi_hi) || !(S_lo < S_hi)) throw InputError("sampling box is empty");
  require_within(U, {"V", "S"}, "internal energy U");
}

Vec GasPiston::on_legendrian(double V, double pi, double S) const {
  const double m = params.m;
  const Vec vs = (Vec(2) << V, S).finished();
  const double UV = U_V.value(as_span(vs)), US = U_S.value(as_span(vs));
  const double U = CompiledExpr(params.U, {"V", "S"}).value(as_span(vs));
  const double pE = 1.0 / US;
  Vec x(7);
  x << V, pi, pi * pi / (2.0 * m) + U, -pE * UV, -pE * pi / m, pE, S;
  return x;
}

std::vector<Vec> GasPiston::sample_legendrian(int n) const {
  const Vec lo = (Vec(3) << params.V_lo, params.pi_lo, params.S_lo).finished();
  const Vec hi = (Vec(3) << params.V_hi, params.pi_hi, params.S_hi).finished();
  std::vector<Vec> out;
  for (int i = 1; i <= n; ++i) {
    const Vec y = halton_in_box(static_cast<std::size_t>(i), lo, hi);
    out.push_back(on_legendrian(y(0), y(1), y(2)));
  }
  return out;
}

double GasPiston::legendrian_residual(std::span<const double> x) const {
  const auto chart = system.chart();
  double r = 0.0;
  for (const auto& e : system.legendrian) r = std::max(r, std::abs(CompiledExpr(e, chart).value(x)));
  return r;
}

GasPiston gas_piston_system(const GasPistonParams& params, int samples) {
  params.validate();
  const Expr V = Expr::variable("V"), pi = Expr::variable("pi"), E = Expr::variable("E");
  const Expr pV = Expr::variable("p_V"), ppi = Expr::variable("p_pi"), pE = Expr::variable("p_E");
  const Expr UV = derivative(params.U, "V"), US = derivative(params.U, "S");
  const double m = params.m, d = params.d;

  GasPiston gp;
  gp.params = params;
  gp.U_V = CompiledExpr(UV, {"V", "S"});
  gp.U_S = CompiledExpr(US, {"V", "S"});
  PortThermoSystem& s = gp.system;
  s.q = {"V", "pi", "E"};
  s.p = {"p_V", "p_pi", "p_E"};
  s.S = "S";
  s.controls = {"u"};
  const Expr v = pi / m;
  s.h_internal = pV * v + ppi * (-UV - d * v) - d * pow(v, Expr::number(2.0)) / US;
  s.h_control = {ppi + pE * v};
  s.legendrian = {E - pi * pi / (2.0 * m) - params.U, pV + pE * UV, ppi + pE * v, pE - 1.0 / US};
  s.validate();

  const Vec lo = (Vec(2) << params.V_lo, params.S_lo).finished();
  const Vec hi = (Vec(2) << params.V_hi, params.S_hi).finished();
  for (int i = 1; i <= samples; ++i) {
    const Vec y = halton_in_box(static_cast<std::size_t>(i), lo, hi);
    const double T = gp.U_S.value(as_span(y));
    if (!(T > 0.0)) {
      throw InputError("dU/dS must be positive on the sampling box (found " + std::to_string(T) + " at V=" +
                       std::to_string(y(0)) + ", S=" + std::to_string(y(1)) + ")");
    }
  }
  return gp;
}

GasPistonRun simulate_gas_piston(const GasPiston& gp, double V, double pi, double S, const ControlLaw& law, double T,
                                 const IntegratorConfig& cfg) {
  if (!(T > 0.0)) throw InputError("simulation horizon must be positive");
  const auto chart = gp.system.chart();
  require_within(law.u, concat(chart, {"t"}), "control law");
  const CompiledExpr u(law.u, concat(chart, {"t"}));
  const ContactSystem contact = gp.system.contact();
  const auto control = [u](double t, const Vec& y) {
    Vec x(y.size() + 1);
    x << y, t;
    return u.value(as_span(x));
  };
  const OdeRhs rhs = [contact, control](double t, const Vec& y) {
    const Vec x = with_params(as_span(y), Vec::Constant(1, control(t, y)));
    return contact_vf(contact, as_span(x));
  };

  GasPistonRun out;
  out.trajectory = integrate(rhs, gp.on_legendrian(V, pi, S), 0.0, T, cfg, chart);
  Trajectory& tr = out.trajectory;
  out.steps = tr.size() - 1;
  const CompiledExpr h(gp.system.hamiltonian(), concat(chart, gp.system.controls));
  tr.add_diagnostic("u", control);
  tr.add_diagnostic("h", [&](double t, const Vec& y) {
    return h.value(as_span(with_params(as_span(y), Vec::Constant(1, control(t, y)))));
  });
  tr.add_diagnostic("legendrian", [&](double, const Vec& y) { return gp.legendrian_residual(as_span(y)); });
  tr.add_diagnostic("entropy_rate", [&](double t, const Vec& y) { return rhs(t, y)(y.size() - 1); });

  const int iS = tr.index(gp.system.S);
  out.min_entropy_rate = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < tr.size(); ++i) {
    if (i > 0) out.max_entropy_decrease = std::max(out.max_entropy_decrease, tr.samples[i - 1](iS) - tr.samples[i](iS));
    out.max_legendrian_residual = std::max(out.max_legendrian_residual, tr.diagnostics[i][2]);
    out.min_entropy_rate = std::min(out.min_entropy_rate, tr.diagnostics[i][3]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Lifted control Hamiltonian

std::string lifted_momentum_name(const std::string& coordinate) { return "Pi_" + coordinate; }

LiftedControlSystem lift_control_system(const ContactSystem& base, const std::vector<std::string>& controls,
                                        int depth) {
  if (controls.size() != 1) throw InputError("the lifted construction supports exactly one control");
  if (depth < 1) throw InputError("constraint depth must be positive");
  const int n = base.n();
  const auto& c = base.chart();
  const std::string& z = c.back();
  const Expr& h = base.hamiltonian();
  const Expr hz = derivative(h, z);

  std::vector<std::string> y(c.begin(), c.end() - 1), Pi;
  for (const auto& name : y) Pi.push_back(lifted_momentum_name(name));
  require_distinct(concat(concat(y, Pi), concat({z}, controls)), "lifted chart");

  std::vector<Expr> terms, F;
  for (int i = 0; i < n; ++i) {
    const auto& q = c[static_cast<std::size_t>(i)];
    const auto& p = c[static_cast<std::size_t>(n + i)];
    const Expr hp = derivative(h, p);
    const Expr P = Expr::variable(p);
    terms.push_back(Expr::variable(Pi[static_cast<std::size_t>(i)]) * hp);
    terms.push_back(Expr::variable(Pi[static_cast<std::size_t>(n + i)]) * (-derivative(h, q) - P * hz));
    F.push_back(P * hp);
  }
  const Expr H = sum(terms) - (sum(F) - h);

  LiftedControlSystem out;
  out.contact = ContactSystem(y, Pi, z, H, controls);
  out.controls = controls;
  const std::string& u = controls.front();
  const ContactLie lie(out.contact);
  std::vector<std::string> full = concat(out.contact.chart(), controls);

  out.constraints.push_back(derivative(H, u));
  for (int r = 0; r <= depth; ++r) {
    const Expr& phi = out.constraints.back();
    if (phi.depends_on(u)) {
      // Structural dependence may still vanish; confirm numerically.
      const CompiledExpr du(derivative(phi, u), full);
      const Vec lo = Vec::Constant(static_cast<Eigen::Index>(full.size()), 0.25);
      const Vec hi = Vec::Constant(static_cast<Eigen::Index>(full.size()), 1.25);
      double coeff = 0.0;
      for (std::size_t k = 1; k <= 8; ++k) {
        coeff = std::max(coeff, std::abs(du.value(as_span(halton_in_box(k, lo, hi)))));
      }
      if (coeff > 1e-10) {
        out.elimination_level = r;
        return out;
      }
    }
    if (r == depth) break;
    out.constraints.push_back(lie(phi));
  }
  throw SingularError("the control does not appear in the first " + std::to_string(depth + 1) +
                      " constraint levels; u cannot be eliminated");
}

LiftedControlSystem gas_piston_control_hamiltonian(const GasPiston& gp, int depth) {
  return lift_control_system(gp.system.contact(), gp.system.controls, depth);
}

double lifted_feedback(const LiftedControlSystem& lifted, std::span<const double> point, double u_guess) {
  const auto full = concat(lifted.contact.chart(), lifted.controls);
  const Expr& phi = lifted.constraints.at(static_cast<std::size_t>(lifted.elimination_level));
  const CompiledExpr f(phi, full);
  const std::vector<int> wrt{static_cast<int>(full.size() - 1)};
  double u = u_guess;
  for (int it = 0; it < 50; ++it) {
    const Vec x = with_params(point, Vec::Constant(1, u));
    const JetValue j = f.jet(as_span(x), wrt, 1);
    const double slope = j.grad(0);
    if (!(std::abs(slope) > 1e-12)) {
      throw SingularError("constraint not solvable for u at this point (d phi/du = " + std::to_string(slope) + ")");
    }
    const double step = j.value / slope;
    u -= step;
    if (std::abs(step) <= 1e-14 * (1.0 + std::abs(u))) return u;
  }
  throw ConvergenceError("control elimination from the lifted constraint did not converge");
}

Vec admissible_lift(const LiftedControlSystem& lifted, const Vec& point) {
  const int L = lifted.elimination_level;
  const int n = lifted.contact.n();
  if (point.size() != lifted.contact.dim()) throw InputError("point does not match the lifted chart");
  if (L == 0) return point;
  const auto full = concat(lifted.contact.chart(), lifted.controls);
  std::vector<CompiledExpr> phi;
  for (int r = 0; r < L; ++r) phi.emplace_back(lifted.constraints[static_cast<std::size_t>(r)], full);

  // Candidate index sets: every combination of L momentum slots, in order.
  std::vector<std::vector<int>> combos;
  std::vector<int> pick;
  std::function<void(int)> rec = [&](int start) {
    if (static_cast<int>(pick.size()) == L) {
      combos.push_back(pick);
      return;
    }
    for (int i = start; i < n; ++i) {
      pick.push_back(n + i);
      rec(i + 1);
      pick.pop_back();
    }
  };
  rec(0);

  for (const auto& idx : combos) {
    const auto residual = [&](const Vec& w) {
      Vec x = with_params(as_span(point), Vec::Zero(1));
      for (int k = 0; k < L; ++k) x(idx[static_cast<std::size_t>(k)]) = w(k);
      Vec r(L);
      for (int k = 0; k < L; ++k) r(k) = phi[static_cast<std::size_t>(k)].value(as_span(x));
      return r;
    };
    Vec guess(L);
    for (int k = 0; k < L; ++k) guess(k) = point(idx[static_cast<std::size_t>(k)]);
    const Vec r0 = residual(guess);
    if (condition_number(fd_jacobian(residual, guess, r0)) > 1e10) continue;
    ShootConfig sc;
    sc.tol = 1e-13;
    sc.restarts = 4;
    try {
      const ShootResult s = shoot(residual, guess, sc);
      Vec out = point;
      for (int k = 0; k < L; ++k) out(idx[static_cast<std::size_t>(k)]) = s.unknowns(k);
      return out;
    } catch (const Error&) {
      continue;
    }
  }
  throw ConvergenceError("no pair of lifted momenta makes the lower constraints vanish");
}

LiftedRun integrate_lifted(const LiftedControlSystem& lifted, const Vec& start, double T, const IntegratorConfig& cfg) {
  if (!(T > 0.0)) throw InputError("integration horizon must be positive");
  const auto full = concat(lifted.contact.chart(), lifted.controls);
  auto last_u = std::make_shared<double>(0.0);
  const ContactSystem contact = lifted.contact;
  const LiftedControlSystem sys = lifted;
  const OdeRhs rhs = [sys, contact, last_u](double, const Vec& y) {
    const double u = lifted_feedback(sys, as_span(y), *last_u);
    *last_u = u;
    return contact_vf(contact, as_span(with_params(as_span(y), Vec::Constant(1, u))));
  };
  *last_u = lifted_feedback(lifted, as_span(start), 0.0);

  LiftedRun out;
  out.trajectory = integrate(rhs, start, 0.0, T, cfg, lifted.contact.chart());
  Trajectory& tr = out.trajectory;
  std::vector<double> us;
  double u = 0.0;
  for (const Vec& y : tr.samples) us.push_back(u = lifted_feedback(lifted, as_span(y), u));
  std::size_t k = 0;
  tr.add_diagnostic("u", [&](double, const Vec&) { return us[k++]; });
  const CompiledExpr H(lifted.contact.hamiltonian(), full);
  k = 0;
  tr.add_diagnostic("H", [&](double, const Vec& y) { return H.value(as_span(with_params(as_span(y), Vec::Constant(1, us[k++])))); });
  for (int r = 0; r < lifted.elimination_level; ++r) {
    const CompiledExpr phi(lifted.constraints[static_cast<std::size_t>(r)], full);
    tr.add_diagnostic("phi" + std::to_string(r), [&](double, const Vec& y) {
      const double v = phi.value(as_span(with_params(as_span(y), Vec::Zero(1))));
      out.constraint_drift = std::max(out.constraint_drift, std::abs(v));
      return v;
    });
  }
  return out;
}

std::vector<std::string> TermCheckReport::discrepant_terms() const {
  std::vector<std::string> out;
  for (const auto& t : hamiltonian_terms) {
    if (!t.matches) out.push_back(t.term);
  }
  return out;
}

TermCheckReport gas_piston_term_check(const GasPiston& gp, const LiftedControlSystem& lifted, int points, double tol) {
  const Expr& U = gp.params.U;
  const auto D = [&](std::initializer_list<const char*> vars) {
    Expr e = U;
    for (const char* v : vars) e = derivative(e, v);
    return e;
  };
  Bindings b{{"m", Expr::number(gp.params.m)},
             {"d", Expr::number(gp.params.d)},
             {"U_V", D({"V"})},
             {"U_S", D({"S"})},
             {"U_VV", D({"V", "V"})},
             {"U_VS", D({"V", "S"})},
             {"U_SS", D({"S", "S"})},
             {"U_VSS", D({"V", "S", "S"})},
             {"U_VVS", D({"V", "V", "S"})},
             {"U_SSS", D({"S", "S", "S"})}};

  // Transcribed H with its own momentum labels (P_x written here as Pi_x).
  const Expr printed_H = substitute(
      parse("-(d*p_pi/m - p_E*u/m - p_V/m + 2*pi*d/(m^2*U_S))*Pi_pi"
            " - (p_pi*U_VV - pi^2*d*U_VS/(m^2*U_S^2))*Pi_V"
            " - (pi*d/m - u + U_V)*Pi_p_pi + pi*Pi_p_E*u/m + pi*Pi_p_V/m - pi^2*d/(m^2*U_S)"),
      b);
  // The transcribed P_x is the momentum of p_x and its P_{p_x} that of x.
  Bindings swap;
  for (const char* x : {"V", "pi", "E"}) {
    const std::string a = lifted_momentum_name(x), c = lifted_momentum_name(std::string("p_") + x);
    swap[a] = Expr::variable(c);
    swap[c] = Expr::variable(a);
  }
  const Expr printed = substitute(printed_H, swap);

  const Expr printed_alpha = substitute(
      parse("-p_E*p_pi*Pi_p_E*U_VSS - p_pi^2*Pi_p_pi*U_VSS - p_pi*p_V*Pi_p_V*U_VSS - p_pi*Pi_p_V*U_VVS + Pi_pi*U_VS"
            " - 2*pi^2*d*p_E*Pi_p_E*U_SS^2/(m^2*U_S^3) - 2*pi^2*d*p_pi*Pi_p_pi*U_SS^2/(m^2*U_S^3)"
            " - 2*pi^2*d*p_V*Pi_p_V*U_SS^2/(m^2*U_S^3) + pi^2*d*p_E*Pi_p_E*U_SSS/(m^2*U_S^2)"
            " + pi^2*d*p_pi*Pi_p_pi*U_SSS/(m^2*U_S^2) + pi^2*d*p_V*Pi_p_V*U_SSS/(m^2*U_S^2)"
            " + pi^2*d*Pi_p_V*U_VSS/(m^2*U_S^2) - 2*pi^2*d*Pi_p_V*U_VS*U_SS/(m^2*U_S^3)"
            " - pi^2*d*U_SS/(m^2*U_S^2) + 2*pi*d*Pi_p_pi*U_SS/(m^2*U_S^2)"),
      b);
  // Transcribed constraint, read with the same labels as H.
  const Expr printed_constraint = substitute(parse("p_E*Pi_p_pi/m + pi*Pi_E/m + Pi_pi"), b);
  const Expr sign_fixed = substitute(parse("-p_E*Pi_p_pi/m + pi*Pi_E/m + Pi_pi"), b);

  const Expr& H = lifted.contact.hamiltonian();
  const auto full = concat(lifted.contact.chart(), lifted.controls);
  const auto& momenta = std::vector<std::string>(full.begin() + lifted.contact.n(), full.begin() + 2 * lifted.contact.n());
  Bindings zero;
  for (const auto& P : momenta) zero[P] = Expr::number(0.0);

  std::vector<std::pair<std::string, std::pair<CompiledExpr, CompiledExpr>>> terms;
  for (const auto& P : momenta) {
    terms.push_back({P, {CompiledExpr(derivative(H, P), full), CompiledExpr(derivative(printed, P), full)}});
  }
  terms.push_back({"constant", {CompiledExpr(substitute(H, zero), full), CompiledExpr(substitute(printed, zero), full)}});
  const CompiledExpr alpha_gen(-derivative(H, "S"), full), alpha_pr(printed_alpha, full);
  const CompiledExpr c_gen(derivative(H, lifted.controls.front()), full), c_pr(printed_constraint, full),
      c_fix(sign_fixed, full);

  // Box: gas-piston ranges for V and S, [-1, 1] elsewhere.
  Vec lo = Vec::Constant(static_cast<Eigen::Index>(full.size()), -1.0);
  Vec hi = Vec::Constant(static_cast<Eigen::Index>(full.size()), 1.0);
  const auto iV = std::find(full.begin(), full.end(), "V") - full.begin();
  const auto iS = std::find(full.begin(), full.end(), "S") - full.begin();
  lo(iV) = gp.params.V_lo;
  hi(iV) = gp.params.V_hi;
  lo(iS) = gp.params.S_lo;
  hi(iS) = gp.params.S_hi;

  TermCheckReport out;
  for (const auto& t : terms) out.hamiltonian_terms.push_back({t.first, 0.0, false});
  for (int k = 1; k <= points; ++k) {
    const Vec x = halton_in_box(static_cast<std::size_t>(k), lo, hi);
    for (std::size_t i = 0; i < terms.size(); ++i) {
      const double r = std::abs(terms[i].second.first.value(as_span(x)) - terms[i].second.second.value(as_span(x)));
      out.hamiltonian_terms[i].max_residual = std::max(out.hamiltonian_terms[i].max_residual, r);
    }
    out.alpha_residual = std::max(out.alpha_residual, std::abs(alpha_gen.value(as_span(x)) - alpha_pr.value(as_span(x))));
    const double cg = c_gen.value(as_span(x));
    out.constraint_residual = std::max(out.constraint_residual, std::abs(cg - c_pr.value(as_span(x))));
    out.constraint_residual_sign_fixed =
        std::max(out.constraint_residual_sign_fixed, std::abs(cg - c_fix.value(as_span(x))));
  }
  for (auto& t : out.hamiltonian_terms) t.matches = t.max_residual <= tol;
  return out;
}

}  // namespace cpmp
