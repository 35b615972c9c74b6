#include "problem.hpp"

#include <fstream>
#include <map>
#include <set>

#include "cpmp/error.hpp"

namespace cpmp::cli {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw InputError(path + ": " + what); }

const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) fail(path, "missing field '" + key + "'");
  return j.at(key);
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

double number_or(const json& j, const std::string& key, double fallback, const std::string& path) {
  return j.contains(key) ? number(j.at(key), path + "." + key) : fallback;
}

Expr expression(const json& j, const std::string& path) {
  if (j.is_number()) return Expr::number(j.get<double>());
  if (!j.is_string()) fail(path, "expected an expression string");
  try {
    return parse(j.get<std::string>());
  } catch (const ParseError& e) {
    fail(path, e.what());
  }
}

std::vector<std::string> names(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected a list of names");
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_string() || j[i].get<std::string>().empty()) {
      fail(path + "[" + std::to_string(i) + "]", "expected a name");
    }
    if (!seen.insert(j[i].get<std::string>()).second) fail(path, "duplicate name '" + j[i].get<std::string>() + "'");
    out.push_back(j[i].get<std::string>());
  }
  return out;
}

// A binding object {name: value} turned into a vector ordered by `order`.
Vec bindings(const json& j, const std::vector<std::string>& order, const std::string& path, bool partial = false,
             double fill = 0.0) {
  if (!j.is_object()) fail(path, "expected an object of name: value pairs");
  for (const auto& [key, value] : j.items()) {
    if (std::find(order.begin(), order.end(), key) == order.end()) fail(path + "." + key, "undeclared name");
  }
  Vec out(static_cast<Eigen::Index>(order.size()));
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (j.contains(order[i])) {
      out(static_cast<Eigen::Index>(i)) = number(j.at(order[i]), path + "." + order[i]);
    } else if (partial) {
      out(static_cast<Eigen::Index>(i)) = fill;
    } else {
      fail(path, "missing value for '" + order[i] + "'");
    }
  }
  return out;
}

// Right-hand sides keyed by name, ordered by `order`.
std::vector<Expr> keyed_expressions(const json& j, const std::vector<std::string>& order, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object of name: expression pairs");
  for (const auto& [key, value] : j.items()) {
    if (std::find(order.begin(), order.end(), key) == order.end()) fail(path + "." + key, "undeclared state");
  }
  std::vector<Expr> out;
  for (const auto& s : order) {
    if (!j.contains(s)) fail(path, "missing dynamics for '" + s + "'");
    out.push_back(expression(j.at(s), path + "." + s));
  }
  return out;
}

void require_declared(const Expr& e, const std::vector<std::string>& allowed, const std::string& path) {
  for (const auto& v : e.variables()) {
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) fail(path, "undeclared name '" + v + "'");
  }
}

Sense sense(const json& j, const std::string& path) {
  if (!j.contains("sense")) return Sense::Minimize;
  const json& s = j.at("sense");
  if (s == "minimize") return Sense::Minimize;
  if (s == "maximize") return Sense::Maximize;
  fail(path + ".sense", "expected \"minimize\" or \"maximize\"");
}

void interval(const json& j, Problem& pb, const std::string& path) {
  const json& iv = field(j, "interval", path);
  if (!iv.is_array() || iv.size() != 2) fail(path + ".interval", "expected [a, b]");
  pb.a = number(iv[0], path + ".interval[0]");
  pb.b = number(iv[1], path + ".interval[1]");
  if (!(pb.b > pb.a)) fail(path + ".interval", "need b > a");
}

void integrator(const json& j, Problem& pb, const std::string& path) {
  if (!j.contains("integrator")) return;
  const json& c = j.at("integrator");
  const std::string p = path + ".integrator";
  const std::string method = c.value("method", std::string("rk45"));
  if (method == "rk4") {
    pb.integrator = IntegratorConfig::rk4(number_or(c, "step", 1e-3, p));
    if (!(pb.integrator.step > 0.0)) fail(p + ".step", "must be positive");
  } else if (method == "rk45") {
    pb.integrator = IntegratorConfig::rk45(number_or(c, "rtol", 1e-11, p), number_or(c, "atol", 1e-13, p));
    pb.integrator.max_step = number_or(c, "max_step", pb.integrator.max_step, p);
  } else {
    fail(p + ".method", "expected \"rk4\" or \"rk45\"");
  }
}

void shooting(const json& j, Problem& pb, const std::string& path) {
  if (!j.contains("shooting")) return;
  const json& c = j.at("shooting");
  const std::string p = path + ".shooting";
  pb.shooting.tol = number_or(c, "tol", pb.shooting.tol, p);
  pb.shooting.max_iters = static_cast<int>(number_or(c, "max_iters", pb.shooting.max_iters, p));
  pb.shooting.restarts = static_cast<int>(number_or(c, "restarts", pb.shooting.restarts, p));
  pb.shooting.box_radius = number_or(c, "box_radius", pb.shooting.box_radius, p);
}

// Optional {"p": {state: v}, "pz": v, "u": {control: v}}.
void guesses(const json& j, Problem& pb, const std::vector<std::string>& states,
             const std::vector<std::string>& controls, const std::string& path) {
  if (!j.contains("guess")) return;
  const json& g = j.at("guess");
  const std::string p = path + ".guess";
  if (g.contains("p")) pb.p_guess = bindings(g.at("p"), states, p + ".p", true);
  if (g.contains("u")) pb.u_guess = bindings(g.at("u"), controls, p + ".u", true);
  pb.pz_guess = number_or(g, "pz", 0.0, p);
}

void parse_ocp(const json& j, Problem& pb, const std::string& path) {
  OcpProblem& o = pb.ocp;
  o.states = names(field(j, "states", path), path + ".states");
  o.controls = names(field(j, "controls", path), path + ".controls");
  o.dynamics = keyed_expressions(field(j, "dynamics", path), o.states, path + ".dynamics");
  o.cost = expression(field(j, "cost", path), path + ".cost");
  std::vector<std::string> declared = o.states;
  declared.insert(declared.end(), o.controls.begin(), o.controls.end());
  for (std::size_t i = 0; i < o.states.size(); ++i) {
    require_declared(o.dynamics[i], declared, path + ".dynamics." + o.states[i]);
  }
  require_declared(o.cost, declared, path + ".cost");
  interval(j, pb, path);
  o.a = pb.a;
  o.b = pb.b;
  const json& bd = field(j, "boundary", path);
  o.x_start = bindings(field(bd, "start", path + ".boundary"), o.states, path + ".boundary.start");
  o.x_end = bindings(field(bd, "end", path + ".boundary"), o.states, path + ".boundary.end");
  o.sense = sense(j, path);
  guesses(j, pb, o.states, o.controls, path);
  o.validate();
}

void parse_herglotz(const json& j, Problem& pb, const std::string& path) {
  HerglotzOcpProblem& h = pb.herglotz;
  h.z_name = j.value("z", std::string("z"));
  h.states = names(field(j, "states", path), path + ".states");
  h.controls = names(field(j, "controls", path), path + ".controls");
  h.dynamics = keyed_expressions(field(j, "dynamics", path), h.states, path + ".dynamics");
  h.cost = expression(field(j, "cost", path), path + ".cost");
  std::vector<std::string> declared = h.states;
  declared.push_back(h.z_name);
  declared.insert(declared.end(), h.controls.begin(), h.controls.end());
  for (std::size_t i = 0; i < h.states.size(); ++i) {
    require_declared(h.dynamics[i], declared, path + ".dynamics." + h.states[i]);
  }
  require_declared(h.cost, declared, path + ".cost");
  interval(j, pb, path);
  h.a = pb.a;
  h.b = pb.b;
  const json& bd = field(j, "boundary", path);
  h.x_start = bindings(field(bd, "start", path + ".boundary"), h.states, path + ".boundary.start");
  h.x_end = bindings(field(bd, "end", path + ".boundary"), h.states, path + ".boundary.end");
  h.z_start = number_or(j, "z_start", 0.0, path);
  h.sense = sense(j, path);
  pb.form = j.value("form", std::string("full"));
  if (pb.form != "full" && pb.form != "reduced") fail(path + ".form", "expected \"full\" or \"reduced\"");
  guesses(j, pb, h.states, h.controls, path);
  h.validate();
}

void parse_lagrangian(const json& j, Problem& pb, const std::string& path) {
  const auto q = names(field(j, "positions", path), path + ".positions");
  std::vector<std::string> v;
  if (j.contains("velocities")) {
    v = names(j.at("velocities"), path + ".velocities");
  } else {
    for (const auto& name : q) v.push_back("v_" + name);
  }
  if (v.size() != q.size()) fail(path + ".velocities", "one velocity per position is required");
  const std::string z = j.value("z", std::string("z"));
  const Expr L = expression(field(j, "L", path), path + ".L");
  std::vector<std::string> declared = q;
  declared.insert(declared.end(), v.begin(), v.end());
  declared.push_back(z);
  require_declared(L, declared, path + ".L");
  interval(j, pb, path);
  LagrangianProblem& lp = pb.lagrangian;
  lp.lagrangian = HerglotzLagrangian(q, v, z, L);
  const json& bd = field(j, "boundary", path);
  lp.q_start = bindings(field(bd, "start", path + ".boundary"), q, path + ".boundary.start");
  lp.q_end = bindings(field(bd, "end", path + ".boundary"), q, path + ".boundary.end");
  lp.z_start = number_or(j, "z_start", 0.0, path);
  guesses(j, pb, q, {}, path);
}

void parse_contact(const json& j, Problem& pb, const std::string& path) {
  const auto q = names(field(j, "q", path), path + ".q");
  std::vector<std::string> p;
  if (j.contains("p")) {
    p = names(j.at("p"), path + ".p");
  } else {
    for (const auto& name : q) p.push_back("p_" + name);
  }
  if (p.size() != q.size()) fail(path + ".p", "one momentum per position is required");
  const std::string z = j.value("z", std::string("z"));
  const Expr H = expression(field(j, "H", path), path + ".H");
  std::vector<std::string> params;
  Vec values;
  if (j.contains("params")) {
    const json& pj = j.at("params");
    if (!pj.is_object()) fail(path + ".params", "expected an object of name: value pairs");
    for (const auto& [key, value] : pj.items()) params.push_back(key);
    values = bindings(pj, params, path + ".params");
  }
  std::vector<std::string> declared = q;
  declared.insert(declared.end(), p.begin(), p.end());
  declared.push_back(z);
  declared.insert(declared.end(), params.begin(), params.end());
  require_declared(H, declared, path + ".H");
  interval(j, pb, path);
  pb.contact.system = ContactSystem(q, p, z, H, params);
  pb.contact.params = values;
  pb.contact.start = bindings(field(j, "start", path), pb.contact.system.chart(), path + ".start");
}

}  // namespace

GasPistonProblem parse_gas_piston(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  GasPistonProblem g;
  g.params.m = number_or(j, "m", g.params.m, path);
  g.params.d = number_or(j, "d", g.params.d, path);
  if (j.contains("U")) g.params.U = expression(j.at("U"), path + ".U");
  if (j.contains("box")) {
    const json& box = j.at("box");
    const auto range = [&](const char* name, double& lo, double& hi) {
      if (!box.contains(name)) return;
      const json& r = box.at(name);
      const std::string p = path + ".box." + name;
      if (!r.is_array() || r.size() != 2) fail(p, "expected [lo, hi]");
      lo = number(r[0], p + "[0]");
      hi = number(r[1], p + "[1]");
    };
    range("V", g.params.V_lo, g.params.V_hi);
    range("pi", g.params.pi_lo, g.params.pi_hi);
    range("S", g.params.S_lo, g.params.S_hi);
  }
  g.law.u = j.contains("u") ? expression(j.at("u"), path + ".u") : parse("0.4*sin(3*t)");
  if (j.contains("start")) {
    const json& s = j.at("start");
    g.V = number_or(s, "V", g.V, path + ".start");
    g.pi = number_or(s, "pi", g.pi, path + ".start");
    g.S = number_or(s, "S", g.S, path + ".start");
  }
  g.horizon = number_or(j, "horizon", g.horizon, path);
  if (!(g.horizon > 0.0)) fail(path + ".horizon", "must be positive");
  require_declared(g.law.u, {"V", "pi", "E", "p_V", "p_pi", "p_E", "S", "t"}, path + ".u");
  g.params.validate();
  return g;
}

Problem parse_problem(const json& j) {
  const std::string path = "problem";
  if (!j.is_object()) fail(path, "expected a JSON object");
  Problem pb;
  const json& kind = field(j, "kind", path);
  if (!kind.is_string()) fail(path + ".kind", "expected a string");
  pb.kind_name = kind.get<std::string>();
  static const std::map<std::string, Kind> kinds{{"ocp", Kind::Ocp},
                                                 {"herglotz_ocp", Kind::HerglotzOcp},
                                                 {"herglotz_lagrangian", Kind::HerglotzLagrangian},
                                                 {"contact", Kind::Contact},
                                                 {"gas_piston", Kind::GasPiston}};
  const auto it = kinds.find(pb.kind_name);
  if (it == kinds.end()) fail(path + ".kind", "unknown kind '" + pb.kind_name + "'");
  pb.kind = it->second;
  if (j.contains("lambda0")) pb.lambda0 = number(j.at("lambda0"), path + ".lambda0");
  integrator(j, pb, path);
  shooting(j, pb, path);
  switch (pb.kind) {
    case Kind::Ocp:
      parse_ocp(j, pb, path);
      break;
    case Kind::HerglotzOcp:
      parse_herglotz(j, pb, path);
      break;
    case Kind::HerglotzLagrangian:
      parse_lagrangian(j, pb, path);
      break;
    case Kind::Contact:
      parse_contact(j, pb, path);
      break;
    case Kind::GasPiston:
      pb.gas = parse_gas_piston(j, path);
      pb.a = 0.0;
      pb.b = pb.gas.horizon;
      break;
  }
  return pb;
}

Problem load_problem(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open problem file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path + ": invalid JSON: " + e.what());
  }
  return parse_problem(j);
}

}  // namespace cpmp::cli
