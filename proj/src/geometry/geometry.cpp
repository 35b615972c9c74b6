#include "cpmp/geometry.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <set>

#include "cpmp/error.hpp"
#include "cpmp/sampling.hpp"

namespace cpmp {
namespace {

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void require_distinct(const std::vector<std::string>& names, const char* what) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (n.empty()) throw InputError(std::string(what) + " contains an empty name");
    if (!seen.insert(n).second) throw InputError(std::string(what) + " repeats the name '" + n + "'");
  }
}

std::vector<int> iota(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

void check_size(const ContactSystem& sys, std::span<const double> x) {
  const std::size_t want = sys.chart().size() + sys.params().size();
  if (x.size() != want) {
    throw InputError("contact point has " + std::to_string(x.size()) + " values, expected " + std::to_string(want));
  }
}

// Exterior algebra on at most 7 generators; a form of fixed degree is stored
// as a coefficient per bitmask of increasing indices.
using Form = std::vector<double>;

double wedge_sign(unsigned ma, unsigned mb) {
  int swaps = 0;
  for (unsigned j = 0; j < 32; ++j) {
    if (mb & (1u << j)) swaps += std::popcount(ma >> (j + 1));
  }
  return (swaps % 2) ? -1.0 : 1.0;
}

Form wedge(const Form& a, const Form& b) {
  Form out(a.size(), 0.0);
  for (unsigned ma = 0; ma < a.size(); ++ma) {
    if (a[ma] == 0.0) continue;
    for (unsigned mb = 0; mb < b.size(); ++mb) {
      if (b[mb] == 0.0 || (ma & mb)) continue;
      out[ma | mb] += wedge_sign(ma, mb) * a[ma] * b[mb];
    }
  }
  return out;
}

double max_abs(const Form& f) {
  double m = 0.0;
  for (double c : f) m = std::max(m, std::abs(c));
  return m;
}

}  // namespace

ContactSystem::ContactSystem(std::vector<std::string> q, std::vector<std::string> p, std::string z, Expr H,
                             std::vector<std::string> params)
    : n_(static_cast<int>(q.size())), params_(std::move(params)), H_(std::move(H)) {
  if (q.size() != p.size()) throw InputError("contact chart needs as many momenta as positions");
  chart_ = concat(std::move(q), p);
  chart_.push_back(std::move(z));
  require_distinct(concat(chart_, params_), "contact chart");
  compiled_ = CompiledExpr(H_, concat(chart_, params_));
}

ContactSystem ContactSystem::darboux(int n, Expr H, std::vector<std::string> params) {
  if (n < 1) throw InputError("contact dimension n must be at least 1");
  std::vector<std::string> q, p;
  for (int i = 1; i <= n; ++i) {
    q.push_back(n == 1 ? "q" : "q" + std::to_string(i));
    p.push_back(n == 1 ? "p" : "p" + std::to_string(i));
  }
  return ContactSystem(q, p, "z", std::move(H), std::move(params));
}

Vec ContactSystem::point(const std::map<std::string, double>& bindings) const {
  const auto names = concat(chart_, params_);
  Vec x(static_cast<Eigen::Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto it = bindings.find(names[i]);
    if (it == bindings.end()) throw EvalError("unbound variable '" + names[i] + "'");
    x(static_cast<Eigen::Index>(i)) = it->second;
  }
  return x;
}

Vec contact_vf(const ContactSystem& sys, std::span<const double> x) {
  check_size(sys, x);
  const int n = sys.n();
  const std::vector<int> wrt = iota(sys.dim());
  const JetValue j = sys.compiled().jet(x, wrt, 1);
  Vec out(sys.dim());
  double pHp = 0.0;
  const double Hz = j.grad(2 * n);
  for (int i = 0; i < n; ++i) {
    const double p = x[static_cast<std::size_t>(n + i)];
    const double Hp = j.grad(n + i);
    out(i) = Hp;
    out(n + i) = -j.grad(i) - p * Hz;
    pHp += p * Hp;
  }
  out(2 * n) = pHp - j.value;
  return out;
}

Vec contact_vf(const ContactSystem& sys, const std::map<std::string, double>& bindings) {
  const Vec x = sys.point(bindings);
  return contact_vf(sys, as_span(x));
}

OdeRhs contact_rhs(const ContactSystem& sys, Vec params) {
  if (params.size() != static_cast<Eigen::Index>(sys.params().size())) {
    throw InputError("contact flow needs a value for every parameter");
  }
  return [sys, params](double, const Vec& y) {
    Vec x(y.size() + params.size());
    x << y, params;
    return contact_vf(sys, as_span(x));
  };
}

Vec reeb(const ContactSystem& sys) {
  Vec r = Vec::Zero(sys.dim());
  r(sys.dim() - 1) = 1.0;
  return r;
}

Vec contact_form(const ContactSystem& sys, std::span<const double> x) {
  const int n = sys.n();
  Vec eta = Vec::Zero(sys.dim());
  for (int i = 0; i < n; ++i) eta(i) = -x[static_cast<std::size_t>(n + i)];
  eta(2 * n) = 1.0;
  return eta;
}

IdentityResiduals check_contact_identities(const ContactSystem& sys, std::span<const double> x) {
  check_size(sys, x);
  const int n = sys.n(), d = sys.dim();
  const JetValue j = sys.compiled().jet(x, iota(d), 2);
  const Vec X = contact_vf(sys, x);
  const Vec eta = contact_form(sys, x);

  // Gradients of the field components, from the Hessian of H.
  // X_q^i = H_{p_i};  X_z = p_j H_{p_j} - H.
  Mat dX = Mat::Zero(d, d);
  for (int i = 0; i < n; ++i) dX.row(i) = j.hess.row(n + i);
  dX.row(2 * n) = -j.grad.transpose();
  for (int k = 0; k < n; ++k) {
    const double p = x[static_cast<std::size_t>(n + k)];
    dX.row(2 * n) += p * j.hess.row(n + k);
    dX(2 * n, n + k) += j.grad(n + k);
  }

  // eta(X) = X_z - p_i X_q^i and its differential.
  double etaX = X(2 * n);
  Vec d_etaX = dX.row(2 * n).transpose();
  for (int i = 0; i < n; ++i) {
    const double p = x[static_cast<std::size_t>(n + i)];
    etaX -= p * X(i);
    d_etaX -= p * dX.row(i).transpose();
    d_etaX(n + i) -= X(i);
  }

  // L_X eta = d(eta(X)) + i_X d eta, with d eta = dq^i ^ dp_i.
  Vec lie = d_etaX;
  for (int i = 0; i < n; ++i) {
    lie(i) -= X(n + i);
    lie(n + i) += X(i);
  }
  const double RH = j.grad(2 * n);
  IdentityResiduals r;
  r.eta = std::abs(etaX + j.value);
  r.lie = (lie + RH * eta).lpNorm<Eigen::Infinity>();
  return r;
}

OneFormClass classify_one_form(const std::vector<Expr>& coeffs, const std::vector<std::string>& chart,
                               std::span<const double> x, double threshold) {
  const int d = static_cast<int>(chart.size());
  if (d > 7) throw InputError("classify_one_form supports charts of dimension at most 7");
  if (static_cast<int>(coeffs.size()) != d) throw InputError("one-form needs one coefficient per chart name");
  if (x.size() != chart.size()) throw InputError("point does not match the chart");
  const std::size_t size = std::size_t{1} << d;
  Form eta(size, 0.0), deta(size, 0.0);
  const std::vector<int> wrt = iota(d);
  Mat grads(d, d);
  for (int i = 0; i < d; ++i) {
    const JetValue j = CompiledExpr(coeffs[static_cast<std::size_t>(i)], chart).jet(x, wrt, 1);
    eta[std::size_t{1} << i] = j.value;
    grads.row(i) = j.grad.transpose();
  }
  // d(a_j dx^j) = sum_{i<j} (d_i a_j - d_j a_i) dx^i ^ dx^j.
  for (int i = 0; i < d; ++i) {
    for (int k = i + 1; k < d; ++k) deta[(std::size_t{1} << i) | (std::size_t{1} << k)] = grads(k, i) - grads(i, k);
  }
  OneFormClass out;
  Form power(size, 0.0);
  power[0] = 1.0;  // (d eta)^0
  for (int r = 0; 2 * r + 1 <= d; ++r) {
    if (r > 0) {
      power = wedge(power, deta);
      if (max_abs(power) > threshold) out.rank_deta = 2 * r;
    }
    if (max_abs(wedge(eta, power)) > threshold) out.cls = 2 * r + 1;
  }
  // (d eta)^s can be nonzero for 2s = d even when eta ^ (d eta)^s is not defined.
  if (d % 2 == 0 && d > 0) {
    Form p2(size, 0.0);
    p2[0] = 1.0;
    for (int s = 1; 2 * s <= d; ++s) {
      p2 = wedge(p2, deta);
      if (max_abs(p2) > threshold) out.rank_deta = std::max(out.rank_deta, 2 * s);
    }
  }
  return out;
}

std::vector<std::string> PresymplecticControlSystem::base() const { return concat(positions, momenta); }

std::vector<std::string> PresymplecticControlSystem::chart() const { return concat(base(), controls); }

void PresymplecticControlSystem::validate() const {
  if (positions.size() != momenta.size()) throw InputError("presymplectic chart needs as many momenta as positions");
  const auto names = chart();
  require_distinct(names, "presymplectic chart");
  for (const auto& v : H.variables()) {
    if (std::find(names.begin(), names.end(), v) == names.end()) {
      throw InputError("Hamiltonian references '" + v + "' outside the chart");
    }
  }
}

Vec symplectic_vf(const PresymplecticControlSystem& sys, std::span<const double> x) {
  const int m = static_cast<int>(sys.positions.size());
  const JetValue j = CompiledExpr(sys.H, sys.chart()).jet(x, iota(2 * m), 1);
  Vec out(2 * m);
  for (int i = 0; i < m; ++i) {
    out(i) = j.grad(m + i);
    out(m + i) = -j.grad(i);
  }
  return out;
}

Expr lie_derivative(const Expr& f, const PresymplecticControlSystem& sys) {
  std::vector<Expr> terms;
  for (std::size_t i = 0; i < sys.positions.size(); ++i) {
    const Expr fx = derivative(f, sys.positions[i]);
    const Expr fp = derivative(f, sys.momenta[i]);
    if (!fx.is_zero()) terms.push_back(fx * derivative(sys.H, sys.momenta[i]));
    if (!fp.is_zero()) terms.push_back(-(fp * derivative(sys.H, sys.positions[i])));
  }
  return sum(terms);
}

bool ConstraintSet::trivial() const {
  if (levels.empty()) return true;
  for (const auto& c : levels.front().constraints) {
    if (!c.expr.is_zero()) return false;
  }
  return true;
}

namespace {

// Deterministic chart points away from coordinate zeros, where generic ranks
// are attained.
std::vector<Vec> sample_points(std::size_t dim) {
  std::vector<Vec> pts;
  const Vec lo = Vec::Constant(static_cast<Eigen::Index>(dim), 0.25);
  const Vec hi = Vec::Constant(static_cast<Eigen::Index>(dim), 1.25);
  for (std::size_t i = 1; i <= 8; ++i) pts.push_back(halton_in_box(i, lo, hi));
  return pts;
}

int rank_of(const Mat& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0;
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  int r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > 1e-10 * std::max(1.0, s(0))) ++r;
  }
  return r;
}

// Largest rank over the sample points of the Jacobian of `rows`.
int sampled_rank(const std::vector<Expr>& rows, const std::vector<std::string>& chart) {
  const auto pts = sample_points(chart.size());
  std::vector<CompiledExpr> compiled;
  for (const auto& e : rows) compiled.emplace_back(e, chart);
  int best = 0;
  for (const Vec& x : pts) {
    Mat J(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(chart.size()));
    try {
      for (std::size_t i = 0; i < compiled.size(); ++i) {
        J.row(static_cast<Eigen::Index>(i)) = compiled[i].jet(as_span(x), 1).grad.transpose();
      }
    } catch (const EvalError&) {
      continue;
    }
    best = std::max(best, rank_of(J));
  }
  return best;
}

// Largest rank over sample points of the control block of one level.
int sampled_block_rank(const ConstraintLevel& lvl, const std::vector<std::string>& chart) {
  const std::size_t k = lvl.control_block.empty() ? 0 : lvl.control_block.front().size();
  if (k == 0) return 0;
  const auto pts = sample_points(chart.size());
  int best = 0;
  for (const Vec& x : pts) {
    Mat B(static_cast<Eigen::Index>(lvl.control_block.size()), static_cast<Eigen::Index>(k));
    try {
      for (std::size_t i = 0; i < lvl.control_block.size(); ++i) {
        for (std::size_t a = 0; a < k; ++a) {
          B(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) =
              CompiledExpr(lvl.control_block[i][a], chart).value(as_span(x));
        }
      }
    } catch (const EvalError&) {
      continue;
    }
    best = std::max(best, rank_of(B));
  }
  return best;
}

ConstraintLevel make_level(int level, std::vector<Constraint> cs, const PresymplecticControlSystem& sys) {
  ConstraintLevel lvl;
  lvl.level = level;
  for (const auto& c : cs) {
    std::vector<Expr> row;
    for (const auto& u : sys.controls) row.push_back(derivative(c.expr, u));
    lvl.control_block.push_back(std::move(row));
  }
  lvl.constraints = std::move(cs);
  return lvl;
}

}  // namespace

ConstraintSet compatibility_constraints(const PresymplecticControlSystem& sys, int depth) {
  if (depth < 1) throw InputError("constraint depth must be at least 1");
  sys.validate();
  const auto chart = sys.chart();
  const int k = static_cast<int>(sys.controls.size());
  ConstraintSet out;

  std::vector<Constraint> level0;
  for (const auto& u : sys.controls) level0.push_back({derivative(sys.H, u), "dH/d" + u});
  out.levels.push_back(make_level(0, std::move(level0), sys));

  std::vector<Expr> all;
  for (const auto& c : out.levels.back().constraints) {
    if (!c.expr.is_zero()) all.push_back(c.expr);
  }
  if (all.empty()) {
    out.closed = true;
    out.closure_level = 0;
    out.closure_reason = "no control dependence: every level-0 constraint vanishes identically";
    return out;
  }
  int rank = sampled_rank(all, chart);
  int block = 0;
  for (int r = 0;; ++r) {
    const ConstraintLevel& cur = out.levels.back();
    block = std::max(block, sampled_block_rank(cur, chart));
    if (k > 0 && block == k) {
      out.closed = true;
      out.closure_level = r;
      out.closure_reason = "control block has full rank: the control rates are determined at level " +
                           std::to_string(r);
      return out;
    }
    if (r == depth) break;
    std::vector<Constraint> next;
    for (std::size_t i = 0; i < cur.constraints.size(); ++i) {
      if (cur.constraints[i].expr.is_zero()) continue;
      next.push_back({lie_derivative(cur.constraints[i].expr, sys),
                      "L_X(level " + std::to_string(r) + " #" + std::to_string(i) + ")"});
    }
    out.levels.push_back(make_level(r + 1, std::move(next), sys));
    bool any = false;
    for (const auto& c : out.levels.back().constraints) {
      if (!c.expr.is_zero()) {
        all.push_back(c.expr);
        any = true;
      }
    }
    const int new_rank = any ? sampled_rank(all, chart) : rank;
    if (new_rank == rank) {
      out.closed = true;
      out.closure_level = r;
      out.closure_reason = "level " + std::to_string(r + 1) + " adds no independent constraint";
      return out;
    }
    rank = new_rank;
  }
  out.closed = false;
  out.closure_reason = "depth limit " + std::to_string(depth) + " reached without closure";
  return out;
}

double condition_number(const Mat& m) {
  if (m.size() == 0) return 1.0;
  Eigen::JacobiSVD<Mat> svd(m);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
  return s(0) / smin;
}

double control_hessian_condition(const PresymplecticControlSystem& sys, std::span<const double> x) {
  const int base = static_cast<int>(sys.base().size());
  const int k = static_cast<int>(sys.controls.size());
  std::vector<int> wrt;
  for (int a = 0; a < k; ++a) wrt.push_back(base + a);
  const JetValue j = CompiledExpr(sys.H, sys.chart()).jet(x, wrt, 2);
  return condition_number(j.hess);
}

Vec solve_control_stationarity(const CompiledExpr& H, std::span<const double> base, const Vec& u_guess) {
  const int k = static_cast<int>(u_guess.size());
  const int d = static_cast<int>(base.size());
  if (d + k != static_cast<int>(H.chart().size())) throw InputError("base point and controls do not cover the chart");
  if (k == 0) return Vec();
  std::vector<int> wrt;
  for (int a = 0; a < k; ++a) wrt.push_back(d + a);
  Vec x(d + k);
  for (int i = 0; i < d; ++i) x(i) = base[static_cast<std::size_t>(i)];
  Vec u = u_guess;
  for (int it = 0; it <= 50; ++it) {
    x.tail(k) = u;
    const JetValue j = H.jet(as_span(x), wrt, 2);
    if (condition_number(j.hess) > 1e12) {
      throw SingularError("control elimination (dH/du = 0) is singular: d2H/du du is not invertible");
    }
    if (j.grad.lpNorm<Eigen::Infinity>() <= 1e-12) return u;
    if (it == 50) break;
    const Vec du = j.hess.partialPivLu().solve(-j.grad);
    u += du;
    if (!u.allFinite()) break;
    // Rounding can keep the residual slightly above 1e-12 for large values.
    if (du.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + u.lpNorm<Eigen::Infinity>())) {
      x.tail(k) = u;
      if (H.jet(as_span(x), wrt, 1).grad.lpNorm<Eigen::Infinity>() <= 1e-10) return u;
    }
  }
  throw ConvergenceError("control elimination (dH/du = 0) did not converge; the problem may be singular");
}

bool regularity_test(const PresymplecticControlSystem& sys, std::span<const double> x) {
  return control_hessian_condition(sys, x) <= 1e12;
}

}  // namespace cpmp
