#include <cmath>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "cpmp/error.hpp"
#include "cpmp/jet.hpp"

namespace cpmp {
namespace {

bool has_variables(const Node& n) {
  if (n.op == Op::Variable) return true;
  for (const auto& a : n.args) {
    if (has_variables(*a)) return true;
  }
  return false;
}

[[noreturn]] void domain_error(const NodePtr& src, const std::string& why) {
  throw EvalError("domain error in '" + to_string(Expr(src)) + "': " + why);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Derivs {
  double f0, f1, f2;
};

// Value and first two derivatives of a unary function at `a`.
Derivs unary(Op op, Fn fn, double a, double c, const NodePtr& src) {
  if (op == Op::Neg) return {-a, -1.0, 0.0};
  if (op == Op::Pow) {
    // Constant exponent c.
    if (a < 0.0 && c != std::floor(c)) domain_error(src, "negative base " + fmt(a) + " with non-integer exponent");
    if (a == 0.0 && c < 0.0) domain_error(src, "division by zero");
    if (c == 0.0) return {1.0, 0.0, 0.0};
    if (c == 1.0) return {a, 1.0, 0.0};
    if (c == 2.0) return {a * a, 2.0 * a, 2.0};
    return {std::pow(a, c), c * std::pow(a, c - 1.0), c * (c - 1.0) * std::pow(a, c - 2.0)};
  }
  switch (fn) {
    case Fn::Sin: return {std::sin(a), std::cos(a), -std::sin(a)};
    case Fn::Cos: return {std::cos(a), -std::sin(a), -std::cos(a)};
    case Fn::Tan: {
      const double t = std::tan(a);
      return {t, 1.0 + t * t, 2.0 * t * (1.0 + t * t)};
    }
    case Fn::Exp: {
      const double e = std::exp(a);
      return {e, e, e};
    }
    case Fn::Log:
      if (a <= 0.0) domain_error(src, "log of non-positive value " + fmt(a));
      return {std::log(a), 1.0 / a, -1.0 / (a * a)};
    case Fn::Sqrt: {
      if (a < 0.0) domain_error(src, "sqrt of negative value " + fmt(a));
      const double s = std::sqrt(a);
      return {s, 0.5 / s, -0.25 / (s * a)};
    }
    case Fn::Tanh: {
      const double t = std::tanh(a);
      return {t, 1.0 - t * t, -2.0 * t * (1.0 - t * t)};
    }
    case Fn::Cosh: return {std::cosh(a), std::sinh(a), std::cosh(a)};
    case Fn::Sinh: return {std::sinh(a), std::cosh(a), std::sinh(a)};
    case Fn::Abs: return {std::fabs(a), a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0), 0.0};
    case Fn::Pow: break;
  }
  return {0.0, 0.0, 0.0};
}

// Flat storage for the jets of every tape slot.
struct Workspace {
  int k = 0;
  int order = 0;
  std::vector<double> val;
  std::vector<double> grad;
  std::vector<double> hess;

  Workspace(std::size_t slots, int k_, int order_) : k(k_), order(order_), val(slots, 0.0) {
    if (order >= 1) grad.assign(slots * k, 0.0);
    if (order >= 2) hess.assign(slots * k * k, 0.0);
  }

  double* g(int s) { return grad.data() + static_cast<std::size_t>(s) * k; }
  double* h(int s) { return hess.data() + static_cast<std::size_t>(s) * k * k; }

  bool has_derivs(int s) {
    if (order == 0) return false;
    const double* gs = g(s);
    for (int i = 0; i < k; ++i) {
      if (gs[i] != 0.0) return true;
    }
    if (order >= 2) {
      const double* hs = h(s);
      for (int i = 0; i < k * k; ++i) {
        if (hs[i] != 0.0) return true;
      }
    }
    return false;
  }

  void chain(int r, int a, const Derivs& d, const NodePtr& src) {
    if (!std::isfinite(d.f0)) domain_error(src, "non-finite value");
    val[r] = d.f0;
    if (order == 0) return;
    if (!has_derivs(a)) {
      std::fill(g(r), g(r) + k, 0.0);
      if (order >= 2) std::fill(h(r), h(r) + k * k, 0.0);
      return;
    }
    if (!std::isfinite(d.f1) || (order >= 2 && !std::isfinite(d.f2))) {
      domain_error(src, "derivative undefined at " + fmt(val[a]));
    }
    double* gr = g(r);
    const double* ga = g(a);
    for (int i = 0; i < k; ++i) gr[i] = d.f1 * ga[i];
    if (order >= 2) {
      double* hr = h(r);
      const double* ha = h(a);
      for (int i = 0; i < k; ++i) {
        for (int j = i; j < k; ++j) {
          hr[i * k + j] = hr[j * k + i] = d.f1 * ha[i * k + j] + d.f2 * ga[i] * ga[j];
        }
      }
    }
  }

  void add(int r, int a, int b, double sb) {
    val[r] = val[a] + sb * val[b];
    if (order == 0) return;
    for (int i = 0; i < k; ++i) g(r)[i] = g(a)[i] + sb * g(b)[i];
    if (order >= 2) {
      for (int i = 0; i < k * k; ++i) h(r)[i] = h(a)[i] + sb * h(b)[i];
    }
  }

  void mul(int r, int a, int b) {
    const double va = val[a], vb = val[b];
    if (order >= 2) {
      double* hr = h(r);
      const double *ha = h(a), *hb = h(b), *ga = g(a), *gb = g(b);
      for (int i = 0; i < k; ++i) {
        for (int j = i; j < k; ++j) {
          hr[i * k + j] = hr[j * k + i] = ha[i * k + j] * vb + hb[i * k + j] * va + ga[i] * gb[j] + gb[i] * ga[j];
        }
      }
    }
    if (order >= 1) {
      for (int i = 0; i < k; ++i) g(r)[i] = g(a)[i] * vb + g(b)[i] * va;
    }
    val[r] = va * vb;
  }
};

}  // namespace

int chart_index(const std::vector<std::string>& chart, std::string_view name) {
  for (std::size_t i = 0; i < chart.size(); ++i) {
    if (chart[i] == name) return static_cast<int>(i);
  }
  return -1;
}

CompiledExpr::CompiledExpr(const Expr& e, std::vector<std::string> chart)
    : expr_(e), chart_(std::move(chart)) {
  std::unordered_map<const Node*, int> slot;
  std::function<int(const NodePtr&)> emit = [&](const NodePtr& p) -> int {
    if (auto it = slot.find(p.get()); it != slot.end()) return it->second;
    Instr in{};
    in.op = p->op;
    in.fn = p->fn;
    in.src = p;
    switch (p->op) {
      case Op::Number:
        in.constant = p->value;
        break;
      case Op::Variable:
        in.var = chart_index(chart_, p->name);
        if (in.var < 0) throw EvalError("unbound variable '" + p->name + "'");
        break;
      default:
        in.a = emit(p->args[0]);
        if (p->args.size() > 1) in.b = emit(p->args[1]);
        if (p->op == Op::Pow || (p->op == Op::Call && p->fn == Fn::Pow)) {
          in.op = Op::Pow;
          in.const_exponent = !has_variables(*p->args[1]);
        }
        break;
    }
    tape_.push_back(std::move(in));
    const int s = static_cast<int>(tape_.size()) - 1;
    slot.emplace(p.get(), s);
    return s;
  };
  emit(e.root());
}

double CompiledExpr::value(std::span<const double> x) const {
  std::vector<double> v(tape_.size());
  for (std::size_t s = 0; s < tape_.size(); ++s) {
    const Instr& in = tape_[s];
    switch (in.op) {
      case Op::Number: v[s] = in.constant; break;
      case Op::Variable: v[s] = x[in.var]; break;
      case Op::Add: v[s] = v[in.a] + v[in.b]; break;
      case Op::Sub: v[s] = v[in.a] - v[in.b]; break;
      case Op::Mul: v[s] = v[in.a] * v[in.b]; break;
      case Op::Div:
        if (v[in.b] == 0.0) domain_error(in.src, "division by zero");
        v[s] = v[in.a] / v[in.b];
        break;
      case Op::Pow:
        if (in.const_exponent) {
          v[s] = unary(Op::Pow, in.fn, v[in.a], v[in.b], in.src).f0;
        } else {
          if (v[in.a] <= 0.0) domain_error(in.src, "non-positive base " + fmt(v[in.a]) + " with variable exponent");
          v[s] = std::pow(v[in.a], v[in.b]);
        }
        break;
      default:
        v[s] = unary(in.op, in.fn, v[in.a], 0.0, in.src).f0;
        break;
    }
    if (!std::isfinite(v[s]) && in.op != Op::Number) domain_error(in.src, "non-finite value");
  }
  return v.back();
}

JetValue CompiledExpr::jet(std::span<const double> x, int order) const {
  std::vector<int> all(chart_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return jet(x, all, order);
}

JetValue CompiledExpr::jet(std::span<const double> x, std::span<const int> wrt, int order) const {
  if (order < 1 || order > 2) throw EvalError("jet order must be 1 or 2");
  const int k = static_cast<int>(wrt.size());
  // Two scratch slots at the end for the variable-exponent power rule.
  const int n = static_cast<int>(tape_.size());
  Workspace w(tape_.size() + 2, k, order);
  const int t0 = n, t1 = n + 1;

  for (int s = 0; s < n; ++s) {
    const Instr& in = tape_[s];
    switch (in.op) {
      case Op::Number:
        w.val[s] = in.constant;
        break;
      case Op::Variable:
        w.val[s] = x[in.var];
        for (int i = 0; i < k; ++i) {
          if (wrt[i] == in.var) w.g(s)[i] = 1.0;
        }
        break;
      case Op::Add:
        w.add(s, in.a, in.b, 1.0);
        break;
      case Op::Sub:
        w.add(s, in.a, in.b, -1.0);
        break;
      case Op::Mul:
        w.mul(s, in.a, in.b);
        break;
      case Op::Div: {
        const double b = w.val[in.b];
        if (b == 0.0) domain_error(in.src, "division by zero");
        w.chain(t0, in.b, {1.0 / b, -1.0 / (b * b), 2.0 / (b * b * b)}, in.src);
        w.mul(s, in.a, t0);
        break;
      }
      case Op::Pow:
        if (in.const_exponent) {
          w.chain(s, in.a, unary(Op::Pow, in.fn, w.val[in.a], w.val[in.b], in.src), in.src);
        } else {
          // a^b = exp(b log a)
          const double a = w.val[in.a];
          if (a <= 0.0) domain_error(in.src, "non-positive base " + fmt(a) + " with variable exponent");
          w.chain(t0, in.a, {std::log(a), 1.0 / a, -1.0 / (a * a)}, in.src);
          w.mul(t1, in.b, t0);
          const double e = std::exp(w.val[t1]);
          w.chain(s, t1, {e, e, e}, in.src);
        }
        break;
      default:
        w.chain(s, in.a, unary(in.op, in.fn, w.val[in.a], 0.0, in.src), in.src);
        break;
    }
  }

  const int r = n - 1;
  JetValue out;
  out.value = w.val[r];
  out.grad = Eigen::Map<const Eigen::VectorXd>(w.g(r), k);
  if (order >= 2) {
    out.hess = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(w.h(r), k, k);
  }
  return out;
}

JetValue eval_jet(const Expr& e, const std::map<std::string, double>& point,
                  const std::vector<std::string>& wrt, int order) {
  std::vector<std::string> chart;
  std::vector<double> x;
  for (const auto& [name, v] : point) {
    chart.push_back(name);
    x.push_back(v);
  }
  std::vector<int> idx;
  for (const auto& name : wrt) {
    const int i = chart_index(chart, name);
    if (i < 0) throw EvalError("unbound variable '" + name + "' in derivative list");
    idx.push_back(i);
  }
  return CompiledExpr(e, std::move(chart)).jet(x, idx, order);
}

}  // namespace cpmp
