#include <bit>
#include <charconv>
#include <cstdint>
#include <cmath>
#include <functional>
#include <unordered_map>
#include <unordered_set>

#include "cpmp/error.hpp"
#include "cpmp/expr.hpp"

namespace cpmp {
namespace {

NodePtr make_number(double v) {
  auto n = std::make_shared<Node>();
  n->op = Op::Number;
  n->value = v;
  return n;
}

NodePtr make(Op op, std::vector<NodePtr> args) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args = std::move(args);
  return n;
}

const NodePtr& zero_node() {
  static const NodePtr z = make_number(0.0);
  return z;
}

// Binding strength used by the printer. Atoms (numbers, names, calls) bind
// tightest.
int precedence(const Node& n) {
  switch (n.op) {
    case Op::Add:
    case Op::Sub:
      return 1;
    case Op::Mul:
    case Op::Div:
      return 2;
    case Op::Neg:
      return 3;
    case Op::Pow:
      return 4;
    case Op::Number:
      return n.value < 0 || std::signbit(n.value) ? 3 : 5;
    default:
      return 5;
  }
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), std::fabs(v));
  std::string s(buf, ptr);
  // Keep "1e+20" style exponents parseable: our grammar accepts them.
  if (std::signbit(v)) return "-" + s;
  return s;
}

void print(const Node& n, std::string& out);

void print_child(const Node& child, bool parens, std::string& out) {
  if (parens) out += '(';
  print(child, out);
  if (parens) out += ')';
}

void print(const Node& n, std::string& out) {
  switch (n.op) {
    case Op::Number:
      out += format_number(n.value);
      return;
    case Op::Variable:
      out += n.name;
      return;
    case Op::Neg: {
      const Node& a = *n.args[0];
      out += '-';
      print_child(a, precedence(a) < 3, out);
      return;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const int p = precedence(n);
      const Node& a = *n.args[0];
      const Node& b = *n.args[1];
      print_child(a, precedence(a) < p, out);
      switch (n.op) {
        case Op::Add: out += " + "; break;
        case Op::Sub: out += " - "; break;
        case Op::Mul: out += "*"; break;
        default: out += "/"; break;
      }
      // Left-associative: an equal-precedence right operand needs parens to
      // keep its grouping. A negation on the right is itself a factor.
      const bool rp = b.op == Op::Neg ? false : precedence(b) <= p;
      print_child(b, rp, out);
      return;
    }
    case Op::Pow: {
      const Node& a = *n.args[0];
      const Node& b = *n.args[1];
      print_child(a, precedence(a) <= 4, out);
      out += '^';
      // The exponent is a `factor`: negation, power or atom print bare.
      const bool bare = b.op == Op::Neg || b.op == Op::Pow || precedence(b) == 5;
      print_child(b, !bare, out);
      return;
    }
    case Op::Call: {
      out += function_name(n.fn);
      out += '(';
      for (std::size_t i = 0; i < n.args.size(); ++i) {
        if (i) out += ", ";
        print(*n.args[i], out);
      }
      out += ')';
      return;
    }
  }
}

bool equal(const Node& a, const Node& b) {
  if (&a == &b) return true;
  if (a.op != b.op || a.args.size() != b.args.size()) return false;
  switch (a.op) {
    case Op::Number:
      if (std::bit_cast<std::uint64_t>(a.value) != std::bit_cast<std::uint64_t>(b.value)) return false;
      break;
    case Op::Variable:
      if (a.name != b.name) return false;
      break;
    case Op::Call:
      if (a.fn != b.fn) return false;
      break;
    default:
      break;
  }
  for (std::size_t i = 0; i < a.args.size(); ++i) {
    if (!equal(*a.args[i], *b.args[i])) return false;
  }
  return true;
}

template <typename F>
void visit_unique(const NodePtr& root, F&& f) {
  std::unordered_set<const Node*> seen;
  std::vector<const Node*> stack{root.get()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    f(*n);
    for (auto it = n->args.rbegin(); it != n->args.rend(); ++it) stack.push_back(it->get());
  }
}

}  // namespace

Expr::Expr() : root_(zero_node()) {}
Expr::Expr(NodePtr root) : root_(std::move(root)) {}

Expr Expr::number(double v) { return Expr(make_number(v)); }

Expr Expr::variable(std::string name) {
  auto n = std::make_shared<Node>();
  n->op = Op::Variable;
  n->name = std::move(name);
  return Expr(std::move(n));
}

Expr Expr::call(Fn fn, std::vector<Expr> args) {
  auto n = std::make_shared<Node>();
  n->op = Op::Call;
  n->fn = fn;
  for (auto& a : args) n->args.push_back(a.root());
  return Expr(std::move(n));
}

std::vector<std::string> Expr::variables() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  visit_unique(root_, [&](const Node& n) {
    if (n.op == Op::Variable && seen.insert(n.name).second) out.push_back(n.name);
  });
  return out;
}

bool Expr::depends_on(std::string_view name) const {
  bool found = false;
  visit_unique(root_, [&](const Node& n) {
    if (n.op == Op::Variable && n.name == name) found = true;
  });
  return found;
}

std::size_t Expr::size() const {
  std::size_t count = 0;
  visit_unique(root_, [&](const Node&) { ++count; });
  return count;
}

std::string to_string(const Expr& e) {
  std::string out;
  print(e.node(), out);
  return out;
}

bool structurally_equal(const Expr& a, const Expr& b) { return equal(a.node(), b.node()); }

Expr operator-(const Expr& a) {
  if (a.is_number()) return Expr::number(-a.node().value);
  if (a.node().op == Op::Neg) return Expr(a.node().args[0]);
  return Expr(make(Op::Neg, {a.root()}));
}

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return Expr::number(a.node().value + b.node().value);
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  return Expr(make(Op::Add, {a.root(), b.root()}));
}

Expr operator-(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return Expr::number(a.node().value - b.node().value);
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  return Expr(make(Op::Sub, {a.root(), b.root()}));
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number()) return Expr::number(a.node().value * b.node().value);
  if (a.is_zero() || b.is_zero()) return Expr::number(0.0);
  if (a.is_number(1.0)) return b;
  if (b.is_number(1.0)) return a;
  if (a.is_number(-1.0)) return -b;
  if (b.is_number(-1.0)) return -a;
  return Expr(make(Op::Mul, {a.root(), b.root()}));
}

Expr operator/(const Expr& a, const Expr& b) {
  if (a.is_number() && b.is_number() && b.node().value != 0.0) {
    return Expr::number(a.node().value / b.node().value);
  }
  if (a.is_zero() && !b.is_zero()) return a;
  if (b.is_number(1.0)) return a;
  return Expr(make(Op::Div, {a.root(), b.root()}));
}

Expr pow(const Expr& base, const Expr& exponent) {
  if (exponent.is_zero()) return Expr::number(1.0);
  if (exponent.is_number(1.0)) return base;
  if (base.is_number() && exponent.is_number()) {
    const double v = std::pow(base.node().value, exponent.node().value);
    if (std::isfinite(v)) return Expr::number(v);
  }
  return Expr(make(Op::Pow, {base.root(), exponent.root()}));
}

Expr operator+(const Expr& a, double b) { return a + Expr::number(b); }
Expr operator+(double a, const Expr& b) { return Expr::number(a) + b; }
Expr operator-(const Expr& a, double b) { return a - Expr::number(b); }
Expr operator-(double a, const Expr& b) { return Expr::number(a) - b; }
Expr operator*(const Expr& a, double b) { return a * Expr::number(b); }
Expr operator*(double a, const Expr& b) { return Expr::number(a) * b; }
Expr operator/(const Expr& a, double b) { return a / Expr::number(b); }
Expr operator/(double a, const Expr& b) { return Expr::number(a) / b; }

Expr sin(const Expr& a) { return Expr::call(Fn::Sin, {a}); }
Expr cos(const Expr& a) { return Expr::call(Fn::Cos, {a}); }
Expr exp(const Expr& a) { return Expr::call(Fn::Exp, {a}); }
Expr log(const Expr& a) { return Expr::call(Fn::Log, {a}); }
Expr sqrt(const Expr& a) { return Expr::call(Fn::Sqrt, {a}); }

Expr sum(const std::vector<Expr>& terms) {
  Expr acc;
  for (const auto& t : terms) acc = acc + t;
  return acc;
}

namespace {

class Differentiator {
 public:
  explicit Differentiator(std::string_view var) : var_(var) {}

  Expr d(const NodePtr& p) {
    if (auto it = memo_.find(p.get()); it != memo_.end()) return it->second;
    Expr r = compute(p);
    memo_.emplace(p.get(), r);
    return r;
  }

 private:
  bool depends(const NodePtr& p) {
    if (auto it = dep_.find(p.get()); it != dep_.end()) return it->second;
    bool r = false;
    if (p->op == Op::Variable) {
      r = p->name == var_;
    } else {
      for (const auto& a : p->args) r = r || depends(a);
    }
    dep_.emplace(p.get(), r);
    return r;
  }

  Expr compute(const NodePtr& p) {
    if (!depends(p)) return Expr::number(0.0);
    const Node& n = *p;
    auto arg = [&](std::size_t i) { return Expr(n.args[i]); };
    switch (n.op) {
      case Op::Number:
        return Expr::number(0.0);
      case Op::Variable:
        return Expr::number(1.0);
      case Op::Neg:
        return -d(n.args[0]);
      case Op::Add:
        return d(n.args[0]) + d(n.args[1]);
      case Op::Sub:
        return d(n.args[0]) - d(n.args[1]);
      case Op::Mul:
        return d(n.args[0]) * arg(1) + arg(0) * d(n.args[1]);
      case Op::Div: {
        const Expr a = arg(0), b = arg(1);
        return d(n.args[0]) / b - a * d(n.args[1]) / pow(b, Expr::number(2.0));
      }
      case Op::Pow:
        return power(arg(0), arg(1), n.args[0], n.args[1]);
      case Op::Call:
        break;
    }
    const Expr a = arg(0);
    const Expr da = d(n.args[0]);
    switch (n.fn) {
      case Fn::Sin: return cos(a) * da;
      case Fn::Cos: return -(sin(a) * da);
      case Fn::Tan: return da / pow(cos(a), Expr::number(2.0));
      case Fn::Exp: return Expr(p) * da;
      case Fn::Log: return da / a;
      case Fn::Sqrt: return da / (2.0 * Expr(p));
      case Fn::Tanh: return (1.0 - pow(Expr(p), Expr::number(2.0))) * da;
      case Fn::Cosh: return Expr::call(Fn::Sinh, {a}) * da;
      case Fn::Sinh: return Expr::call(Fn::Cosh, {a}) * da;
      case Fn::Abs: return a / Expr(p) * da;
      case Fn::Pow: return power(a, arg(1), n.args[0], n.args[1]);
    }
    return Expr::number(0.0);
  }

  Expr power(const Expr& base, const Expr& ex, const NodePtr& bp, const NodePtr& ep) {
    if (!depends(ep)) {
      // c * base^(c-1) * base'
      return ex * pow(base, ex - 1.0) * d(bp);
    }
    // base^ex * (ex' log(base) + ex base'/base)
    return pow(base, ex) * (d(ep) * log(base) + ex * d(bp) / base);
  }

  std::string_view var_;
  std::unordered_map<const Node*, Expr> memo_;
  std::unordered_map<const Node*, bool> dep_;
};

}  // namespace

Expr derivative(const Expr& e, std::string_view var) { return Differentiator(var).d(e.root()); }

Expr substitute(const Expr& e, const std::map<std::string, Expr, std::less<>>& bindings) {
  std::unordered_map<const Node*, NodePtr> memo;
  std::function<NodePtr(const NodePtr&)> rec = [&](const NodePtr& p) -> NodePtr {
    if (auto it = memo.find(p.get()); it != memo.end()) return it->second;
    NodePtr out;
    if (p->op == Op::Variable) {
      auto it = bindings.find(p->name);
      out = it == bindings.end() ? p : it->second.root();
    } else if (p->args.empty()) {
      out = p;
    } else {
      bool changed = false;
      std::vector<NodePtr> args;
      args.reserve(p->args.size());
      for (const auto& a : p->args) {
        args.push_back(rec(a));
        changed = changed || args.back() != a;
      }
      if (!changed) {
        out = p;
      } else {
        auto n = std::make_shared<Node>(*p);
        n->args = std::move(args);
        out = std::move(n);
      }
    }
    memo.emplace(p.get(), out);
    return out;
  };
  return Expr(rec(e.root()));
}

}  // namespace cpmp
