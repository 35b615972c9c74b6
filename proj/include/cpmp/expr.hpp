#pragma once

// Scalar expressions over named variables.
//
// An Expr is an immutable tree (shared sub-trees are allowed, so in practice a
// DAG). Text is parsed with the grammar
//
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := '-' factor | power
//   power  := atom ('^' factor)?
//   atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//
// Numeric evaluation with exact first/second derivatives lives in jet.hpp;
// the symbolic helpers here (derivative, substitute) only build new trees and
// are used to assemble derived functions such as constraint hierarchies.

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace cpmp {

enum class Op { Number, Variable, Neg, Add, Sub, Mul, Div, Pow, Call };

enum class Fn { Sin, Cos, Tan, Exp, Log, Sqrt, Pow, Tanh, Cosh, Sinh, Abs };

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op;
  double value = 0.0;       // Number
  std::string name;         // Variable
  Fn fn = Fn::Sin;          // Call
  std::vector<NodePtr> args;
};

std::string_view function_name(Fn fn);

class Expr {
 public:
  /// The literal 0.
  Expr();
  explicit Expr(NodePtr root);

  static Expr number(double v);
  static Expr variable(std::string name);
  static Expr call(Fn fn, std::vector<Expr> args);

  const Node& node() const { return *root_; }
  const NodePtr& root() const { return root_; }

  bool is_number() const { return root_->op == Op::Number; }
  bool is_number(double v) const { return is_number() && root_->value == v; }
  bool is_zero() const { return is_number(0.0); }

  /// Distinct variable names in order of first appearance (left to right).
  std::vector<std::string> variables() const;
  bool depends_on(std::string_view name) const;

  /// Number of distinct nodes (shared sub-trees counted once).
  std::size_t size() const;

 private:
  NodePtr root_;
};

Expr parse(std::string_view src);

/// Text that parses back to a structurally identical tree.
std::string to_string(const Expr& e);

/// Structural equality (shape, operators, names and literal bits).
bool structurally_equal(const Expr& a, const Expr& b);

// Builders. These fold literal arithmetic and the identities x+0, x*1, x*0,
// 0/x, x^1, x^0 so that symbolic derivatives stay small. They never reorder or
// otherwise simplify.
Expr operator-(const Expr& a);
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr pow(const Expr& base, const Expr& exponent);
Expr operator+(const Expr& a, double b);
Expr operator+(double a, const Expr& b);
Expr operator-(const Expr& a, double b);
Expr operator-(double a, const Expr& b);
Expr operator*(const Expr& a, double b);
Expr operator*(double a, const Expr& b);
Expr operator/(const Expr& a, double b);
Expr operator/(double a, const Expr& b);
Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr exp(const Expr& a);
Expr log(const Expr& a);
Expr sqrt(const Expr& a);

/// Symbolic partial derivative d e / d var.
Expr derivative(const Expr& e, std::string_view var);

/// Replace variables by expressions; names not in `bindings` are kept.
Expr substitute(const Expr& e, const std::map<std::string, Expr, std::less<>>& bindings);

/// Sum of a list (0 for an empty list).
Expr sum(const std::vector<Expr>& terms);

}  // namespace cpmp
