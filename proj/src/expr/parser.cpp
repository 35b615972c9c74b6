#include <cctype>
#include <charconv>
#include <string>

#include "cpmp/error.hpp"
#include "cpmp/expr.hpp"

namespace cpmp {
namespace {

struct FnSpec {
  std::string_view name;
  Fn fn;
  std::size_t arity;
};

constexpr FnSpec kFunctions[] = {
    {"sin", Fn::Sin, 1},   {"cos", Fn::Cos, 1},   {"tan", Fn::Tan, 1},
    {"exp", Fn::Exp, 1},   {"log", Fn::Log, 1},   {"sqrt", Fn::Sqrt, 1},
    {"pow", Fn::Pow, 2},   {"tanh", Fn::Tanh, 1}, {"cosh", Fn::Cosh, 1},
    {"sinh", Fn::Sinh, 1}, {"abs", Fn::Abs, 1},
};

NodePtr make(Op op, std::vector<NodePtr> args) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->args = std::move(args);
  return n;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  Expr run() {
    skip_ws();
    if (pos_ == src_.size()) throw ParseError("empty input", pos_);
    NodePtr root = expr();
    skip_ws();
    if (pos_ != src_.size()) {
      throw ParseError(std::string("unexpected '") + src_[pos_] + "'", pos_);
    }
    return Expr(std::move(root));
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  [[noreturn]] void expected(const char* what) {
    if (pos_ >= src_.size()) throw ParseError(std::string("expected ") + what + ", found end of input", pos_);
    throw ParseError(std::string("expected ") + what + ", found '" + src_[pos_] + "'", pos_);
  }

  NodePtr expr() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = make(Op::Add, {lhs, term()});
      } else if (accept('-')) {
        lhs = make(Op::Sub, {lhs, term()});
      } else {
        return lhs;
      }
    }
  }

  NodePtr term() {
    NodePtr lhs = factor();
    for (;;) {
      if (accept('*')) {
        lhs = make(Op::Mul, {lhs, factor()});
      } else if (accept('/')) {
        lhs = make(Op::Div, {lhs, factor()});
      } else {
        return lhs;
      }
    }
  }

  NodePtr factor() {
    if (accept('-')) return make(Op::Neg, {factor()});
    return power();
  }

  NodePtr power() {
    NodePtr base = atom();
    if (accept('^')) return make(Op::Pow, {base, factor()});
    return base;
  }

  NodePtr atom() {
    skip_ws();
    if (pos_ >= src_.size()) expected("operand");
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
    if (c == '(') {
      ++pos_;
      NodePtr inner = expr();
      if (!accept(')')) expected("')'");
      return inner;
    }
    expected("operand");
  }

  NodePtr number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        ++pos_;
        ++n;
      }
      return n;
    };
    std::size_t mantissa = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      mantissa += digits();
    }
    if (mantissa == 0) throw ParseError("malformed number", start);
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      ++pos_;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
      if (digits() == 0) throw ParseError("malformed exponent", pos_);
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, v);
    if (ec != std::errc() || ptr != src_.data() + pos_) throw ParseError("malformed number", start);
    auto n = std::make_shared<Node>();
    n->op = Op::Number;
    n->value = v;
    return n;
  }

  NodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
      ++pos_;
    }
    std::string name(src_.substr(start, pos_ - start));
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == '(') {
      const FnSpec* spec = nullptr;
      for (const auto& f : kFunctions) {
        if (f.name == name) spec = &f;
      }
      if (spec == nullptr) throw ParseError("unknown function '" + name + "'", start);
      ++pos_;
      std::vector<NodePtr> args;
      args.push_back(expr());
      while (accept(',')) args.push_back(expr());
      if (!accept(')')) expected("')' or ','");
      if (args.size() != spec->arity) {
        throw ParseError(name + " expects " + std::to_string(spec->arity) + " argument(s)", start);
      }
      auto n = std::make_shared<Node>();
      n->op = Op::Call;
      n->fn = spec->fn;
      n->args = std::move(args);
      return n;
    }
    auto n = std::make_shared<Node>();
    n->op = Op::Variable;
    n->name = std::move(name);
    return n;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string_view function_name(Fn fn) {
  for (const auto& f : kFunctions) {
    if (f.fn == fn) return f.name;
  }
  return "?";
}

Expr parse(std::string_view src) { return Parser(src).run(); }

}  // namespace cpmp
