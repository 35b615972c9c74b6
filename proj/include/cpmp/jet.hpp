#pragma once

// Forward-mode evaluation of Expr with exact first and second derivatives.
//
// A CompiledExpr flattens an Expr into a tape whose variable slots are bound
// to positions in a fixed chart (ordered list of names). Evaluation then takes
// a plain vector of chart values. Derivatives are propagated as truncated
// Taylor jets (value, gradient, Hessian); the Hessian is assembled from
// symmetric updates only, so it is exactly symmetric.

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpmp/expr.hpp"

namespace cpmp {

struct JetValue {
  double value = 0.0;
  Eigen::VectorXd grad;
  /// Empty unless order 2 was requested.
  Eigen::MatrixXd hess;
};

class CompiledExpr {
 public:
  CompiledExpr() = default;
  /// Throws EvalError if `e` references a name missing from `chart`.
  CompiledExpr(const Expr& e, std::vector<std::string> chart);

  const Expr& expr() const { return expr_; }
  const std::vector<std::string>& chart() const { return chart_; }

  double value(std::span<const double> x) const;

  /// Jet with respect to the chart positions listed in `wrt`.
  JetValue jet(std::span<const double> x, std::span<const int> wrt, int order) const;

  /// Jet with respect to the whole chart.
  JetValue jet(std::span<const double> x, int order) const;

 private:
  struct Instr {
    Op op;
    Fn fn;
    int a = -1;
    int b = -1;
    int var = -1;
    double constant = 0.0;
    bool const_exponent = false;
    NodePtr src;
  };

  Expr expr_;
  std::vector<std::string> chart_;
  std::vector<Instr> tape_;
};

/// Evaluate with named bindings. Every variable of `e` must be bound and
/// every name in `wrt` must be bound.
JetValue eval_jet(const Expr& e, const std::map<std::string, double>& point,
                  const std::vector<std::string>& wrt, int order);

/// Index of `name` in `chart`, or -1.
int chart_index(const std::vector<std::string>& chart, std::string_view name);

}  // namespace cpmp
