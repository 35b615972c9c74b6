#pragma once

// Contact and presymplectic Hamiltonian structures in Darboux coordinates.
//
// Contact form eta = dz - p_i dq^i, Reeb field d/dz. Hamiltonian field of H:
//   q' = H_p,  p' = -H_q - p H_z,  z' = p H_p - H.
// Presymplectic control systems use the canonical form on the base chart
// (positions, momenta), with the controls spanning the kernel:
//   x' = H_p,  p' = -H_x.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "cpmp/expr.hpp"
#include "cpmp/integrate.hpp"
#include "cpmp/jet.hpp"

namespace cpmp {

class ContactSystem {
 public:
  ContactSystem() = default;
  /// Chart is q..., p..., z. `params` are extra names H may reference (for
  /// instance frozen controls); they are bound after the chart when
  /// evaluating.
  ContactSystem(std::vector<std::string> q, std::vector<std::string> p, std::string z, Expr H,
                std::vector<std::string> params = {});
  /// Chart (q,p,z) for n=1 and (q1..qn, p1..pn, z) otherwise.
  static ContactSystem darboux(int n, Expr H, std::vector<std::string> params = {});

  int n() const { return n_; }
  int dim() const { return 2 * n_ + 1; }
  const std::vector<std::string>& chart() const { return chart_; }
  const std::vector<std::string>& params() const { return params_; }
  const Expr& hamiltonian() const { return H_; }
  const CompiledExpr& compiled() const { return compiled_; }

  /// Chart values followed by parameter values, from named bindings.
  Vec point(const std::map<std::string, double>& bindings) const;

 private:
  int n_ = 0;
  std::vector<std::string> chart_;
  std::vector<std::string> params_;
  Expr H_;
  CompiledExpr compiled_;
};

/// Contact Hamiltonian vector field at `x` (chart values then parameters).
Vec contact_vf(const ContactSystem& sys, std::span<const double> x);
Vec contact_vf(const ContactSystem& sys, const std::map<std::string, double>& bindings);

/// Flow right-hand side over the chart with parameters frozen.
OdeRhs contact_rhs(const ContactSystem& sys, Vec params = {});

/// Reeb field d/dz in the Darboux chart.
Vec reeb(const ContactSystem& sys);

/// The contact form as a covector (-p, 0, 1) at a chart point.
Vec contact_form(const ContactSystem& sys, std::span<const double> x);

struct IdentityResiduals {
  /// |eta(X_H) + H|
  double eta = 0.0;
  /// max-norm of L_{X_H} eta + R(H) eta as a covector.
  double lie = 0.0;
};

IdentityResiduals check_contact_identities(const ContactSystem& sys, std::span<const double> x);

struct OneFormClass {
  /// 2r+1 with r the largest power such that eta ^ (d eta)^r != 0; 0 if eta
  /// vanishes at the point.
  int cls = 0;
  /// Rank of d eta (twice the largest s with (d eta)^s != 0).
  int rank_deta = 0;
};

/// Class of the 1-form sum_i coeffs[i] d(chart[i]) at `x`. Chart dimension
/// must be at most 7.
OneFormClass classify_one_form(const std::vector<Expr>& coeffs, const std::vector<std::string>& chart,
                               std::span<const double> x, double threshold = 1e-10);

struct PresymplecticControlSystem {
  std::vector<std::string> positions;
  std::vector<std::string> momenta;
  std::vector<std::string> controls;
  Expr H;

  /// positions then momenta.
  std::vector<std::string> base() const;
  /// base then controls.
  std::vector<std::string> chart() const;
  /// Throws InputError on duplicate names, mismatched position/momentum
  /// counts, or names in H outside the chart.
  void validate() const;
};

/// Canonical Hamiltonian field over the base chart, evaluated at a full chart
/// point (controls included).
Vec symplectic_vf(const PresymplecticControlSystem& sys, std::span<const double> x);

/// Directional derivative of f along the canonical field of H over `positions`
/// and `momenta` (controls held fixed). Symbolic.
Expr lie_derivative(const Expr& f, const PresymplecticControlSystem& sys);

struct Constraint {
  Expr expr;
  std::string provenance;
};

struct ConstraintLevel {
  int level = 0;
  std::vector<Constraint> constraints;
  /// control_block[i][a] = d constraints[i] / d u^a. These multiply the free
  /// control rates in the next tangency condition.
  std::vector<std::vector<Expr>> control_block;
};

struct ConstraintSet {
  std::vector<ConstraintLevel> levels;
  bool closed = false;
  int closure_level = -1;
  std::string closure_reason;
  /// True when every level-0 constraint is identically zero.
  bool trivial() const;
};

/// Level 0: dH/du^a. Level r+1: Lie derivatives of level r along the
/// canonical field with controls frozen. Stops at closure or after `depth`
/// levels beyond level 0.
ConstraintSet compatibility_constraints(const PresymplecticControlSystem& sys, int depth);

/// Condition number of d2H/du du at a full chart point (infinity if singular).
double control_hessian_condition(const PresymplecticControlSystem& sys, std::span<const double> x);

/// True iff d2H/du du is invertible with condition number at most 1e12.
bool regularity_test(const PresymplecticControlSystem& sys, std::span<const double> x);

/// Newton solve of dH/du = 0 where the controls are the trailing entries of
/// the compiled chart and `base` holds the leading ones. Residual tolerance
/// 1e-12, at most 50 iterations. Throws SingularError when d2H/du du is not
/// invertible and ConvergenceError on divergence.
Vec solve_control_stationarity(const CompiledExpr& H, std::span<const double> base, const Vec& u_guess);

/// Condition number from singular values (infinity when the smallest is 0).
double condition_number(const Mat& m);

/// Convenience: an Eigen vector as a span.
inline std::span<const double> as_span(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

}  // namespace cpmp
