#pragma once

// Classical optimal control through the presymplectic maximum principle.
//
// Problem: x' = X(x,u), cost integral of F(x,u), fixed endpoints. Extended
// state x0 with x0' = F. Pontryagin Hamiltonian H = p0 F + p_i X^i on the
// chart (x0, x, p0, p, u):
//   x0' = F,  x' = X,  p0' = 0,  p' = -p0 F_x - p_j X^j_x,  dH/du = 0.

#include <span>
#include <string>
#include <vector>

#include "cpmp/expr.hpp"
#include "cpmp/geometry.hpp"
#include "cpmp/integrate.hpp"

namespace cpmp {

enum class Sense { Minimize, Maximize };

/// -1 for minimization, +1 for maximization.
double default_lambda0(Sense sense);

struct OcpProblem {
  std::vector<std::string> states;
  std::vector<std::string> controls;
  /// One per state.
  std::vector<Expr> dynamics;
  Expr cost;
  double a = 0.0;
  double b = 1.0;
  Vec x_start;
  Vec x_end;
  Sense sense = Sense::Minimize;

  /// Throws InputError on inconsistent data.
  void validate() const;
};

/// Costate name paired with a state name.
std::string costate_name(const std::string& state);

class PmpSystem {
 public:
  PmpSystem() = default;
  explicit PmpSystem(OcpProblem problem);

  const OcpProblem& problem() const { return problem_; }
  int m() const { return static_cast<int>(problem_.states.size()); }
  int k() const { return static_cast<int>(problem_.controls.size()); }
  /// (x0, x..., p0, p..., u...)
  const std::vector<std::string>& chart() const { return chart_; }
  /// Chart without controls: 2m+2 entries.
  int base_dim() const { return 2 * m() + 2; }
  const Expr& hamiltonian() const { return H_; }
  const PresymplecticControlSystem& presymplectic() const { return pre_; }
  const CompiledExpr& compiled() const { return compiled_; }

  // Chart positions.
  int ix0() const { return 0; }
  int ix(int i) const { return 1 + i; }
  int ip0() const { return m() + 1; }
  int ip(int i) const { return m() + 2 + i; }
  int iu(int a) const { return 2 * m() + 2 + a; }

 private:
  OcpProblem problem_;
  std::vector<std::string> chart_;
  Expr H_;
  PresymplecticControlSystem pre_;
  CompiledExpr compiled_;
};

/// Builds H = p0 F + p_i X^i. Throws InputError when user names collide with
/// x0, p0 or the costate names.
PmpSystem extend(const OcpProblem& problem);

/// Rates over (x0, x, p0, p) at a full chart point.
Vec pmp_rhs(const PmpSystem& sys, std::span<const double> point);

/// Newton solve of dH/du = 0 from `u_guess` at a base point (no controls).
/// Residual tolerance 1e-12, at most 50 iterations. Throws SingularError when
/// d2H/du du is not invertible and ConvergenceError on divergence.
Vec eliminate_controls(const PmpSystem& sys, std::span<const double> base_point, const Vec& u_guess);

/// Flow over the base chart with controls eliminated at every evaluation,
/// warm-started from the previous solution.
OdeRhs pmp_flow(const PmpSystem& sys, Vec u_guess);

/// Normal branch p0 = lambda0 != 0 as a contact system. Darboux data:
/// zeta = -lambda0 x0, P = p, so eta = dzeta - P dx equals the form
/// -lambda0 dx0 - p dx. Contact Hamiltonian lambda0 F + p X with controls as
/// parameters.
struct NormalRestriction {
  PmpSystem sys;
  double lambda0 = -1.0;
  ContactSystem contact;

  /// (x0, x, p) -> (x, P, zeta).
  Vec to_contact(std::span<const double> xp) const;
  /// (x, P, zeta) -> (x0, x, p).
  Vec from_contact(std::span<const double> c) const;
  /// Reeb field in (x0, x, p) coordinates: -(1/lambda0) d/dx0.
  Vec reeb() const;
};

NormalRestriction normal_restriction(const PmpSystem& sys, double lambda0);

/// Rates over (x0, x, p) from the contact field, at (x0, x, p, u).
Vec normal_rhs(const NormalRestriction& nr, std::span<const double> point);

/// Normal flow over (x0, x, p) with controls eliminated each evaluation.
OdeRhs normal_flow(const NormalRestriction& nr, Vec u_guess);

/// Abnormal branch p0 = 0: H0 = p_i X^i on (x, p) with controls in the
/// kernel. The x0 rate is undetermined there and is reported as F.
struct AbnormalRestriction {
  PmpSystem sys;
  PresymplecticControlSystem reduced;
};

AbnormalRestriction abnormal_restriction(const PmpSystem& sys);

/// Rates over (x0, x, p) at (x0, x, p, u).
Vec abnormal_rhs(const AbnormalRestriction& ar, std::span<const double> point);

struct BvpConfig {
  IntegratorConfig integrator = IntegratorConfig::rk45(1e-11, 1e-13);
  ShootConfig shooting;
  /// Initial costate guess (zeros if empty).
  Vec p_guess;
  /// Control guess for the first elimination (zeros if empty).
  Vec u_guess;
  /// Number of shooting segments (1 = single shooting).
  int segments = 1;
};

struct BvpSolution {
  /// Chart (x0, x, p0, p, u); diagnostics "H" and "dH_du".
  Trajectory trajectory;
  Vec p_start;
  /// max |x(b) - x_end|
  double terminal_residual = 0.0;
  int shooting_attempts = 0;
};

/// Indirect solution: shooting on p(a) so that x(b) = x_end.
BvpSolution solve_bvp(const PmpSystem& sys, double lambda0, const BvpConfig& cfg = {});

}  // namespace cpmp
