#pragma once

// Herglotz optimal control: x' = X(x,z,u), z' = F(x,z,u), optimize z(b).
//
// Full extended system on (x0, p0, x, p, z, p_z, u) with
//   H = p0 F + p_i X^i + p_z F,
//   x0' = F,  x' = X,  z' = F,  p0' = 0,
//   p' = -(p0 + p_z) F_x - p_j X^j_x,  p_z' = -(p0 + p_z) F_z - p_j X^j_z,
//   dH/du = (p0 + p_z) F_u + p_j X^j_u = 0.
//
// Reduced contact system on (x, P, z, u) with eta0 = dz - P dx and
//   H0 = P_i X^i - F,  dH0/du = 0,
// related to the full system on x0 = z through P = -p / (p0 + p_z).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cpmp/expr.hpp"
#include "cpmp/geometry.hpp"
#include "cpmp/integrate.hpp"
#include "cpmp/lagrangian.hpp"
#include "cpmp/ocp.hpp"

namespace cpmp {

struct HerglotzOcpProblem {
  std::vector<std::string> states;
  std::vector<std::string> controls;
  /// One per state; may reference the action variable.
  std::vector<Expr> dynamics;
  /// Action rate F(x, z, u).
  Expr cost;
  double a = 0.0;
  double b = 1.0;
  Vec x_start;
  Vec x_end;
  double z_start = 0.0;
  /// Whether z(b) is minimized or maximized.
  Sense sense = Sense::Minimize;
  std::string z_name = "z";

  /// Throws InputError on inconsistent data.
  void validate() const;
  /// True if F or some X^i references the action variable.
  bool z_dependent() const;
};

/// The same data as a classical problem. Throws InputError if z-dependent.
OcpProblem to_classical(const HerglotzOcpProblem& problem);

class FullHerglotzSystem {
 public:
  FullHerglotzSystem() = default;
  explicit FullHerglotzSystem(HerglotzOcpProblem problem);

  const HerglotzOcpProblem& problem() const { return problem_; }
  int m() const { return static_cast<int>(problem_.states.size()); }
  int k() const { return static_cast<int>(problem_.controls.size()); }
  /// (x0, p0, x..., p..., z, p_z, u...)
  const std::vector<std::string>& chart() const { return chart_; }
  /// Chart without controls: 2m+4 entries.
  int base_dim() const { return 2 * m() + 4; }
  const Expr& hamiltonian() const { return H_; }
  const PresymplecticControlSystem& presymplectic() const { return pre_; }
  const CompiledExpr& compiled() const { return compiled_; }
  /// F and dF/dz over the chart.
  const CompiledExpr& cost() const { return F_; }
  const CompiledExpr& cost_z() const { return Fz_; }

  int ix0() const { return 0; }
  int ip0() const { return 1; }
  int ix(int i) const { return 2 + i; }
  int ip(int i) const { return 2 + m() + i; }
  int iz() const { return 2 + 2 * m(); }
  int ipz() const { return 3 + 2 * m(); }
  int iu(int a) const { return 4 + 2 * m() + a; }

 private:
  HerglotzOcpProblem problem_;
  std::vector<std::string> chart_;
  Expr H_;
  PresymplecticControlSystem pre_;
  CompiledExpr compiled_, F_, Fz_;
};

/// Builds H = p0 F + p X + p_z F. Throws InputError on name collisions with
/// x0, p0, p_z or the costates.
FullHerglotzSystem extend(const HerglotzOcpProblem& problem);

/// Rates over the base chart at a full chart point. The control rates are
/// free (kernel directions) and not part of the result.
Vec full_extended_rhs(const FullHerglotzSystem& sys, std::span<const double> point);

/// Flow over the base chart with controls eliminated at every evaluation.
OdeRhs full_flow(const FullHerglotzSystem& sys, Vec u_guess = {});

/// Integrates the full flow from a base point. The result is over the full
/// chart (controls included) with diagnostics "int_Fz" (the integral of dF/dz
/// from a) and "mu" (p0 + p_z).
Trajectory integrate_full(const FullHerglotzSystem& sys, const Vec& base_start, double a, double b,
                          const IntegratorConfig& cfg, Vec u_guess = {});

struct PzReport {
  /// min |p0 + p_z| over the samples.
  double min_abs = 0.0;
  /// max relative deviation from (p0+p_z)(a) exp(-int_a^t F_z); absolute
  /// deviation where the closed form vanishes.
  double max_rel_error = 0.0;
  /// The closed form holds when X does not depend on z.
  bool law_applicable = true;
  /// (p0 + p_z)(a) = 0, in which case the factor vanishes identically.
  bool degenerate = false;
};

/// Checks the linear law p_z' = -(p0 + p_z) F_z along a full-chart trajectory.
/// Uses the "int_Fz" diagnostic when present and Simpson quadrature of the
/// dense output otherwise.
PzReport pz_invariant_check(const FullHerglotzSystem& sys, const Trajectory& traj);

/// Which reduction map to apply; `Printed` is the variant P = -(lambda0 + p_z) p,
/// kept to document that it does not intertwine the flows.
enum class ReductionMap { Corrected, Printed };

class ReducedContactOcp {
 public:
  ReducedContactOcp() = default;
  ReducedContactOcp(HerglotzOcpProblem problem, double lambda0);

  const HerglotzOcpProblem& problem() const { return problem_; }
  double lambda0() const { return lambda0_; }
  int m() const { return static_cast<int>(problem_.states.size()); }
  int k() const { return static_cast<int>(problem_.controls.size()); }
  /// (x..., P..., z, u...)
  const std::vector<std::string>& chart() const { return chart_; }
  const Expr& hamiltonian() const { return H0_; }
  /// Controls enter as parameters.
  const ContactSystem& contact() const { return contact_; }
  const CompiledExpr& compiled() const { return contact_.compiled(); }

  /// (x0, p0, x, p, z, p_z) -> (x, P, z) with P = -p / (lambda0 + p_z).
  Vec project(std::span<const double> full_base, ReductionMap map = ReductionMap::Corrected) const;

 private:
  HerglotzOcpProblem problem_;
  double lambda0_ = -1.0;
  std::vector<std::string> chart_;
  Expr H0_;
  ContactSystem contact_;
};

/// Throws InputError when lambda0 = 0.
ReducedContactOcp reduce(const HerglotzOcpProblem& problem, double lambda0);

/// contact_vf of H0 at (x, P, z, u).
Vec reduced_rhs(const ReducedContactOcp& r, std::span<const double> point);

/// Reduced flow over (x, P, z) with controls eliminated each evaluation.
OdeRhs reduced_flow(const ReducedContactOcp& r, Vec u_guess = {});

struct ClosedFormAudit {
  /// max |contact_vf(H0) - printed P' components| over the sample points.
  double rhs_residual = 0.0;
  /// max |printed constraint + dH0/du|: the two differ by an overall sign.
  double constraint_sum = 0.0;
  /// max |printed constraint - dH0/du|.
  double constraint_difference = 0.0;
};

/// Compares the generated reduced system with the closed form
///   P_i' = P_i F_z - P_j X^j_{x^i} + F_{x^i} - X^j_z P_i P_j,
///   constraint F_u - P_j X^j_u = 0,
/// at Halton points in [-1, 1]^d.
ClosedFormAudit reduced_closed_form_audit(const ReducedContactOcp& r, int points = 100);

struct ConformalResidual {
  /// max-norm of Phi* eta0 - c eta~ over (x, z, p, p_z) with c the claimed
  /// factor: -1/mu for the corrected map, -mu for the printed one.
  double form = 0.0;
  /// |H0(Phi(point)) - c H~(point)|.
  double hamiltonian = 0.0;
};

/// eta~ = -mu dz - p dx and H~ = mu F + p X on x0 = z, with mu = lambda0 + p_z.
/// `point` is (x, p, z, p_z, u).
ConformalResidual conformal_pullback_check(const ReducedContactOcp& r, std::span<const double> point,
                                           ReductionMap map = ReductionMap::Corrected);

struct ProjectionReport {
  /// Over (x, P, z, u); slopes follow the chain rule through the map.
  Trajectory reduced;
  /// max |x0 - z| along the full trajectory.
  double x0_z_drift = 0.0;
  /// max-norm of projected slope minus reduced_rhs, over all samples.
  double rhs_residual = 0.0;
};

/// Projects a full-chart trajectory (with slopes) onto the reduced chart.
/// Throws InputError when x0(a) != z(a) or p0 differs from lambda0.
ProjectionReport consistency_project(const ReducedContactOcp& r, const Trajectory& full_traj,
                                     ReductionMap map = ReductionMap::Corrected);

struct HerglotzBvpConfig {
  IntegratorConfig integrator = IntegratorConfig::rk45(1e-11, 1e-13);
  ShootConfig shooting;
  /// Costate guess: p(a) for the full system, P(a) for the reduced one.
  Vec p_guess;
  double pz_guess = 0.0;
  Vec u_guess;
};

struct FullSolution {
  /// Full chart with diagnostics "int_Fz", "mu", "H" and "dH_du".
  Trajectory trajectory;
  Vec p_start;
  double pz_start = 0.0;
  /// max(|x(b) - x_end|, |p_z(b)|)
  double terminal_residual = 0.0;
  double min_abs_mu = 0.0;
  std::vector<std::string> warnings;
  int shooting_attempts = 0;
};

/// Shoots on (p(a), p_z(a)) with p0 = lambda0 and x0(a) = z(a) = z_start so
/// that x(b) = x_end and p_z(b) = 0.
FullSolution solve_full(const FullHerglotzSystem& sys, double lambda0, const HerglotzBvpConfig& cfg = {});

struct ReducedSolution {
  /// Over (x, P, z, u) with diagnostics "H0" and "dH0_du".
  Trajectory trajectory;
  Vec p_start;
  double terminal_residual = 0.0;
  int shooting_attempts = 0;
};

/// Shoots on P(a) with z(a) = z_start so that x(b) = x_end.
ReducedSolution solve_reduced(const ReducedContactOcp& r, const HerglotzBvpConfig& cfg = {});

/// Velocity-controlled problem of a Lagrangian: X^i = v^i, F = L.
HerglotzOcpProblem velocity_controlled_problem(const HerglotzLagrangian& lag, double a, double b, Vec q_start,
                                               Vec q_end, double z_start = 0.0);

struct RecoveryReport {
  /// Over the lagrangian chart (q, v, z), uniform samples.
  Trajectory solution;
  /// Generalized Euler-Lagrange residual along the solution.
  double el_residual = 0.0;
  /// max |solution - Herglotz flow from the same initial state| over samples.
  double flow_agreement = 0.0;
  /// P(a) = dL/dv at a.
  Vec p_start;
};

/// Solves the velocity-controlled problem through the reduced system, then
/// re-integrates with fixed RK4 steps of `step` and evaluates the generalized
/// Euler-Lagrange residual. Throws SingularError for a singular Lagrangian.
RecoveryReport herglotz_equation_recovery(const HerglotzLagrangian& lag, double a, double b, const Vec& q_start,
                                          const Vec& q_end, double z_start = 0.0, const HerglotzBvpConfig& cfg = {},
                                          double step = 1e-3);

}  // namespace cpmp
