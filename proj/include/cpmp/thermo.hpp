#pragma once

// Port-thermodynamic systems in the contact (entropy) representation.
//
// Homogeneous picture: T*(Q x R) with coordinates (q, z, P, P_z) and
// omega = dq ^ dP + dz ^ dP_z. A degree-1 homogeneous H projects through
//   p = -P / P_z,   h(q, p, z) = H(q, z, p, -1),   H = -P_z h(q, -P/P_z, z)
// onto the contact system (T*Q x R, dz - p dq, h).
//
// Controlled contact systems h(q, p, z, u) lift to T*(T*Q) x R with
//   H = Pi_q h_p + Pi_p (-h_q - p h_z) - (p h_p - h),
// the Hamiltonian of the reduced Herglotz problem whose state is (q, p) and
// whose action is z.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cpmp/expr.hpp"
#include "cpmp/geometry.hpp"
#include "cpmp/integrate.hpp"

namespace cpmp {

// ---------------------------------------------------------------------------
// Homogenization

struct HomogeneousSystem {
  std::vector<std::string> q;
  std::string z = "z";
  std::vector<std::string> P;
  std::string Pz = "P_z";
  Expr H;
  /// Contact momentum names; "p_" + q[i] when empty.
  std::vector<std::string> p;

  /// Chart (q, z, P, P_z).
  std::vector<std::string> chart() const;
  std::vector<std::string> momentum_names() const;
  /// Throws InputError on duplicate or undeclared names.
  void validate() const;
};

/// h(q, p, z) = H(q, z, p, -1) over the contact chart (q, p, z).
ContactSystem dehomogenized_system(const HomogeneousSystem& sys);

struct Dehomogenized {
  double h = 0.0;
  /// (q, p, z) with p = -P / P_z.
  Vec contact_point;
  /// max over lambda in {2, -3} of |H(lambda P) - lambda H(P)| / (1 + |H|).
  double homogeneity_residual = 0.0;
};

/// Evaluates the dehomogenization at (q, z, P, P_z). Throws SingularError when
/// |P_z| <= 1e-12 and InputError when H fails the degree-1 scaling test
/// (relative tolerance 1e-10).
Dehomogenized dehomogenize(const HomogeneousSystem& sys, std::span<const double> point);

/// `Literal` uses p = P / P_z with h(q, p, z) = H(q, z, -p, -1); kept to show
/// that this pairing does not send the symplectic flow onto the contact flow.
enum class DehomogenizationMap { Corrected, Literal };

/// Pushes the canonical field of H through the map and compares with
/// contact_vf(h) at the image point. Returns the max abs residual.
double homogeneous_flow_projects(const HomogeneousSystem& sys, std::span<const double> point,
                                 DehomogenizationMap map = DehomogenizationMap::Corrected);

// ---------------------------------------------------------------------------
// Port-thermodynamic systems

struct PortThermoSystem {
  /// Positions (extensive variables except S), their momenta, and S as the
  /// contact coordinate; controls are parameters.
  std::vector<std::string> q;
  std::vector<std::string> p;
  std::string S = "S";
  std::vector<std::string> controls;
  /// Constraint functions whose common zero set is the Legendrian submanifold.
  std::vector<Expr> legendrian;
  Expr h_internal;
  /// One per control.
  std::vector<Expr> h_control;

  /// h_internal + sum_a h_control[a] u^a.
  Expr hamiltonian() const;
  ContactSystem contact() const;
  /// (q, p, S)
  std::vector<std::string> chart() const;
  void validate() const;
};

struct ThermoCheck {
  /// max |h_internal| and max |h_control| over the points.
  double h_internal = 0.0;
  double h_control = 0.0;
  /// max |constraint| over the points (they are expected to lie on the set).
  double legendrian = 0.0;
  /// min of the S component of the contact field (entropy production rate).
  double min_entropy_rate = 0.0;
  /// min of dh/dS, reported for reference; see the README on the second law.
  double min_dh_dS = 0.0;
};

/// Evaluates the port-thermodynamic conditions at chart points (q, p, S) with
/// the given control values.
ThermoCheck check_port_thermo(const PortThermoSystem& sys, const std::vector<Vec>& points, const Vec& u);

// ---------------------------------------------------------------------------
// Gas, piston and damper

struct GasPistonParams {
  double m = 1.0;
  double d = 0.5;
  /// Internal energy U(V, S).
  Expr U = parse("exp(S)*V^(-2/3)");
  /// Sampling box for (V, pi, S).
  double V_lo = 0.5, V_hi = 2.0;
  double pi_lo = -1.0, pi_hi = 1.0;
  double S_lo = -0.5, S_hi = 0.5;

  /// Throws InputError for m <= 0, an empty box or names in U other than V, S.
  void validate() const;
};

struct GasPiston {
  GasPistonParams params;
  /// Chart (V, pi, E, p_V, p_pi, p_E, S), control u.
  PortThermoSystem system;
  CompiledExpr U_V, U_S;

  /// The point of the Legendrian submanifold above (V, pi, S).
  Vec on_legendrian(double V, double pi, double S) const;
  /// `n` Halton points of the box mapped onto the Legendrian submanifold.
  std::vector<Vec> sample_legendrian(int n) const;
  /// max |constraint| at a chart point.
  double legendrian_residual(std::span<const double> x) const;
};

/// Builds h and the state equations. Throws InputError when dU/dS <= 0 at a
/// sampled point of the box.
GasPiston gas_piston_system(const GasPistonParams& params, int samples = 50);

/// Control law u(t, chart); the chart names and "t" may appear.
struct ControlLaw {
  Expr u = Expr::number(0.0);
};

struct GasPistonRun {
  /// Chart (V, pi, E, p_V, p_pi, p_E, S) with diagnostics "u", "h",
  /// "legendrian" and "entropy_rate".
  Trajectory trajectory;
  /// Largest decrease of S between consecutive samples (0 if nondecreasing).
  double max_entropy_decrease = 0.0;
  double max_legendrian_residual = 0.0;
  double min_entropy_rate = 0.0;
  std::size_t steps = 0;
};

/// Integrates X_h from the Legendrian point above (V, pi, S).
GasPistonRun simulate_gas_piston(const GasPiston& gp, double V, double pi, double S, const ControlLaw& law, double T,
                                 const IntegratorConfig& cfg);

// ---------------------------------------------------------------------------
// Lifted control Hamiltonian

/// Name of the momentum conjugate to a lifted-chart coordinate.
std::string lifted_momentum_name(const std::string& coordinate);

struct LiftedControlSystem {
  /// Chart (q, p, Pi_q, Pi_p, S) with the controls as parameters.
  ContactSystem contact;
  std::vector<std::string> controls;
  /// constraints[0] = dH/du, constraints[r] = time derivative of
  /// constraints[r-1] along the contact field with u frozen.
  std::vector<Expr> constraints;
  /// Level at which the control first appears (u is solved from it).
  int elimination_level = -1;
};

/// H = Pi_q h_p + Pi_p (-h_q - p h_z) - (p h_p - h) for a contact system with
/// one control, and the constraint chain up to the level where u appears
/// (at most `depth`). Throws SingularError when u never appears.
LiftedControlSystem lift_control_system(const ContactSystem& base, const std::vector<std::string>& controls,
                                        int depth = 4);

LiftedControlSystem gas_piston_control_hamiltonian(const GasPiston& gp, int depth = 4);

/// u from constraints[elimination_level] = 0 at a lifted point (Newton, the
/// constraint is affine in u for control-affine h). Throws SingularError when
/// the u-coefficient vanishes.
double lifted_feedback(const LiftedControlSystem& lifted, std::span<const double> point, double u_guess = 0.0);

/// Adjusts two momentum components of a lifted base point so that every
/// constraint below the elimination level vanishes. Throws ConvergenceError
/// when no admissible pair is found.
Vec admissible_lift(const LiftedControlSystem& lifted, const Vec& point);

struct LiftedRun {
  /// Lifted chart with diagnostics "u", "H" and "phi<r>" for r below the
  /// elimination level.
  Trajectory trajectory;
  /// max |phi_r| over samples and levels below the elimination level.
  double constraint_drift = 0.0;
};

LiftedRun integrate_lifted(const LiftedControlSystem& lifted, const Vec& start, double T, const IntegratorConfig& cfg);

struct TermCheckEntry {
  std::string term;
  double max_residual = 0.0;
  bool matches = false;
};

struct TermCheckReport {
  /// Coefficients of each lifted momentum and the momentum-free part of H.
  std::vector<TermCheckEntry> hamiltonian_terms;
  /// Printed alpha against -dH/dS.
  double alpha_residual = 0.0;
  /// Printed constraint against dH/du.
  double constraint_residual = 0.0;
  /// Printed constraint with the sign of its p_E term reversed.
  double constraint_residual_sign_fixed = 0.0;
  std::vector<std::string> discrepant_terms() const;
};

/// Compares the generated lifted Hamiltonian with a transcribed closed form at
/// `points` Halton points. The closed form labels the momentum of x as P_{p_x}
/// and that of p_x as P_x. Its alpha uses the opposite labels.
TermCheckReport gas_piston_term_check(const GasPiston& gp, const LiftedControlSystem& lifted, int points = 50,
                                      double tol = 1e-9);

}  // namespace cpmp
