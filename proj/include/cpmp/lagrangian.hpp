#pragma once

// Action-dependent (Herglotz) Lagrangians L(q, v, z).
//
// Generalized Euler-Lagrange equations:
//   d/dt (dL/dv^i) = dL/dq^i + (dL/dz)(dL/dv^i),   z' = L.

#include <span>
#include <string>
#include <vector>

#include "cpmp/expr.hpp"
#include "cpmp/integrate.hpp"
#include "cpmp/jet.hpp"

namespace cpmp {

class HerglotzLagrangian {
 public:
  HerglotzLagrangian() = default;
  /// Chart q..., v..., z.
  HerglotzLagrangian(std::vector<std::string> q, std::vector<std::string> v, std::string z, Expr L);
  /// Chart (q, v, z) for n=1 and (q1..qn, v1..vn, z) otherwise.
  static HerglotzLagrangian standard(int n, Expr L);

  int n() const { return n_; }
  int dim() const { return 2 * n_ + 1; }
  const std::vector<std::string>& chart() const { return chart_; }
  std::vector<std::string> positions() const;
  std::vector<std::string> velocities() const;
  const std::string& action_name() const { return chart_.back(); }
  const Expr& lagrangian() const { return L_; }
  const CompiledExpr& compiled() const { return compiled_; }

 private:
  int n_ = 0;
  std::vector<std::string> chart_;
  Expr L_;
  CompiledExpr compiled_;
};

/// W_ij = d2L / dv^i dv^j.
Mat velocity_hessian(const HerglotzLagrangian& lag, std::span<const double> x);

/// (q', v', z') with v' solved from the generalized Euler-Lagrange equations.
/// Throws SingularError when W is singular (condition above 1e12).
Vec herglotz_rhs(const HerglotzLagrangian& lag, std::span<const double> x);

OdeRhs herglotz_flow(const HerglotzLagrangian& lag);

/// p_i = dL/dv^i.
Vec legendre_momenta(const HerglotzLagrangian& lag, std::span<const double> x);

/// Generalized Euler-Lagrange residual d/dt(L_v) - L_q - L_z L_v at each
/// interior sample of a trajectory over the lagrangian chart, with the time
/// derivative taken by fourth-order central differences (needs uniform
/// spacing). Returns the max-norm over all samples.
double herglotz_residual(const HerglotzLagrangian& lag, const Trajectory& traj);

/// Herglotz action Z(b): integrates z' = L(gamma, gamma', z) along a path
/// sampled over the position and velocity names of `lag`, with the path
/// interpolated linearly in (q, v). The default configuration takes one RK4
/// step per path interval.
double herglotz_action(const HerglotzLagrangian& lag, const Trajectory& path, double z0);
double herglotz_action(const HerglotzLagrangian& lag, const Trajectory& path, double z0,
                       const IntegratorConfig& cfg);

}  // namespace cpmp
