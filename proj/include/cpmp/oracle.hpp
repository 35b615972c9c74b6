#pragma once

// Direct transcription oracle: controls at N+1 uniform nodes are the decision
// variables, states follow by RK4 with linearly interpolated controls, and the
// terminal condition x(b) = x_end is enforced by an augmented Lagrangian.
// The running quantity c' = F (cost integral or Herglotz action) is carried as
// an extra state, so the objective uses the same quadrature as the dynamics.

#include <string>

#include "cpmp/herglotz_ocp.hpp"
#include "cpmp/integrate.hpp"
#include "cpmp/ocp.hpp"

namespace cpmp {

enum class Optimizer { GradientDescent, QuasiNewton };

struct TranscriptionConfig {
  /// Number of intervals (at least 4).
  int N = 32;
  Optimizer optimizer = Optimizer::QuasiNewton;
  /// Inner iterations per multiplier update.
  int max_iters = 400;
  /// Target max-norm of the gradient of the augmented objective divided by
  /// the node spacing.
  double tol = 1e-6;
  /// Target max |x(b) - x_end|.
  double constraint_tol = 1e-9;
  int outer_iters = 30;
  double penalty = 100.0;
  /// RK4 steps per interval.
  int substeps = 1;
  /// Initial control values (zeros if empty), used at every node.
  Vec u_guess;

  void validate() const;
};

struct TranscriptionResult {
  /// Over (states, running quantity, controls) at the N+1 nodes.
  Trajectory trajectory;
  /// Cost integral for classical problems, z(b) for Herglotz problems.
  double objective = 0.0;
  double terminal_violation = 0.0;
  /// Max-norm of the gradient of the final augmented objective divided by the
  /// node spacing.
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Minimizes (or maximizes) the cost integral. The running cost column is
/// named "cost".
TranscriptionResult transcribe_classical(const OcpProblem& problem, const TranscriptionConfig& cfg = {});

/// Optimizes z(b) with z' = F(x, z, u), z(a) = z_start, per problem.sense.
TranscriptionResult transcribe_herglotz(const HerglotzOcpProblem& problem, const TranscriptionConfig& cfg = {});

/// Max-norm gap between an oracle trajectory and a reference over the shared
/// chart names, at the oracle's interior nodes.
double interior_gap(const TranscriptionResult& oracle, const Trajectory& reference,
                    const std::vector<std::string>& names);

}  // namespace cpmp
