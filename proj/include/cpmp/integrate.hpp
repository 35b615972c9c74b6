#pragma once

// Explicit ODE integration with dense output, and a Newton shooting solver.

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cpmp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// y' = f(t, y).
using OdeRhs = std::function<Vec(double t, const Vec& y)>;

/// Time-sampled curve over a named chart, with named per-sample extras.
struct Trajectory {
  std::vector<std::string> chart;
  std::vector<double> times;
  std::vector<Vec> samples;
  /// Slopes at the samples; used for cubic Hermite dense output. May be empty
  /// for trajectories assembled by hand, in which case `at` interpolates
  /// linearly.
  std::vector<Vec> slopes;
  std::vector<std::string> diagnostic_names;
  /// diagnostics[i][j] is diagnostic j at sample i.
  std::vector<std::vector<double>> diagnostics;

  std::size_t size() const { return times.size(); }
  /// Position of `name` in the chart. Throws InputError if absent.
  int index(const std::string& name) const;
  /// Column of a chart coordinate over all samples.
  std::vector<double> column(const std::string& name) const;
  /// Column of a diagnostic over all samples.
  std::vector<double> diagnostic(const std::string& name) const;
  /// Dense output at t in [times.front(), times.back()].
  Vec at(double t) const;
  /// Throws InputError unless times increase strictly and sample sizes match.
  void validate() const;
  /// Appends a diagnostic column computed per sample.
  void add_diagnostic(const std::string& name, const std::function<double(double, const Vec&)>& f);
};

enum class Method { Rk4, Rk45 };

struct IntegratorConfig {
  Method method = Method::Rk45;
  /// Fixed step for rk4 (rounded so that the interval is covered exactly) and
  /// initial step guess for rk45 (0 means automatic).
  double step = 1e-3;
  double rtol = 1e-10;
  double atol = 1e-12;
  double max_step = std::numeric_limits<double>::infinity();
  long max_steps = 1000000;

  static IntegratorConfig rk4(double step) {
    IntegratorConfig c;
    c.method = Method::Rk4;
    c.step = step;
    return c;
  }
  static IntegratorConfig rk45(double rtol, double atol) {
    IntegratorConfig c;
    c.method = Method::Rk45;
    c.rtol = rtol;
    c.atol = atol;
    c.step = 0.0;
    return c;
  }
};

/// Integrates from a to b (b > a). Every accepted step contributes a sample.
/// Errors: ConvergenceError on step underflow or max_steps; EvalError (with
/// the failing time) if the right-hand side throws.
Trajectory integrate(const OdeRhs& f, const Vec& y0, double a, double b, const IntegratorConfig& cfg,
                     std::vector<std::string> chart = {});

/// Final state only.
Vec integrate_to(const OdeRhs& f, const Vec& y0, double a, double b, const IntegratorConfig& cfg);

using ResidualFn = std::function<Vec(const Vec&)>;

struct ShootConfig {
  double tol = 1e-8;
  int max_iters = 60;
  /// Extra attempts from random starting points after the first failure.
  int restarts = 16;
  /// Restart box. If empty, guess ± box_radius per component.
  Vec box_lo;
  Vec box_hi;
  double box_radius = 2.0;
  std::uint64_t seed = 0;
  double max_condition = 1e12;
};

struct ShootResult {
  Vec unknowns;
  Vec residual;
  int iterations = 0;
  /// 1 for success from the initial guess.
  int attempts = 0;
};

/// Damped Newton on residual(y) = 0 with forward-difference Jacobians.
/// Errors: ConvergenceError when no attempt converges; SingularError when the
/// last attempt stopped at a Jacobian with condition above max_condition.
ShootResult shoot(const ResidualFn& residual, const Vec& guess, const ShootConfig& cfg);

/// Forward-difference Jacobian with step 1e-7·(1+|y_j|).
Mat fd_jacobian(const ResidualFn& f, const Vec& y, const Vec& fy);

}  // namespace cpmp
