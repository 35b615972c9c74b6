#include "cpmp/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "cpmp/error.hpp"

namespace cpmp {
namespace {

Vec call_rhs(const OdeRhs& f, double t, const Vec& y) {
  Vec dy;
  try {
    dy = f(t, y);
  } catch (const Error& e) {
    std::ostringstream os;
    os.precision(17);
    os << e.what() << " (right-hand side at t=" << t << ")";
    throw EvalError(os.str());
  }
  if (dy.size() != y.size()) throw InputError("right-hand side returned a vector of the wrong size");
  if (!dy.allFinite()) {
    std::ostringstream os;
    os.precision(17);
    os << "right-hand side is not finite at t=" << t;
    throw EvalError(os.str());
  }
  return dy;
}

void push(Trajectory& tr, double t, const Vec& y, const Vec& dy) {
  tr.times.push_back(t);
  tr.samples.push_back(y);
  tr.slopes.push_back(dy);
}

Trajectory run_rk4(const OdeRhs& f, const Vec& y0, double a, double b, const IntegratorConfig& cfg) {
  if (!(cfg.step > 0.0)) throw InputError("rk4 step must be positive");
  const long n = std::max<long>(1, static_cast<long>(std::ceil((b - a) / cfg.step - 1e-9)));
  if (n > cfg.max_steps) throw ConvergenceError("rk4 would exceed max_steps");
  const double h = (b - a) / static_cast<double>(n);
  Trajectory tr;
  tr.times.reserve(n + 1);
  Vec y = y0;
  Vec k1 = call_rhs(f, a, y);
  push(tr, a, y, k1);
  for (long i = 0; i < n; ++i) {
    const double t = a + static_cast<double>(i) * h;
    const Vec k2 = call_rhs(f, t + h / 2, y + (h / 2) * k1);
    const Vec k3 = call_rhs(f, t + h / 2, y + (h / 2) * k2);
    const Vec k4 = call_rhs(f, t + h, y + h * k3);
    y += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
    const double tn = (i + 1 == n) ? b : a + static_cast<double>(i + 1) * h;
    k1 = call_rhs(f, tn, y);
    push(tr, tn, y, k1);
  }
  return tr;
}

// Dormand–Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

double error_norm(const Vec& err, const Vec& y0, const Vec& y1, double rtol, double atol) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    s += (err(i) / sc) * (err(i) / sc);
  }
  return err.size() == 0 ? 0.0 : std::sqrt(s / static_cast<double>(err.size()));
}

Trajectory run_rk45(const OdeRhs& f, const Vec& y0, double a, double b, const IntegratorConfig& cfg) {
  if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0)) throw InputError("rtol and atol must be positive");
  Trajectory tr;
  Vec y = y0;
  Vec k1 = call_rhs(f, a, y);
  push(tr, a, y, k1);
  const double span = b - a;
  double h = cfg.step;
  if (!(h > 0.0)) {
    // Standard starting-step heuristic.
    Vec sc = (cfg.atol + cfg.rtol * y.array().abs()).matrix();
    const double d0 = y.size() ? (y.array() / sc.array()).matrix().norm() / std::sqrt(double(y.size())) : 0.0;
    const double d1 = y.size() ? (k1.array() / sc.array()).matrix().norm() / std::sqrt(double(y.size())) : 0.0;
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min(h, span);
  }
  h = std::min({h, cfg.max_step, span});
  double t = a;
  long steps = 0;
  while (t < b) {
    if (++steps > cfg.max_steps) throw ConvergenceError("rk45 exceeded max_steps");
    bool last = false;
    if (t + h >= b || b - (t + h) < 1e-12 * std::max(1.0, std::abs(b))) {
      h = b - t;
      last = true;
    }
    if (h <= 1e-14 * std::max(1.0, std::abs(t))) {
      std::ostringstream os;
      os.precision(17);
      os << "rk45 step underflow at t=" << t;
      throw ConvergenceError(os.str());
    }
    const Vec k2 = call_rhs(f, t + c2 * h, y + h * (a21 * k1));
    const Vec k3 = call_rhs(f, t + c3 * h, y + h * (a31 * k1 + a32 * k2));
    const Vec k4 = call_rhs(f, t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    const Vec k5 = call_rhs(f, t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const Vec k6 = call_rhs(f, t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const Vec yn = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Vec k7 = call_rhs(f, t + h, yn);
    const Vec err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = error_norm(err, y, yn, cfg.rtol, cfg.atol);
    if (en <= 1.0) {
      t = last ? b : t + h;
      y = yn;
      k1 = k7;
      push(tr, t, y, k1);
      const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
      h = std::min(h * fac, cfg.max_step);
    } else {
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
    }
  }
  return tr;
}

}  // namespace

int Trajectory::index(const std::string& name) const {
  for (std::size_t i = 0; i < chart.size(); ++i) {
    if (chart[i] == name) return static_cast<int>(i);
  }
  throw InputError("trajectory has no coordinate '" + name + "'");
}

std::vector<double> Trajectory::column(const std::string& name) const {
  const int k = index(name);
  std::vector<double> out;
  out.reserve(samples.size());
  for (const Vec& s : samples) out.push_back(s(k));
  return out;
}

std::vector<double> Trajectory::diagnostic(const std::string& name) const {
  for (std::size_t j = 0; j < diagnostic_names.size(); ++j) {
    if (diagnostic_names[j] != name) continue;
    std::vector<double> out;
    out.reserve(diagnostics.size());
    for (const auto& row : diagnostics) out.push_back(row[j]);
    return out;
  }
  throw InputError("trajectory has no diagnostic '" + name + "'");
}

Vec Trajectory::at(double t) const {
  if (times.empty()) throw InputError("empty trajectory");
  if (t <= times.front()) return samples.front();
  if (t >= times.back()) return samples.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t i = static_cast<std::size_t>(it - times.begin()) - 1;
  const double h = times[i + 1] - times[i];
  const double s = (t - times[i]) / h;
  if (slopes.size() != samples.size()) return (1 - s) * samples[i] + s * samples[i + 1];
  const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
  const double h10 = s * (1 - s) * (1 - s);
  const double h01 = s * s * (3 - 2 * s);
  const double h11 = s * s * (s - 1);
  return h00 * samples[i] + (h10 * h) * slopes[i] + h01 * samples[i + 1] + (h11 * h) * slopes[i + 1];
}

void Trajectory::validate() const {
  if (times.size() != samples.size()) throw InputError("trajectory times and samples differ in length");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (static_cast<std::size_t>(samples[i].size()) != chart.size()) {
      throw InputError("trajectory sample " + std::to_string(i) + " does not match the chart");
    }
    if (i > 0 && !(times[i] > times[i - 1])) throw InputError("trajectory times are not strictly increasing");
  }
  if (!diagnostics.empty() && diagnostics.size() != samples.size()) {
    throw InputError("trajectory diagnostics do not cover every sample");
  }
}

void Trajectory::add_diagnostic(const std::string& name, const std::function<double(double, const Vec&)>& f) {
  diagnostics.resize(samples.size());
  diagnostic_names.push_back(name);
  for (std::size_t i = 0; i < samples.size(); ++i) diagnostics[i].push_back(f(times[i], samples[i]));
}

Trajectory integrate(const OdeRhs& f, const Vec& y0, double a, double b, const IntegratorConfig& cfg,
                     std::vector<std::string> chart) {
  if (!(b > a)) throw InputError("integration interval must satisfy b > a");
  if (cfg.max_steps < 1) throw InputError("max_steps must be at least 1");
  if (!chart.empty() && chart.size() != static_cast<std::size_t>(y0.size())) {
    throw InputError("chart length does not match the initial state");
  }
  Trajectory tr = cfg.method == Method::Rk4 ? run_rk4(f, y0, a, b, cfg) : run_rk45(f, y0, a, b, cfg);
  tr.chart = std::move(chart);
  if (tr.chart.empty()) {
    for (Eigen::Index i = 0; i < y0.size(); ++i) tr.chart.push_back("y" + std::to_string(i));
  }
  return tr;
}

Vec integrate_to(const OdeRhs& f, const Vec& y0, double a, double b, const IntegratorConfig& cfg) {
  return integrate(f, y0, a, b, cfg).samples.back();
}

Mat fd_jacobian(const ResidualFn& f, const Vec& y, const Vec& fy) {
  Mat J(fy.size(), y.size());
  Vec yp = y;
  for (Eigen::Index j = 0; j < y.size(); ++j) {
    const double h = 1e-7 * (1.0 + std::abs(y(j)));
    yp(j) = y(j) + h;
    J.col(j) = (f(yp) - fy) / h;
    yp(j) = y(j);
  }
  return J;
}

namespace {

enum class Outcome { Converged, Singular, Failed };

struct Attempt {
  Outcome outcome = Outcome::Failed;
  Vec y;
  Vec r;
  int iterations = 0;
  std::string why;
};

bool safe_eval(const ResidualFn& f, const Vec& y, Vec& out) {
  try {
    out = f(y);
  } catch (const Error&) {
    return false;
  }
  return out.allFinite();
}

Attempt newton(const ResidualFn& f, Vec y, const ShootConfig& cfg) {
  Attempt at;
  Vec r;
  if (!safe_eval(f, y, r)) {
    at.why = "residual not evaluable at the starting point";
    return at;
  }
  for (int it = 0; it <= cfg.max_iters; ++it) {
    at.y = y;
    at.r = r;
    at.iterations = it;
    if (r.lpNorm<Eigen::Infinity>() <= cfg.tol) {
      at.outcome = Outcome::Converged;
      return at;
    }
    if (it == cfg.max_iters) break;
    Mat J;
    try {
      J = fd_jacobian(f, y, r);
    } catch (const Error& e) {
      at.why = e.what();
      return at;
    }
    if (!J.allFinite()) {
      at.why = "non-finite Jacobian";
      return at;
    }
    Eigen::JacobiSVD<Mat> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double smax = sv.size() ? sv(0) : 0.0;
    const double smin = sv.size() ? sv(sv.size() - 1) : 0.0;
    if (sv.size() < y.size() || smin <= 0.0 || smax / smin > cfg.max_condition) {
      at.outcome = Outcome::Singular;
      at.why = "singular shooting Jacobian";
      return at;
    }
    const Vec dy = svd.solve(-r);
    const double merit = r.squaredNorm();
    double lambda = 1.0;
    bool accepted = false;
    for (int k = 0; k < 40; ++k) {
      const Vec yt = y + lambda * dy;
      Vec rt;
      if (safe_eval(f, yt, rt) && rt.squaredNorm() <= (1.0 - 1e-4 * lambda) * merit) {
        y = yt;
        r = rt;
        accepted = true;
        break;
      }
      lambda *= 0.5;
    }
    if (!accepted) {
      at.why = "line search stalled";
      return at;
    }
  }
  if (at.why.empty()) at.why = "iteration limit reached";
  return at;
}

}  // namespace

ShootResult shoot(const ResidualFn& residual, const Vec& guess, const ShootConfig& cfg) {
  Vec lo = cfg.box_lo, hi = cfg.box_hi;
  if (lo.size() == 0) lo = guess.array() - cfg.box_radius;
  if (hi.size() == 0) hi = guess.array() + cfg.box_radius;
  if (lo.size() != guess.size() || hi.size() != guess.size()) throw InputError("shooting box does not match the unknowns");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec start = guess;
  Attempt last;
  for (int attempt = 0; attempt <= cfg.restarts; ++attempt) {
    if (attempt > 0) {
      for (Eigen::Index i = 0; i < start.size(); ++i) start(i) = lo(i) + (hi(i) - lo(i)) * unit(rng);
    }
    last = newton(residual, start, cfg);
    if (last.outcome == Outcome::Converged) {
      return ShootResult{last.y, last.r, last.iterations, attempt + 1};
    }
  }
  const std::string msg = "shooting did not converge after " + std::to_string(cfg.restarts + 1) +
                          " attempt(s): " + last.why;
  if (last.outcome == Outcome::Singular) throw SingularError(msg);
  throw ConvergenceError(msg);
}

}  // namespace cpmp
