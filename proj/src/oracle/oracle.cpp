#include "cpmp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <set>

#include "cpmp/error.hpp"

namespace cpmp {
namespace {

struct Transcription {
  int m = 0, k = 0, N = 0, substeps = 1;
  std::vector<std::string> chart;  // states, running quantity, controls
  std::vector<CompiledExpr> X;
  CompiledExpr F;
  Vec x_start, x_end;
  double c_start = 0.0;
  double a = 0.0, b = 1.0;
  double sign = 1.0;  // +1 minimizes c(b)

  double node(int j) const { return a + (b - a) * j / N; }

  Vec rate(const Vec& s, const Vec& u) const {
    Vec buf(m + 1 + k);
    buf << s, u;
    Vec out(m + 1);
    for (int i = 0; i < m; ++i) out(i) = X[static_cast<std::size_t>(i)].value(as_span(buf));
    out(m) = F.value(as_span(buf));
    return out;
  }

  // RK4 across interval j with controls interpolated linearly between nodes.
  Vec advance(Vec s, int j, const Vec& u0, const Vec& u1) const {
    const double h = (node(j + 1) - node(j)) / substeps;
    for (int r = 0; r < substeps; ++r) {
      const double w0 = static_cast<double>(r) / substeps, w1 = static_cast<double>(r + 1) / substeps;
      const Vec ua = (1 - w0) * u0 + w0 * u1, ub = (1 - w1) * u0 + w1 * u1;
      const Vec um = 0.5 * (ua + ub);
      const Vec k1 = rate(s, ua);
      const Vec k2 = rate(s + 0.5 * h * k1, um);
      const Vec k3 = rate(s + 0.5 * h * k2, um);
      const Vec k4 = rate(s + h * k3, ub);
      s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return s;
  }

  Vec controls(const Vec& w, int j) const { return w.segment(static_cast<Eigen::Index>(j) * k, k); }

  // Node states from node `from` (whose state is given) to the end.
  std::vector<Vec> rollout(const Vec& w, int from, const Vec& s_from) const {
    std::vector<Vec> S;
    S.reserve(static_cast<std::size_t>(N - from + 1));
    S.push_back(s_from);
    for (int j = from; j < N; ++j) S.push_back(advance(S.back(), j, controls(w, j), controls(w, j + 1)));
    return S;
  }

  Vec start() const {
    Vec s(m + 1);
    s << x_start, c_start;
    return s;
  }
};

struct Augmented {
  const Transcription& T;
  Vec lambda;
  double rho;

  double value_at_end(const Vec& s) const {
    const Vec g = s.head(T.m) - T.x_end;
    return T.sign * s(T.m) + lambda.dot(g) + 0.5 * rho * g.squaredNorm();
  }

  double value(const Vec& w) const { return value_at_end(T.rollout(w, 0, T.start()).back()); }

  // Central differences (forward ones carry an error proportional to rho);
  // a perturbation at node j only changes the path from node j-1 on, so the
  // earlier states are reused.
  Vec gradient(const Vec& w) const {
    const std::vector<Vec> S = T.rollout(w, 0, T.start());
    Vec grad(w.size());
    Vec wp = w;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const int j = static_cast<int>(i / T.k);
      const int from = std::max(j - 1, 0);
      const Vec& s = S[static_cast<std::size_t>(from)];
      const double h = 6.0554544523933395e-6 * (1.0 + std::abs(w(i)));
      wp(i) = w(i) + h;
      const double hi = wp(i) - w(i);
      const double fp = value_at_end(T.rollout(wp, from, s).back());
      wp(i) = w(i) - h;
      const double lo = w(i) - wp(i);
      const double fm = value_at_end(T.rollout(wp, from, s).back());
      grad(i) = (fp - fm) / (hi + lo);
      wp(i) = w(i);
    }
    return grad;
  }
};

struct InnerResult {
  int iterations = 0;
  double grad_norm = 0.0;
  bool converged = false;
};

InnerResult minimize(const Augmented& A, Vec& w, const TranscriptionConfig& cfg) {
  InnerResult res;
  // Node gradients scale with the spacing; measure them per unit time.
  const double scale = A.T.N / (A.T.b - A.T.a);
  double f = A.value(w);
  Vec g = A.gradient(w);
  const Eigen::Index n = w.size();
  Mat Hinv = Mat::Identity(n, n);
  bool fresh = true;
  double alpha_gd = 1.0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    res.grad_norm = n ? scale * g.lpNorm<Eigen::Infinity>() : 0.0;
    if (res.grad_norm <= cfg.tol) {
      res.converged = true;
      return res;
    }
    Vec d = cfg.optimizer == Optimizer::QuasiNewton ? Vec(-Hinv * g) : Vec(-g);
    double slope = g.dot(d);
    if (slope >= 0.0) {
      Hinv.setIdentity();
      fresh = true;
      d = -g;
      slope = -g.squaredNorm();
    }
    double alpha = cfg.optimizer == Optimizer::QuasiNewton ? 1.0 : std::min(1.0, 2.0 * alpha_gd);
    double fn = 0.0;
    Vec wn;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      wn = w + alpha * d;
      fn = A.value(wn);
      if (std::isfinite(fn) && fn <= f + 1e-4 * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    ++res.iterations;
    if (!accepted) {
      if (!fresh && cfg.optimizer == Optimizer::QuasiNewton) {
        Hinv.setIdentity();
        fresh = true;
        continue;
      }
      break;  // stalled; the caller reports the gradient norm
    }
    alpha_gd = alpha;
    const Vec gn = A.gradient(wn);
    const Vec s = wn - w, y = gn - g;
    const double sy = s.dot(y);
    if (cfg.optimizer == Optimizer::QuasiNewton && sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) Hinv *= sy / y.squaredNorm();
      const double r = 1.0 / sy;
      const Mat I = Mat::Identity(n, n);
      Hinv = (I - r * s * y.transpose()) * Hinv * (I - r * y * s.transpose()) + r * s * s.transpose();
      fresh = false;
    }
    w = wn;
    f = fn;
    g = gn;
  }
  res.grad_norm = n ? scale * g.lpNorm<Eigen::Infinity>() : 0.0;
  res.converged = res.grad_norm <= cfg.tol;
  return res;
}

TranscriptionResult run(const Transcription& T, const std::string& running_name, const std::vector<std::string>& states,
                        const std::vector<std::string>& control_names, const TranscriptionConfig& cfg) {
  Vec w(static_cast<Eigen::Index>(T.N + 1) * T.k);
  const Vec u0 = cfg.u_guess.size() ? cfg.u_guess : Vec::Zero(T.k);
  if (u0.size() != T.k) throw InputError("control guess does not match the controls");
  for (int j = 0; j <= T.N; ++j) w.segment(static_cast<Eigen::Index>(j) * T.k, T.k) = u0;

  Augmented A{T, Vec::Zero(T.m), cfg.penalty};
  TranscriptionResult out;
  double prev = std::numeric_limits<double>::infinity();
  InnerResult inner;
  for (int outer = 0; outer < cfg.outer_iters; ++outer) {
    inner = minimize(A, w, cfg);
    out.iterations += inner.iterations;
    const Vec end = T.rollout(w, 0, T.start()).back();
    const Vec g = end.head(T.m) - T.x_end;
    const double viol = g.lpNorm<Eigen::Infinity>();
    if (viol <= cfg.constraint_tol && inner.converged) break;
    A.lambda += A.rho * g;
    if (viol > cfg.constraint_tol && viol > 0.25 * prev) A.rho = std::min(10.0 * A.rho, 1e10);
    prev = viol;
  }

  const std::vector<Vec> S = T.rollout(w, 0, T.start());
  Trajectory& tr = out.trajectory;
  tr.chart = states;
  tr.chart.push_back(running_name);
  tr.chart.insert(tr.chart.end(), control_names.begin(), control_names.end());
  for (int j = 0; j <= T.N; ++j) {
    Vec x(T.m + 1 + T.k);
    x << S[static_cast<std::size_t>(j)], T.controls(w, j);
    tr.times.push_back(T.node(j));
    tr.samples.push_back(x);
  }
  out.objective = S.back()(T.m);
  out.terminal_violation = (S.back().head(T.m) - T.x_end).lpNorm<Eigen::Infinity>();
  out.gradient_norm = inner.grad_norm;
  out.converged = inner.converged && out.terminal_violation <= cfg.constraint_tol;
  if (!out.converged) {
    out.message = "optimizer stalled: gradient norm " + std::to_string(out.gradient_norm) + ", terminal violation " +
                  std::to_string(out.terminal_violation);
  }
  return out;
}

std::string unused_name(std::string base, const std::set<std::string>& taken) {
  while (taken.count(base)) base += "_";
  return base;
}

}  // namespace

void TranscriptionConfig::validate() const {
  if (N < 4) throw InputError("transcription needs N >= 4");
  if (max_iters < 1 || outer_iters < 1) throw InputError("iteration limits must be positive");
  if (!(tol > 0.0) || !(constraint_tol > 0.0)) throw InputError("tolerances must be positive");
  if (!(penalty > 0.0)) throw InputError("penalty must be positive");
  if (substeps < 1) throw InputError("substeps must be at least 1");
}

TranscriptionResult transcribe_classical(const OcpProblem& problem, const TranscriptionConfig& cfg) {
  problem.validate();
  cfg.validate();
  std::set<std::string> taken(problem.states.begin(), problem.states.end());
  taken.insert(problem.controls.begin(), problem.controls.end());
  const std::string running = unused_name("cost", taken);
  Transcription T;
  T.m = static_cast<int>(problem.states.size());
  T.k = static_cast<int>(problem.controls.size());
  T.N = cfg.N;
  T.substeps = cfg.substeps;
  T.chart = problem.states;
  T.chart.push_back(running);
  T.chart.insert(T.chart.end(), problem.controls.begin(), problem.controls.end());
  for (const auto& e : problem.dynamics) T.X.emplace_back(e, T.chart);
  T.F = CompiledExpr(problem.cost, T.chart);
  T.x_start = problem.x_start;
  T.x_end = problem.x_end;
  T.a = problem.a;
  T.b = problem.b;
  T.sign = problem.sense == Sense::Minimize ? 1.0 : -1.0;
  return run(T, running, problem.states, problem.controls, cfg);
}

TranscriptionResult transcribe_herglotz(const HerglotzOcpProblem& problem, const TranscriptionConfig& cfg) {
  problem.validate();
  cfg.validate();
  Transcription T;
  T.m = static_cast<int>(problem.states.size());
  T.k = static_cast<int>(problem.controls.size());
  T.N = cfg.N;
  T.substeps = cfg.substeps;
  T.chart = problem.states;
  T.chart.push_back(problem.z_name);
  T.chart.insert(T.chart.end(), problem.controls.begin(), problem.controls.end());
  for (const auto& e : problem.dynamics) T.X.emplace_back(e, T.chart);
  T.F = CompiledExpr(problem.cost, T.chart);
  T.x_start = problem.x_start;
  T.x_end = problem.x_end;
  T.c_start = problem.z_start;
  T.a = problem.a;
  T.b = problem.b;
  T.sign = problem.sense == Sense::Minimize ? 1.0 : -1.0;
  return run(T, problem.z_name, problem.states, problem.controls, cfg);
}

double interior_gap(const TranscriptionResult& oracle, const Trajectory& reference,
                    const std::vector<std::string>& names) {
  const Trajectory& tr = oracle.trajectory;
  double gap = 0.0;
  for (std::size_t i = 1; i + 1 < tr.size(); ++i) {
    const Vec ref = reference.at(tr.times[i]);
    for (const auto& n : names) {
      gap = std::max(gap, std::abs(tr.samples[i](tr.index(n)) - ref(reference.index(n))));
    }
  }
  return gap;
}

}  // namespace cpmp
