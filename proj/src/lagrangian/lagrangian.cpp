#include "cpmp/lagrangian.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "cpmp/error.hpp"
#include "cpmp/geometry.hpp"

namespace cpmp {
namespace {

std::vector<int> iota(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
  return v;
}

void check_size(const HerglotzLagrangian& lag, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(lag.dim())) {
    throw InputError("Lagrangian point has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(lag.dim()));
  }
}

// Linear interpolation of (q, v) between path samples.
struct LinearPath {
  const Trajectory& path;
  std::vector<int> cols;

  Vec at(double t) const {
    const auto& ts = path.times;
    std::size_t i = 0;
    if (t >= ts.back()) {
      i = ts.size() - 2;
    } else if (t > ts.front()) {
      i = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin()) - 1;
    }
    const double s = std::clamp((t - ts[i]) / (ts[i + 1] - ts[i]), 0.0, 1.0);
    Vec out(static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      out(static_cast<Eigen::Index>(k)) = (1 - s) * path.samples[i](cols[k]) + s * path.samples[i + 1](cols[k]);
    }
    return out;
  }
};

}  // namespace

HerglotzLagrangian::HerglotzLagrangian(std::vector<std::string> q, std::vector<std::string> v, std::string z, Expr L)
    : n_(static_cast<int>(q.size())), L_(std::move(L)) {
  if (q.size() != v.size()) throw InputError("Lagrangian chart needs as many velocities as positions");
  if (q.empty()) throw InputError("Lagrangian needs at least one position");
  chart_ = q;
  chart_.insert(chart_.end(), v.begin(), v.end());
  chart_.push_back(std::move(z));
  std::set<std::string> seen(chart_.begin(), chart_.end());
  if (seen.size() != chart_.size()) throw InputError("Lagrangian chart repeats a name");
  compiled_ = CompiledExpr(L_, chart_);
}

HerglotzLagrangian HerglotzLagrangian::standard(int n, Expr L) {
  std::vector<std::string> q, v;
  for (int i = 1; i <= n; ++i) {
    q.push_back(n == 1 ? "q" : "q" + std::to_string(i));
    v.push_back(n == 1 ? "v" : "v" + std::to_string(i));
  }
  return HerglotzLagrangian(q, v, "z", std::move(L));
}

std::vector<std::string> HerglotzLagrangian::positions() const {
  return {chart_.begin(), chart_.begin() + n_};
}

std::vector<std::string> HerglotzLagrangian::velocities() const {
  return {chart_.begin() + n_, chart_.begin() + 2 * n_};
}

Mat velocity_hessian(const HerglotzLagrangian& lag, std::span<const double> x) {
  check_size(lag, x);
  std::vector<int> wrt;
  for (int i = 0; i < lag.n(); ++i) wrt.push_back(lag.n() + i);
  return lag.compiled().jet(x, wrt, 2).hess;
}

Vec herglotz_rhs(const HerglotzLagrangian& lag, std::span<const double> x) {
  check_size(lag, x);
  const int n = lag.n(), iz = 2 * n;
  const JetValue j = lag.compiled().jet(x, iota(lag.dim()), 2);
  const Mat W = j.hess.block(n, n, n, n);
  if (condition_number(W) > 1e12) {
    throw SingularError("Lagrangian is not regular: the velocity Hessian W = d2L/dv dv is singular");
  }
  const double Lz = j.grad(iz);
  Vec rhs(n);
  for (int i = 0; i < n; ++i) {
    double r = j.grad(i) + Lz * j.grad(n + i) - j.hess(n + i, iz) * j.value;
    for (int k = 0; k < n; ++k) r -= j.hess(n + i, k) * x[static_cast<std::size_t>(n + k)];
    rhs(i) = r;
  }
  Vec out(lag.dim());
  for (int i = 0; i < n; ++i) out(i) = x[static_cast<std::size_t>(n + i)];
  out.segment(n, n) = W.partialPivLu().solve(rhs);
  out(iz) = j.value;
  return out;
}

OdeRhs herglotz_flow(const HerglotzLagrangian& lag) {
  return [lag](double, const Vec& y) { return herglotz_rhs(lag, as_span(y)); };
}

Vec legendre_momenta(const HerglotzLagrangian& lag, std::span<const double> x) {
  check_size(lag, x);
  std::vector<int> wrt;
  for (int i = 0; i < lag.n(); ++i) wrt.push_back(lag.n() + i);
  return lag.compiled().jet(x, wrt, 1).grad;
}

double herglotz_residual(const HerglotzLagrangian& lag, const Trajectory& traj) {
  const std::size_t m = traj.size();
  if (m < 5) throw InputError("residual needs at least five samples");
  const double h = traj.times[1] - traj.times[0];
  for (std::size_t i = 1; i < m; ++i) {
    if (std::abs(traj.times[i] - traj.times[i - 1] - h) > 1e-9 * std::max(1.0, std::abs(h))) {
      throw InputError("residual needs uniformly spaced samples");
    }
  }
  std::vector<int> cols;
  for (const auto& name : lag.chart()) cols.push_back(traj.index(name));
  const int n = lag.n();
  std::vector<Vec> pts(m);
  std::vector<Vec> momenta(m);
  for (std::size_t i = 0; i < m; ++i) {
    Vec x(lag.dim());
    for (int k = 0; k < lag.dim(); ++k) x(k) = traj.samples[i](cols[static_cast<std::size_t>(k)]);
    pts[i] = x;
    momenta[i] = legendre_momenta(lag, as_span(x));
  }
  double worst = 0.0;
  for (std::size_t i = 2; i + 2 < m; ++i) {
    const Vec dpdt = (momenta[i - 2] - 8.0 * momenta[i - 1] + 8.0 * momenta[i + 1] - momenta[i + 2]) / (12.0 * h);
    const JetValue j = lag.compiled().jet(as_span(pts[i]), iota(lag.dim()), 1);
    for (int k = 0; k < n; ++k) {
      const double r = dpdt(k) - j.grad(k) - j.grad(2 * n) * j.grad(n + k);
      worst = std::max(worst, std::abs(r));
    }
  }
  return worst;
}

double herglotz_action(const HerglotzLagrangian& lag, const Trajectory& path, double z0) {
  if (path.size() < 2) throw InputError("action needs a path with at least two samples");
  double hmin = path.times.back() - path.times.front();
  for (std::size_t i = 1; i < path.size(); ++i) hmin = std::min(hmin, path.times[i] - path.times[i - 1]);
  return herglotz_action(lag, path, z0, IntegratorConfig::rk4(hmin));
}

double herglotz_action(const HerglotzLagrangian& lag, const Trajectory& path, double z0, const IntegratorConfig& cfg) {
  if (path.size() < 2) throw InputError("action needs a path with at least two samples");
  LinearPath lp{path, {}};
  for (const auto& name : lag.positions()) lp.cols.push_back(path.index(name));
  for (const auto& name : lag.velocities()) lp.cols.push_back(path.index(name));
  const int d = lag.dim();
  const OdeRhs f = [&](double t, const Vec& z) {
    Vec x(d);
    x << lp.at(t), z(0);
    Vec out(1);
    out(0) = lag.compiled().value(as_span(x));
    return out;
  };
  Vec z(1);
  z(0) = z0;
  return integrate_to(f, z, path.times.front(), path.times.back(), cfg)(0);
}

}  // namespace cpmp
