#ifndef EVOMEASURE_DYNAMICS_HPP
#define EVOMEASURE_DYNAMICS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evomeasure/errors.hpp"
#include "evomeasure/fitness.hpp"
#include "evomeasure/kernel.hpp"
#include "evomeasure/measure.hpp"

namespace evomeasure {

/// Solver output: a strictly increasing time grid with one state per node.
struct Trajectory {
  std::vector<double> times;
  std::vector<MeasureVec> states;
  std::vector<double> masses;
  std::string solver;

  // Step metadata.
  double dt = 0.0;
  /// Weights clipped from [-1e-8 tv, 0) to 0 during RK4 steps.
  std::size_t clipped = 0;
  /// Most negative pre-clip weight seen, relative to max(1, tv) (<= 0).
  double worst_negative = 0.0;
  /// Picard windows: node index where each window starts, its constants,
  /// iteration count and successive-residual ratios.
  std::vector<std::size_t> window_starts;
  std::vector<TruncationConstants> window_constants;
  std::vector<std::size_t> window_iterations;
  std::vector<std::vector<double>> contraction_ratios;

  std::size_t size() const noexcept { return times.size(); }
  const MeasureVec& final_state() const { return states.back(); }

  void push(double t, MeasureVec m) {
    if (!times.empty() && !(t > times.back())) throw UsageError("Trajectory: times must be strictly increasing");
    masses.push_back(total_mass(m));
    times.push_back(t);
    states.push_back(std::move(m));
  }
};

namespace detail {

inline void require_same_space(const MeasureVec& m, const MutationKernel& k, const FitnessPair& fp) {
  if (!m.space()->same_as(*k.space()) || !m.space()->same_as(*fp.space()))
    throw UsageError("measure, kernel and fitness must share one strategy space");
}

/// out = F(w): births pushed through the kernel minus mortality.
/// `scratch` must have the same length as w.
inline void field(std::span<const double> w, const MutationKernel& k, const FitnessPair& fp,
                  std::span<double> out, std::span<double> scratch) {
  const std::size_t n = w.size();
  double X = 0.0;
  for (double x : w) X += x;
  for (std::size_t j = 0; j < n; ++j) scratch[j] = fp.f1(X, j) * w[j];
  k.push_forward(scratch, out);
  if (fp.average_fitness_mortality()) {
    const double fbar = fp.average_birth(w, X);
    for (std::size_t i = 0; i < n; ++i) out[i] -= fbar * w[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] -= fp.f2(X, i) * w[i];
  }
}

}  // namespace detail

/// F(mu, gamma)(E) = int f1(mu(Q), q^) gamma(q^)(E) dmu(q^) - int_E f2(mu(Q), q) dmu(q).
inline MeasureVec vector_field(const MeasureVec& m, const MutationKernel& k, const FitnessPair& fp) {
  detail::require_same_space(m, k, fp);
  std::vector<double> out(m.size()), scratch(m.size());
  detail::field(m.weights(), k, fp, out, scratch);
  return {m.space(), std::move(out)};
}

/// Classical RK4 on the weight vector with N = ceil(T/dt) uniform steps of
/// length T/N. Accepted states have weights in [-1e-8 tv, 0) clipped to 0;
/// anything more negative aborts as a step-size failure.
inline Trajectory rk4_integrate(const MeasureVec& u, const MutationKernel& k, const FitnessPair& fp, double T,
                                double dt) {
  detail::require_same_space(u, k, fp);
  if (!(dt > 0.0)) throw UsageError("rk4_integrate: dt must be positive");
  if (!(T >= 0.0)) throw UsageError("rk4_integrate: T must be nonnegative");
  if (!is_nonnegative(u)) throw UsageError("rk4_integrate: initial measure must be nonnegative");

  Trajectory traj;
  traj.solver = "rk4";
  traj.push(0.0, u);
  if (T == 0.0) return traj;
  const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(T / dt - 1e-9)));
  const double h = T / static_cast<double>(steps);
  traj.dt = h;

  const std::size_t n = u.size();
  std::vector<double> w(u.weights().begin(), u.weights().end());
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n), scratch(n);
  for (std::size_t s = 1; s <= steps; ++s) {
    detail::field(w, k, fp, k1, scratch);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = w[i] + 0.5 * h * k1[i];
    detail::field(tmp, k, fp, k2, scratch);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = w[i] + 0.5 * h * k2[i];
    detail::field(tmp, k, fp, k3, scratch);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = w[i] + h * k3[i];
    detail::field(tmp, k, fp, k4, scratch);

    double tv = 0.0, lowest = 0.0;
    std::size_t lowest_at = 0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      if (!std::isfinite(w[i]))
        throw NumericError("rk4_integrate: non-finite weight at step " + std::to_string(s) + " (t=" +
                           std::to_string(static_cast<double>(s) * h) + ")");
      tv += std::abs(w[i]);
      if (w[i] < lowest) {
        lowest = w[i];
        lowest_at = i;
      }
    }
    if (lowest < 0.0) {
      traj.worst_negative = std::min(traj.worst_negative, lowest / std::max(1.0, tv));
      if (lowest < -1e-8 * tv)
        throw NumericError("rk4_integrate: positivity lost at step " + std::to_string(s) + " (t=" +
                           std::to_string(static_cast<double>(s) * h) + "), weight " +
                           std::to_string(lowest) + " at point " + std::to_string(lowest_at) +
                           "; step size too large");
      for (double& x : w) {
        if (x < 0.0) {
          x = 0.0;
          ++traj.clipped;
        }
      }
    }
    const double t = s == steps ? T : static_cast<double>(s) * h;
    traj.push(t, MeasureVec(u.space(), w));
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Discounted kernel and the Picard operator

/// Piecewise-linear total-mass path tau -> alpha(tau)(Q) on a time grid.
struct MassPath {
  std::span<const double> times;
  std::span<const double> masses;

  explicit MassPath(const Trajectory& t) : times(t.times), masses(t.masses) {}
  MassPath(std::span<const double> ts, std::span<const double> ms) : times(ts), masses(ms) {
    if (ts.size() != ms.size() || ts.empty()) throw UsageError("MassPath: times/masses size mismatch");
  }

  double at(double t) const {
    if (t <= times.front()) return masses.front();
    if (t >= times.back()) return masses.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t hi = static_cast<std::size_t>(it - times.begin());
    const std::size_t lo = hi - 1;
    const double w = (t - times[lo]) / (times[hi] - times[lo]);
    return (1.0 - w) * masses[lo] + w * masses[hi];
  }
};

/// exp(-int_s^t f2(alpha(tau)(Q), q_i) dtau), composite trapezoid on the path's
/// grid restricted to [s, t]; partial end cells use linearly interpolated mass.
inline double survival_factor(double s, double t, std::size_t i, const FitnessPair& fp, const MassPath& path) {
  if (s > t) throw UsageError("survival_factor: s > t");
  const double slack = 1e-12 * std::max(1.0, std::abs(path.times.back()));
  if (s < path.times.front() - slack || t > path.times.back() + slack)
    throw UsageError("survival_factor: [s, t] outside the mass path's range");
  if (s == t) return 1.0;

  double integral = 0.0;
  double prev_t = s;
  double prev_f = fp.f2(path.at(s), i);
  auto it = std::upper_bound(path.times.begin(), path.times.end(), s);
  for (; it != path.times.end() && *it < t; ++it) {
    const auto idx = static_cast<std::size_t>(it - path.times.begin());
    const double f = fp.f2(path.masses[idx], i);
    integral += 0.5 * (*it - prev_t) * (prev_f + f);
    prev_t = *it;
    prev_f = f;
  }
  integral += 0.5 * (t - prev_t) * (prev_f + fp.f2(path.at(t), i));
  return std::exp(-integral);
}

/// Offspring of q^_j born at s that are still alive at t:
/// weights row_j[i] * survival_factor(s, t, q_i).
inline MeasureVec gamma_bar(double s, double t, std::size_t j, const MutationKernel& k, const FitnessPair& fp,
                            const MassPath& path) {
  auto row = k.apply(j);
  auto w = row.weights_mut();
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] != 0.0) w[i] *= survival_factor(s, t, i, fp, path);
  return row;
}

/// [S alpha](t_k) = u decayed by exp(-int_0^t f2) plus the trapezoid in s of
/// sum_j f1(alpha(s)(Q), q^_j) gamma_bar_{s,t_k}(q^_j) alpha(s)_j.
///
/// Evaluated in O(N n) with the exact cell recurrence
///   acc(k+1) = e^{-dC_k} acc(k) + h_k/2 (B_k e^{-dC_k} + B_{k+1}),
/// where B_m is the birth measure at t_m and dC_k the trapezoid of f2 over
/// [t_k, t_{k+1}]; this equals the composite trapezoid term by term.
inline Trajectory picard_operator(const Trajectory& alpha, const MeasureVec& u, const MutationKernel& k,
                                  const FitnessPair& fp) {
  if (alpha.size() == 0) throw UsageError("picard_operator: empty window grid");
  detail::require_same_space(u, k, fp);
  if (!alpha.states.front().shares_space(u)) throw UsageError("picard_operator: window grid mismatch");
  if (fp.average_fitness_mortality())
    throw UsageError("picard_operator: average-fitness mortality is outside the contraction theory");

  const std::size_t n = u.size();
  const std::size_t N = alpha.size();
  Trajectory out;
  out.solver = "picard";
  out.dt = alpha.dt;
  out.push(alpha.times[0], u);

  std::vector<double> births_prev(n), births_next(n), scratch(n);
  std::vector<double> f2_prev(n), f2_next(n);
  std::vector<double> cum(n, 0.0), acc(n, 0.0), w(n);

  auto births_at = [&](std::size_t m, std::vector<double>& dst) {
    const auto& a = alpha.states[m];
    const double X = alpha.masses[m];
    for (std::size_t j = 0; j < n; ++j) scratch[j] = fp.f1(X, j) * a[j];
    k.push_forward(scratch, dst);
  };
  auto mortality_at = [&](std::size_t m, std::vector<double>& dst) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = fp.f2(alpha.masses[m], i);
  };

  births_at(0, births_prev);
  mortality_at(0, f2_prev);
  for (std::size_t m = 0; m + 1 < N; ++m) {
    const double h = alpha.times[m + 1] - alpha.times[m];
    births_at(m + 1, births_next);
    mortality_at(m + 1, f2_next);
    for (std::size_t i = 0; i < n; ++i) {
      const double dC = 0.5 * h * (f2_prev[i] + f2_next[i]);
      const double decay = std::exp(-dC);
      cum[i] += dC;
      acc[i] = decay * acc[i] + 0.5 * h * (births_prev[i] * decay + births_next[i]);
      w[i] = u[i] * std::exp(-cum[i]) + acc[i];
    }
    out.push(alpha.times[m + 1], MeasureVec(u.space(), w));
    std::swap(births_prev, births_next);
    std::swap(f2_prev, f2_next);
  }
  return out;
}

/// sup over common nodes of tv_norm(a(t) - b(t)). Nodes are matched by time
/// (within 1e-9 relative); unmatched nodes are skipped.
inline double sup_tv_distance(const Trajectory& a, const Trajectory& b) {
  double sup = 0.0;
  std::size_t j = 0;
  const double scale = 1e-9 * std::max({1.0, a.times.back(), b.times.back()});
  for (std::size_t i = 0; i < a.size(); ++i) {
    while (j < b.size() && b.times[j] < a.times[i] - scale) ++j;
    if (j == b.size()) break;
    if (std::abs(b.times[j] - a.times[i]) <= scale)
      sup = std::max(sup, tv_norm(add_scaled(a.states[i], -1.0, b.states[j])));
  }
  return sup;
}

struct PicardControls {
  double tol = 1e-10;
  std::size_t max_iter = 100;
};

/// Iterates alpha <- S alpha from alpha = u on the given window grid until
/// the sup-TV change drops below tol. Ratios of successive changes are
/// recorded in contraction_ratios[0].
inline Trajectory picard_solve(const MeasureVec& u, const MutationKernel& k, const FitnessPair& fp,
                               const std::vector<double>& times, PicardControls ctl = {}) {
  if (times.empty() || times.front() != 0.0) throw UsageError("picard_solve: window grid must start at 0");
  if (!(ctl.tol > 0.0)) throw UsageError("picard_solve: tol must be positive");
  Trajectory alpha;
  alpha.solver = "picard";
  alpha.dt = times.size() > 1 ? times[1] - times[0] : 0.0;
  for (double t : times) alpha.push(t, u);

  std::vector<double> ratios;
  double prev = 0.0;
  std::size_t nonshrinking = 0;
  const double floor = 1e-13 * std::max(1.0, tv_norm(u));
  for (std::size_t it = 1; it <= ctl.max_iter; ++it) {
    Trajectory next = picard_operator(alpha, u, k, fp);
    double r = 0.0;
    for (std::size_t m = 0; m < next.size(); ++m)
      r = std::max(r, tv_norm(add_scaled(next.states[m], -1.0, alpha.states[m])));
    if (!std::isfinite(r)) throw NumericError("picard_solve: non-finite residual at iteration " + std::to_string(it));
    if (it > 1 && prev > 0.0) {
      ratios.push_back(r / prev);
      nonshrinking = (r / prev >= 1.0 && r > floor) ? nonshrinking + 1 : 0;
      if (nonshrinking >= 3)
        throw NumericError("picard_solve: residual not contracting (ratio " + std::to_string(r / prev) +
                           "); window constants are likely wrong");
    }
    prev = r;
    next.dt = alpha.dt;
    alpha = std::move(next);
    if (r < ctl.tol) {
      alpha.window_starts = {0};
      alpha.window_iterations = {it};
      alpha.contraction_ratios = {std::move(ratios)};
      return alpha;
    }
  }
  throw NumericError("picard_solve: max_iter " + std::to_string(ctl.max_iter) + " exceeded, last residual " +
                     std::to_string(prev));
}

/// Uniform window grid {0, b/steps, ..., b}.
inline std::vector<double> uniform_grid(double length, std::size_t steps) {
  if (steps == 0 || !(length > 0.0)) throw UsageError("uniform_grid: need positive length and steps");
  std::vector<double> t(steps + 1);
  for (std::size_t m = 0; m <= steps; ++m) t[m] = length * static_cast<double>(m) / static_cast<double>(steps);
  t.back() = length;
  return t;
}

// ---------------------------------------------------------------------------
// Global flow

enum class Solver { Rk4, Picard };

// Picard stops when windows shrink below this fraction of T or exceed the
// count; both signal a runaway mass.
inline constexpr double kMinWindowFraction = 1e-7;
inline constexpr std::size_t kMaxWindows = 200000;

struct FlowControls {
  Solver solver = Solver::Rk4;
  /// Default T/2000 when unset.
  std::optional<double> dt;
  PicardControls picard;
  /// TV ball radius; default max(1, current window mass).
  std::optional<double> ball_radius;
  std::size_t lattice = 101;
};

/// phi(T; u, gamma). RK4 runs one pass (the pair is truncated far above the
/// Gronwall mass bound, which leaves it unchanged along the run). Picard
/// solves successive windows of length <= b, recomputing the truncation
/// constants from each window's initial mass, and stitches them.
inline Trajectory flow(const MeasureVec& u, const MutationKernel& k, const FitnessPair& fp, double T,
                       const FlowControls& ctl = {}) {
  if (!(T >= 0.0)) throw UsageError("flow: T must be nonnegative");
  const double dt = ctl.dt.value_or(T > 0.0 ? T / 2000.0 : 1.0);
  if (!(dt > 0.0)) throw UsageError("flow: dt must be positive");

  if (ctl.solver == Solver::Rk4) {
    double M = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) M = std::max(M, fp.f1(0.0, i));
    const double K = (total_mass(u) + 1.0) * std::exp(std::min(M * T, 600.0)) * 1.01;
    return rk4_integrate(u, k, fp.truncate(K), T, dt);
  }

  if (fp.average_fitness_mortality())
    throw UsageError("flow: the Picard solver does not accept average-fitness mortality");
  detail::require_same_space(u, k, fp);
  Trajectory traj;
  traj.solver = "picard";
  traj.push(0.0, u);
  if (T == 0.0) return traj;

  const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(T / dt - 1e-9)));
  const double h = T / static_cast<double>(steps);
  traj.dt = h;
  std::size_t node = 0;  // global grid index of the current window start
  // Once a window is shorter than one grid step, the rest of the run uses
  // single-step windows of length b.
  bool on_grid = true;
  double t0 = 0.0;
  while (t0 < T) {
    const MeasureVec& start = traj.states.back();
    const double mass = total_mass(start);
    const double a = ctl.ball_radius.value_or(std::max(1.0, mass));
    TruncationConstants c = estimate_constants(fp, mass, a, std::nullopt, ctl.lattice);
    if (!std::isfinite(mass) || !(c.b > kMinWindowFraction * T) || traj.window_starts.size() >= kMaxWindows)
      throw NumericError("flow: Picard window length collapsed to " + std::to_string(c.b) + " at t = " +
                         std::to_string(t0) + " (mass " + std::to_string(mass) + ")");

    // Windows follow the global grid when b spans at least one step.
    std::vector<double> local;
    std::vector<double> global;
    const auto span = static_cast<std::size_t>(std::floor(c.b / h + 1e-9));
    if (span == 0) on_grid = false;
    if (on_grid) {
      const std::size_t end = std::min(steps, node + span);
      for (std::size_t m = node; m <= end; ++m) {
        global.push_back(m == steps ? T : static_cast<double>(m) * h);
        local.push_back(global.back() - t0);
      }
      local.front() = 0.0;
      node = end;
    } else {
      const double len = std::min(c.b, T - t0);
      local = {0.0, len};
      global = {t0, T - t0 - len <= 1e-12 * T ? T : t0 + len};
    }

    Trajectory window = picard_solve(start, k, fp.truncate(c.K_tilde), local, ctl.picard);
    traj.window_starts.push_back(traj.size() - 1);
    traj.window_constants.push_back(c);
    traj.window_iterations.push_back(window.window_iterations.front());
    traj.contraction_ratios.push_back(window.contraction_ratios.front());
    for (std::size_t m = 1; m < window.size(); ++m) traj.push(global[m], window.states[m]);
    t0 = global.back();
    if (T - t0 <= 1e-12 * T) break;
  }
  return traj;
}

/// Largest mass(t_k) / (mass(0) e^{M t_k}) along the trajectory.
inline double gronwall_ratio(const Trajectory& traj, double M_f1) {
  double worst = 0.0;
  const double m0 = traj.masses.front();
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double bound = m0 * std::exp(M_f1 * traj.times[k]);
    if (bound > 0.0) worst = std::max(worst, traj.masses[k] / bound);
    else if (traj.masses[k] > 0.0) worst = std::numeric_limits<double>::infinity();
  }
  return worst;
}

/// max_q f1(0, q).
inline double max_birth_at_zero(const FitnessPair& fp) {
  double M = 0.0;
  for (std::size_t i = 0; i < fp.space()->size(); ++i) M = std::max(M, fp.f1(0.0, i));
  return M;
}

/// Central difference (x_{k+1} - x_{k-1}) / (t_{k+1} - t_{k-1}) at an
/// interior node (non-uniform grids use the three-point formula).
inline MeasureVec central_difference(const Trajectory& traj, std::size_t k) {
  if (k == 0 || k + 1 >= traj.size()) throw UsageError("central_difference: node must be interior");
  const double h0 = traj.times[k] - traj.times[k - 1];
  const double h1 = traj.times[k + 1] - traj.times[k];
  const std::size_t n = traj.states[k].size();
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double xm = traj.states[k - 1][i], x0 = traj.states[k][i], xp = traj.states[k + 1][i];
    d[i] = (-h1 / (h0 * (h0 + h1))) * xm + ((h1 - h0) / (h0 * h1)) * x0 + (h0 / (h1 * (h0 + h1))) * xp;
  }
  return {traj.states[k].space(), std::move(d)};
}

}  // namespace evomeasure

#endif  // EVOMEASURE_DYNAMICS_HPP
