#ifndef EVOMEASURE_REDUCTIONS_HPP
#define EVOMEASURE_REDUCTIONS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evomeasure/dynamics.hpp"
#include "evomeasure/errors.hpp"
#include "evomeasure/fitness.hpp"
#include "evomeasure/kernel.hpp"
#include "evomeasure/measure.hpp"

// Special cases of the measure model, each written directly on state vectors
// so it can serve as an independent oracle for the general solver.
namespace evomeasure::reductions {

using State = std::vector<double>;
using Rhs = std::function<State(const State&)>;

/// n classes with mutation matrix P[i][j] = gamma(q^_j)({q_i}) (columns are
/// sources) and rates evaluated on the atoms.
struct DiscreteSystem {
  std::size_t n = 0;
  std::vector<std::vector<double>> P;
  std::function<double(double X, std::size_t i)> f1;
  std::function<double(double X, std::size_t i)> f2;

  static DiscreteSystem from(const MutationKernel& k, const FitnessPair& fp) {
    DiscreteSystem sys;
    sys.n = k.size();
    sys.P.assign(sys.n, std::vector<double>(sys.n, 0.0));
    for (std::size_t i = 0; i < sys.n; ++i)
      for (std::size_t j = 0; j < sys.n; ++j) sys.P[i][j] = k.entry(j, i);
    sys.f1 = [fp](double X, std::size_t i) { return fp.f1(X, i); };
    sys.f2 = [fp](double X, std::size_t i) { return fp.f2(X, i); };
    return sys;
  }
};

/// x'_i = sum_j f1(X, q_j) P[i][j] x_j - f2(X, q_i) x_i with X = sum x.
inline State discrete_rhs(const State& x, const DiscreteSystem& sys) {
  if (x.size() != sys.n || sys.P.size() != sys.n) throw UsageError("discrete_rhs: dimension mismatch");
  double X = 0.0;
  for (double v : x) X += v;
  State dx(sys.n, 0.0);
  for (std::size_t i = 0; i < sys.n; ++i) {
    double birth = 0.0;
    for (std::size_t j = 0; j < sys.n; ++j) birth += sys.f1(X, j) * sys.P[i][j] * x[j];
    dx[i] = birth - sys.f2(X, i) * x[i];
  }
  return dx;
}

/// Replicator-mutator on the simplex: x'_i = sum_j x_j f_j Q_ij - phi x_i with
/// phi = sum_j f_j x_j. Q_ij is the share of class j's offspring landing in i.
inline State replicator_mutator_rhs(const State& x, const State& f, const std::vector<std::vector<double>>& Q) {
  const std::size_t n = x.size();
  double phi = 0.0;
  for (std::size_t j = 0; j < n; ++j) phi += f[j] * x[j];
  State dx(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x[j] * f[j] * Q[i][j];
    dx[i] = s - phi * x[i];
  }
  return dx;
}

/// Plain classical RK4 with N = ceil(T/dt) steps of length T/N (the same step
/// sequence rk4_integrate uses). Returns all N + 1 states.
inline std::vector<State> integrate_rk4(const Rhs& rhs, State x, double T, double dt) {
  const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(T / dt - 1e-9)));
  const double h = T / static_cast<double>(steps);
  std::vector<State> out{x};
  const std::size_t n = x.size();
  State tmp(n);
  for (std::size_t s = 0; s < steps; ++s) {
    const State k1 = rhs(x);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    const State k2 = rhs(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    const State k3 = rhs(tmp);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
    const State k4 = rhs(tmp);
    for (std::size_t i = 0; i < n; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    out.push_back(x);
  }
  return out;
}

/// P(t)(E) = mu(t)(E) / mu(t)(Q) at every node.
inline Trajectory normalized_trajectory(const Trajectory& traj) {
  Trajectory out;
  out.solver = traj.solver + "+normalized";
  out.dt = traj.dt;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double X = traj.masses[k];
    if (!(X > 0.0))
      throw NumericError("normalized_trajectory: vanishing mass at node " + std::to_string(k));
    out.push(traj.times[k], scaled(traj.states[k], 1.0 / X));
  }
  return out;
}

/// Right-hand side of the companion (normalized) dynamics, as a set function:
///   P'(E) = int [f1(X, q^) gamma(q^)(E) - (int f1 dP) P(E)] dP(q^)
///           - int_E [f2(X, q^) - int f2 dP] dP(q^).
inline State normalized_rhs(const State& P, double X, const MutationKernel& k, const FitnessPair& fp) {
  const std::size_t n = P.size();
  double f1bar = 0.0, f2bar = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    f1bar += fp.f1(X, j) * P[j];
    f2bar += fp.f2(X, j) * P[j];
  }
  State dP(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (fp.f1(X, j) * k.entry(j, i) - f1bar * P[i]) * P[j];
    dP[i] = s - (fp.f2(X, i) - f2bar) * P[i];
  }
  return dP;
}

/// Density-dependent replicator field: P'({q_i}) = (f(X, q_i) - fbar) P_i with
/// f = f1 - f2 and fbar = int f dP.
inline State replicator_rhs(const State& P, double X, const FitnessPair& fp) {
  const std::size_t n = P.size();
  State f(n);
  double fbar = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    f[i] = fp.f1(X, i) - fp.f2(X, i);
    fbar += f[i] * P[i];
  }
  State dP(n);
  for (std::size_t i = 0; i < n; ++i) dP[i] = (f[i] - fbar) * P[i];
  return dP;
}

struct ReductionReport {
  std::string name;
  double max_discrepancy = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::string note;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"case", name}, {"max_discrepancy", max_discrepancy}, {"tolerance", tolerance},
                        {"pass", pass}};
    if (!note.empty()) j["note"] = note;
    return j;
  }
};

/// Default tolerance for finite-difference checks on a grid with largest step h.
inline double fd_tolerance(double h) { return std::max(1e-10, 100.0 * h * h); }

namespace detail {

inline double tv(const State& a, const State& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline double max_step(const Trajectory& t) {
  double h = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) h = std::max(h, t.times[k] - t.times[k - 1]);
  return h;
}

template <class RhsAt>
ReductionReport fd_check(std::string name, const Trajectory& normalized, RhsAt&& rhs_at, double tolerance) {
  ReductionReport rep;
  rep.name = std::move(name);
  rep.tolerance = tolerance;
  for (std::size_t k = 1; k + 1 < normalized.size(); ++k) {
    const MeasureVec d = central_difference(normalized, k);
    const State fd(d.weights().begin(), d.weights().end());
    rep.max_discrepancy = std::max(rep.max_discrepancy, tv(fd, rhs_at(k)));
  }
  rep.pass = rep.max_discrepancy <= tolerance;
  return rep;
}

}  // namespace detail

/// Finite-difference check of a Dirac-kernel trajectory against the
/// density-dependent replicator equation.
inline ReductionReport replicator_check(const Trajectory& traj, const MutationKernel& k, const FitnessPair& fp,
                                        std::optional<double> tolerance = std::nullopt) {
  if (!k.is_dirac()) throw UsageError("replicator_check: defined only for the Dirac kernel");
  const Trajectory P = normalized_trajectory(traj);
  return detail::fd_check(
      "replicator", P,
      [&](std::size_t node) {
        const auto w = P.states[node].weights();
        return replicator_rhs(State(w.begin(), w.end()), traj.masses[node], fp);
      },
      tolerance.value_or(fd_tolerance(detail::max_step(traj))));
}

/// Finite-difference check of the normalized trajectory against the companion
/// dynamics (any kernel).
inline ReductionReport normalized_check(const Trajectory& traj, const MutationKernel& k, const FitnessPair& fp,
                                        std::optional<double> tolerance = std::nullopt) {
  const Trajectory P = normalized_trajectory(traj);
  return detail::fd_check(
      "normalized_companion", P,
      [&](std::size_t node) {
        const auto w = P.states[node].weights();
        return normalized_rhs(State(w.begin(), w.end()), traj.masses[node], k, fp);
      },
      tolerance.value_or(fd_tolerance(detail::max_step(traj))));
}

/// Finite-difference check of a mass-conserving (average-fitness mortality)
/// trajectory against the replicator-mutator field with fitness f1(X, q_j).
inline ReductionReport quasispecies_check(const Trajectory& traj, const MutationKernel& k, const FitnessPair& fp,
                                          std::optional<double> tolerance = std::nullopt) {
  const Trajectory P = normalized_trajectory(traj);
  const std::size_t n = k.size();
  std::vector<std::vector<double>> Q(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) Q[i][j] = k.entry(j, i);
  return detail::fd_check(
      "quasispecies", P,
      [&](std::size_t node) {
        const auto w = P.states[node].weights();
        State f(n);
        for (std::size_t j = 0; j < n; ++j) f[j] = fp.f1(traj.masses[node], j);
        return replicator_mutator_rhs(State(w.begin(), w.end()), f, Q);
      },
      tolerance.value_or(fd_tolerance(detail::max_step(traj))));
}

/// Measure-model RK4 on an atomic support vs. direct integration of the
/// discrete system, sup-TV over the shared step sequence.
inline ReductionReport discrete_check(const MeasureVec& u, const MutationKernel& k, const FitnessPair& fp, double T,
                                      double dt, double tolerance = 1e-10) {
  const Trajectory measure = rk4_integrate(u, k, fp, T, dt);
  const DiscreteSystem sys = DiscreteSystem::from(k, fp);
  const auto direct = integrate_rk4([&](const State& x) { return discrete_rhs(x, sys); },
                                    State(u.weights().begin(), u.weights().end()), T, dt);
  ReductionReport rep{"discrete", 0.0, tolerance, false, {}};
  for (std::size_t m = 0; m < measure.size(); ++m) {
    const auto w = measure.states[m].weights();
    rep.max_discrepancy = std::max(rep.max_discrepancy, detail::tv(State(w.begin(), w.end()), direct[m]));
  }
  rep.pass = rep.max_discrepancy <= tolerance;
  return rep;
}

/// Dirac-kernel RK4 vs. the decoupled per-point growth ODEs
/// x_i' = (f1(X, q_i) - f2(X, q_i)) x_i.
inline ReductionReport pure_selection_check(const MeasureVec& u, const FitnessPair& fp, double T, double dt,
                                            double tolerance = 1e-8) {
  const auto k = MutationKernel::dirac(u.space());
  const Trajectory measure = rk4_integrate(u, k, fp, T, dt);
  const auto direct = integrate_rk4(
      [&](const State& x) {
        double X = 0.0;
        for (double v : x) X += v;
        State dx(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) dx[i] = (fp.f1(X, i) - fp.f2(X, i)) * x[i];
        return dx;
      },
      State(u.weights().begin(), u.weights().end()), T, dt);
  ReductionReport rep{"pure_selection", 0.0, tolerance, false, {}};
  for (std::size_t m = 0; m < measure.size(); ++m) {
    const auto w = measure.states[m].weights();
    rep.max_discrepancy = std::max(rep.max_discrepancy, detail::tv(State(w.begin(), w.end()), direct[m]));
  }
  rep.pass = rep.max_discrepancy <= tolerance;
  return rep;
}

/// Density-dependent quasi-species run: mortality is the average birth rate,
/// so the mass is conserved and the normalized state follows the
/// replicator-mutator equation. Only the direct RK4 solver applies.
inline Trajectory quasispecies_run(const MeasureVec& u, const MutationKernel& k, const FitnessPair& f1_source, double T,
                                   double dt, Solver solver = Solver::Rk4) {
  if (solver == Solver::Picard)
    throw UsageError("quasispecies_run: the Picard solver does not cover average-fitness mortality");
  const double X0 = total_mass(u);
  if (!(X0 > 0.0)) throw UsageError("quasispecies_run: initial mass must be positive");
  const auto fp = f1_source.with_average_fitness_mortality();
  return normalized_trajectory(rk4_integrate(scaled(u, 1.0 / X0), k, fp, T, dt));
}

/// quasispecies_run vs. direct integration of the replicator-mutator equation
/// with fitness f_j = f1(1, q_j) (unit mass is conserved).
inline ReductionReport replicator_mutator_check(const MeasureVec& u, const MutationKernel& k, const FitnessPair& fp,
                                                double T, double dt, double tolerance = 1e-6) {
  const Trajectory qs = quasispecies_run(u, k, fp, T, dt);
  const std::size_t n = u.size();
  std::vector<std::vector<double>> Q(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) Q[i][j] = k.entry(j, i);
  const double X0 = total_mass(u);
  State x0(n);
  for (std::size_t i = 0; i < n; ++i) x0[i] = u[i] / X0;
  const auto direct = integrate_rk4(
      [&](const State& x) {
        double X = 0.0;
        for (double v : x) X += v;
        State f(n);
        for (std::size_t j = 0; j < n; ++j) f[j] = fp.f1(X, j);
        return replicator_mutator_rhs(x, f, Q);
      },
      x0, T, dt);
  ReductionReport rep{"replicator_mutator", 0.0, tolerance, false, {}};
  double drift = 0.0;
  for (std::size_t m = 0; m < qs.size(); ++m) {
    const auto w = qs.states[m].weights();
    rep.max_discrepancy = std::max(rep.max_discrepancy, detail::tv(State(w.begin(), w.end()), direct[m]));
    double s = 0.0;
    for (double v : direct[m]) s += v;
    drift = std::max(drift, std::abs(s - 1.0));
  }
  rep.note = "simplex drift " + std::to_string(drift);
  rep.pass = rep.max_discrepancy <= tolerance;
  return rep;
}

}  // namespace evomeasure::reductions

#endif  // EVOMEASURE_REDUCTIONS_HPP
