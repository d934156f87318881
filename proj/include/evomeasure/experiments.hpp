#ifndef EVOMEASURE_EXPERIMENTS_HPP
#define EVOMEASURE_EXPERIMENTS_HPP

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "evomeasure/config.hpp"
#include "evomeasure/dynamics.hpp"
#include "evomeasure/errors.hpp"
#include "evomeasure/fitness.hpp"
#include "evomeasure/flat_metric.hpp"
#include "evomeasure/kernel.hpp"
#include "evomeasure/measure.hpp"
#include "evomeasure/reductions.hpp"
#include "evomeasure/serialization.hpp"

namespace evomeasure::experiments {

namespace fs = std::filesystem;

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline fs::path prepare_out_dir(const std::string& dir) {
  if (dir.empty()) throw ConfigError("no output directory given (--out or \"out\")");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

/// Independent runs allowed at once: EVOMEASURE_THREADS if set, else the
/// hardware concurrency.
inline std::size_t thread_cap() {
  if (const char* env = std::getenv("EVOMEASURE_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs task(i) for i in [0, count) on at most `threads` workers. The first
/// exception is rethrown after all workers finish.
template <class Task>
void parallel_for(std::size_t count, std::size_t threads, Task&& task) {
  threads = std::max<std::size_t>(1, std::min(threads, count));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < count;) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

inline std::size_t default_stride(std::size_t nodes, std::size_t requested) {
  if (requested > 0) return requested;
  return std::max<std::size_t>(1, (nodes + 199) / 200);
}

inline std::string trajectory_csv(const Trajectory& traj) {
  std::string out = "t,index,weight\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const std::string t = format_double(traj.times[k]);
    const auto w = traj.states[k].weights();
    for (std::size_t i = 0; i < w.size(); ++i) out += t + "," + std::to_string(i) + "," + format_double(w[i]) + "\n";
  }
  return out;
}

/// `t,total_mass,bl_to_final`; bl is computed every `stride` nodes (and at
/// the last node), nan elsewhere.
inline std::string summary_csv(const Trajectory& traj, std::size_t stride) {
  std::string out = "t,total_mass,bl_to_final\n";
  const auto& last = traj.final_state();
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const bool sample = k % stride == 0 || k + 1 == traj.size();
    out += format_double(traj.times[k]) + "," + format_double(traj.masses[k]) + "," +
           (sample ? format_double(bl_distance(traj.states[k], last)) : std::string("nan")) + "\n";
  }
  return out;
}

inline json trajectory_metadata(const Trajectory& traj) {
  json windows = json::array();
  for (std::size_t w = 0; w < traj.window_constants.size(); ++w) {
    windows.push_back({{"start_node", traj.window_starts[w]},
                       {"start_time", traj.times[traj.window_starts[w]]},
                       {"constants", constants_to_json(traj.window_constants[w])},
                       {"kappa", traj.window_constants[w].kappa()},
                       {"iterations", traj.window_iterations[w]},
                       {"contraction_ratios", traj.contraction_ratios[w]}});
  }
  return {{"solver", traj.solver},
          {"nodes", traj.size()},
          {"dt", traj.dt},
          {"final_time", traj.times.back()},
          {"initial_mass", traj.masses.front()},
          {"final_mass", traj.masses.back()},
          {"clipped_weights", traj.clipped},
          {"worst_negative", traj.worst_negative},
          {"windows", std::move(windows)}};
}

/// Gronwall mass bound for the run: the truncation level used in checks.
inline double mass_bound(const Problem& p, double T) {
  return std::max(total_mass(p.u), 1e-300) * std::exp(std::min(max_birth_at_zero(p.fitness) * T, 600.0));
}

inline json assumptions_to_json(const AssumptionReport& r) {
  json v = json::array();
  for (const auto& x : r.violations)
    v.push_back({{"kind", x.kind},
                 {"rate", x.which == Rate::Birth ? "f1" : "f2"},
                 {"X", x.X},
                 {"point", x.point},
                 {"value", std::isfinite(x.value) ? json(x.value) : json()}});
  return {{"applicable", r.applicable}, {"a1_ok", r.a1_ok}, {"a2_ok", r.a2_ok},
          {"varpi", std::isfinite(r.varpi) ? json(r.varpi) : json()}, {"lattice_size", r.lattice_size},
          {"violations", std::move(v)}, {"pass", r.pass()}};
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateResult {
  Trajectory trajectory;
  json metadata;
  double wall_seconds = 0.0;
};

/// Runs the configured flow and writes trajectory.csv, summary.csv,
/// final_state.csv, metadata.json and timing.json into out_dir. Picard runs
/// also integrate RK4 on the same grid and record the sup-TV gap.
inline SimulateResult simulate(const RunConfig& cfg, const std::string& out_dir) {
  const auto dir = prepare_out_dir(out_dir);
  const auto start = std::chrono::steady_clock::now();
  const Problem& p = cfg.problem;
  SimulateResult res;
  res.trajectory = flow(p.u, p.kernel, p.fitness, cfg.T, cfg.flow_controls());
  const auto& traj = res.trajectory;

  json meta = {{"config", cfg.raw}, {"trajectory", trajectory_metadata(traj)}};
  meta["trajectory"]["gronwall_ratio"] = p.fitness.average_fitness_mortality()
                                             ? json()
                                             : json(gronwall_ratio(traj, max_birth_at_zero(p.fitness)));
  if (!p.fitness.average_fitness_mortality()) {
    const double m0 = total_mass(p.u);
    const double a = cfg.ball_radius.value_or(std::max(1.0, m0));
    meta["initial_constants"] = constants_to_json(estimate_constants(p.fitness, m0, a));
    meta["assumptions"] = assumptions_to_json(verify_assumptions(p.fitness, mass_bound(p, cfg.T)));
  }
  if (cfg.solver == Solver::Picard) {
    FlowControls rk = cfg.flow_controls();
    rk.solver = Solver::Rk4;
    const Trajectory ref = flow(p.u, p.kernel, p.fitness, cfg.T, rk);
    meta["cross_check"] = {{"against", "rk4"}, {"sup_tv", sup_tv_distance(traj, ref)}};
  }

  write_text(dir / "trajectory.csv", trajectory_csv(traj));
  write_text(dir / "summary.csv", summary_csv(traj, default_stride(traj.size(), cfg.bl_stride)));
  write_text(dir / "final_state.csv", measure_to_csv(traj.final_state()));
  write_json(dir / "metadata.json", meta);
  res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(dir / "timing.json", {{"wall_seconds", res.wall_seconds}});
  res.metadata = std::move(meta);
  return res;
}

// ---------------------------------------------------------------------------
// verify

struct Check {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double tolerance = 0.0;
  json witness;

  json to_json() const {
    return {{"name", name}, {"pass", pass}, {"value", std::isfinite(value) ? json(value) : json()},
            {"tolerance", tolerance}, {"witness", witness}};
  }
};

struct VerifyReport {
  std::vector<Check> checks;
  bool pass() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
  }
  json to_json() const {
    json arr = json::array();
    for (const auto& c : checks) arr.push_back(c.to_json());
    return {{"pass", pass()}, {"checks", std::move(arr)}};
  }
};

/// Random nonnegative measure with total mass uniform in [0, radius].
inline MeasureVec random_in_ball(const SpacePtr& space, double radius, std::mt19937_64& rng) {
  std::vector<double> w(space->size());
  double s = 0.0;
  for (double& x : w) {
    const double r = unit_draw(rng);
    x = r * r * r;  // skewed so some cells are near zero
    s += x;
  }
  const double mass = radius * unit_draw(rng);
  if (s > 0.0)
    for (double& x : w) x *= mass / s;
  return {space, std::move(w)};
}

/// Largest tv(F(m1) - F(m2)) / (K_F(C1) tv(m1 - m2)) over random pairs in the
/// TV ball of radius C1 = u(Q) + 2a, using the pair truncated at K_tilde.
/// Returns the worst ratio and its pair index.
inline std::pair<double, std::size_t> lipschitz_field_ratio(const Problem& p, const TruncationConstants& c,
                                                            std::size_t pairs, std::uint64_t seed) {
  const FitnessPair tr = p.fitness.truncate(c.K_tilde);
  const double K = c.field_lipschitz(c.C1);
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  std::size_t at = 0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const auto m1 = random_in_ball(p.space, c.C1, rng);
    const auto m2 = random_in_ball(p.space, c.C1, rng);
    const double d = tv_norm(add_scaled(m1, -1.0, m2));
    if (d == 0.0) continue;
    const double lhs = tv_norm(add_scaled(vector_field(m1, p.kernel, tr), -1.0, vector_field(m2, p.kernel, tr)));
    const double r = lhs / (K * d);
    if (r > worst) {
      worst = r;
      at = k;
    }
  }
  return {worst, at};
}

/// Runs the invariant suite on the configured problem.
inline VerifyReport verify(const RunConfig& cfg) {
  VerifyReport rep;
  const Problem& p = cfg.problem;
  const bool quasi = p.fitness.average_fitness_mortality();
  const double m0 = total_mass(p.u);
  const double a = cfg.ball_radius.value_or(std::max(1.0, m0));
  const double T = cfg.T;

  auto guarded = [&](const std::string& name, auto&& body) {
    Check c;
    c.name = name;
    try {
      body(c);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      c.pass = false;
      c.value = std::numeric_limits<double>::quiet_NaN();
      c.witness = {{"error", e.what()}};
    }
    rep.checks.push_back(std::move(c));
  };

  if (!quasi) {
    guarded("assumptions", [&](Check& c) {
      const auto r = verify_assumptions(p.fitness, mass_bound(p, T));
      c.pass = r.pass();
      c.value = r.varpi;
      c.witness = assumptions_to_json(r);
    });
  }

  std::optional<TruncationConstants> consts;
  if (!quasi) {
    guarded("lipschitz_field", [&](Check& c) {
      consts = estimate_constants(p.fitness, m0, a);
      const auto [ratio, at] = lipschitz_field_ratio(p, *consts, 200, cfg.seed);
      c.value = ratio;
      c.tolerance = 1.0;
      c.pass = ratio <= 1.0;
      c.witness = {{"pair", at}, {"C_W", consts->C1}, {"K_F", consts->field_lipschitz(consts->C1)}};
    });
  }

  // One run with the configured solver feeds positivity, Gronwall and the
  // reduction checks.
  std::optional<Trajectory> traj;
  guarded("positivity", [&](Check& c) {
    traj = flow(p.u, p.kernel, p.fitness, T, cfg.flow_controls());
    double lowest = 0.0;
    for (const auto& s : traj->states)
      for (double w : s.weights()) lowest = std::min(lowest, w);
    c.value = std::min(traj->worst_negative, lowest);
    c.tolerance = 1e-12;
    c.pass = c.value >= -c.tolerance;
    c.witness = {{"clipped_weights", traj->clipped}, {"dt", traj->dt}};
  });

  if (traj && !quasi) {
    guarded("gronwall", [&](Check& c) {
      c.value = gronwall_ratio(*traj, max_birth_at_zero(p.fitness));
      c.tolerance = 1.0 + 1e-6;
      c.pass = c.value <= c.tolerance;
      c.witness = {{"M_f1", max_birth_at_zero(p.fitness)}};
    });
  }

  guarded("semigroup", [&](Check& c) {
    const FlowControls ctl = cfg.flow_controls();
    const Trajectory zero = flow(p.u, p.kernel, p.fitness, 0.0, ctl);
    const bool identity = zero.size() == 1 && std::equal(zero.states[0].weights().begin(),
                                                         zero.states[0].weights().end(), p.u.weights().begin());
    if (T == 0.0) {
      c.pass = identity;
      c.witness = {{"identity", identity}};
      return;
    }
    const double dt = cfg.effective_dt();
    const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(T / dt - 1e-9)));
    const double h = T / static_cast<double>(steps);
    const std::size_t half = std::max<std::size_t>(1, steps / 2);
    const double t1 = h * static_cast<double>(half);
    FlowControls fixed = ctl;
    fixed.dt = h;
    const auto whole = traj && ctl.solver == Solver::Rk4 ? *traj : flow(p.u, p.kernel, p.fitness, T, fixed);
    const auto first = flow(p.u, p.kernel, p.fitness, t1, fixed);
    const auto second = T - t1 > 0.0 ? flow(first.final_state(), p.kernel, p.fitness, T - t1, fixed) : first;
    c.value = tv_norm(add_scaled(whole.final_state(), -1.0, second.final_state()));
    c.tolerance = 1e-6;
    c.pass = identity && c.value <= c.tolerance;
    c.witness = {{"identity", identity}, {"t1", t1}, {"t2", T - t1}};
  });

  if (!quasi) {
    guarded("contraction", [&](Check& c) {
      if (!consts) consts = estimate_constants(p.fitness, m0, a);
      const double h = std::min(cfg.effective_dt(), consts->b);
      const auto steps = static_cast<std::size_t>(std::max(1.0, std::floor(consts->b / h + 1e-9)));
      const Trajectory w = picard_solve(p.u, p.kernel, p.fitness.truncate(consts->K_tilde),
                                        uniform_grid(h * static_cast<double>(steps), steps), cfg.picard);
      const auto& r = w.contraction_ratios.front();
      c.value = r.empty() ? 0.0 : *std::max_element(r.begin(), r.end());
      c.tolerance = consts->kappa();
      c.pass = c.tolerance < 1.0 && c.value <= c.tolerance;
      c.witness = {{"iterations", w.window_iterations.front()}, {"ratios", r}, {"b", consts->b}};
    });

    guarded("cross_solver", [&](Check& c) {
      FlowControls rk = cfg.flow_controls(), pc = cfg.flow_controls();
      rk.solver = Solver::Rk4;
      pc.solver = Solver::Picard;
      const Trajectory tr = traj && cfg.solver == Solver::Rk4 ? *traj : flow(p.u, p.kernel, p.fitness, T, rk);
      const Trajectory tp = traj && cfg.solver == Solver::Picard ? *traj : flow(p.u, p.kernel, p.fitness, T, pc);
      c.value = sup_tv_distance(tr, tp);
      c.tolerance = 1e-4;
      c.pass = c.value <= c.tolerance;
      c.witness = {{"dt", tr.dt}};
    });
  }

  if (traj && traj->size() >= 3) {
    guarded("reduction", [&](Check& c) {
      reductions::ReductionReport r;
      if (quasi) {
        // The run already conserves mass; the normalized states follow the
        // replicator-mutator field with per-class fitness f1.
        r = reductions::quasispecies_check(*traj, p.kernel, p.fitness);
      } else if (p.kernel.is_dirac()) {
        r = reductions::replicator_check(*traj, p.kernel, p.fitness);
      } else {
        r = reductions::normalized_check(*traj, p.kernel, p.fitness);
      }
      c.value = r.max_discrepancy;
      c.tolerance = r.tolerance;
      c.pass = r.pass;
      c.witness = r.to_json();
    });
  }

  if (!quasi && !p.space->is_grid() && p.kernel.variant() == MutationKernel::Variant::Matrix) {
    guarded("discrete_reduction", [&](Check& c) {
      const auto r = reductions::discrete_check(p.u, p.kernel, p.fitness, T, cfg.effective_dt());
      c.value = r.max_discrepancy;
      c.tolerance = r.tolerance;
      c.pass = r.pass;
      c.witness = r.to_json();
    });
  }
  return rep;
}

// ---------------------------------------------------------------------------
// dirac-limit

/// Mass level at which f1(X, q_i) = f2(X, q_i) (bisection; f1 - f2 is
/// nonincreasing in X under the standing assumptions). 0 if the class
/// cannot grow from zero.
inline double equilibrium_mass(const FitnessPair& fp, std::size_t i) {
  auto g = [&](double X) { return fp.f1(X, i) - fp.f2(X, i); };
  if (!(g(0.0) > 0.0)) return 0.0;
  double hi = 1.0;
  while (g(hi) > 0.0 && hi < 1e12) hi *= 2.0;
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (g(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct DiracLimitReport {
  bool tie = false;
  std::size_t fittest = 0;
  double fittest_point = 0.0;
  double equilibrium = 0.0;
  /// argmax of f1(0, q) / slope of f2, i.e. ignoring the mortality floor
  /// (logistic family only).
  std::optional<std::size_t> unfloored_fittest;
  std::vector<double> times;
  std::vector<double> fraction;
  std::vector<double> bl_to_atom;  // nan where not sampled
  std::optional<double> hit_time;
  double mass_at_hit = std::numeric_limits<double>::quiet_NaN();
  std::size_t dominant_final = 0;
  std::vector<double> final_shares;
  double threshold = 0.95;

  bool concentrated() const { return hit_time.has_value(); }
  double mass_error() const { return std::abs(mass_at_hit - equilibrium) / equilibrium; }

  json to_json(const StrategySpace& s) const {
    auto pt = [&](std::size_t i) {
      auto p = s.point(i);
      return std::vector<double>(p.begin(), p.end());
    };
    std::size_t frac_up = 0, bl_down = 0, bl_samples = 0;
    for (std::size_t k = 1; k < fraction.size(); ++k) frac_up += fraction[k] >= fraction[k - 1] ? 1 : 0;
    double prev_bl = std::numeric_limits<double>::quiet_NaN();
    for (double b : bl_to_atom) {
      if (std::isnan(b)) continue;
      if (!std::isnan(prev_bl)) {
        ++bl_samples;
        bl_down += b <= prev_bl ? 1 : 0;
      }
      prev_bl = b;
    }
    json j = {{"tie", tie},
              {"fittest_index", fittest},
              {"fittest_point", pt(fittest)},
              {"equilibrium_mass", equilibrium},
              {"threshold", threshold},
              {"hit_time", hit_time ? json(*hit_time) : json()},
              {"mass_at_hit", std::isnan(mass_at_hit) ? json() : json(mass_at_hit)},
              {"mass_relative_error", std::isnan(mass_at_hit) ? json() : json(mass_error())},
              {"final_fraction", fraction.empty() ? json() : json(fraction.back())},
              {"dominant_final_index", dominant_final},
              {"fraction_nondecreasing_steps", frac_up},
              {"fraction_steps", fraction.empty() ? 0 : fraction.size() - 1},
              {"bl_nonincreasing_samples", bl_down},
              {"bl_samples", bl_samples}};
    if (unfloored_fittest) j["unfloored_fittest_index"] = *unfloored_fittest;
    if (tie) j["final_shares"] = final_shares;
    return j;
  }
};

/// Concentration of a pure-selection run on the class with the largest
/// equilibrium mass; for the logistic family that is argmax (a - floor) / b.
inline DiracLimitReport dirac_limit(const Problem& p, double T, const FlowControls& ctl, double threshold = 0.95,
                                    std::size_t bl_stride = 0, Trajectory* keep = nullptr) {
  if (!p.kernel.is_dirac()) throw ConfigError("dirac-limit requires the Dirac kernel");
  if (p.fitness.average_fitness_mortality()) throw ConfigError("dirac-limit requires rate mortality");
  DiracLimitReport rep;
  rep.threshold = threshold;
  const std::size_t n = p.space->size();
  std::vector<double> xstar(n);
  for (std::size_t i = 0; i < n; ++i) xstar[i] = equilibrium_mass(p.fitness, i);
  rep.fittest = static_cast<std::size_t>(std::max_element(xstar.begin(), xstar.end()) - xstar.begin());
  rep.equilibrium = xstar[rep.fittest];
  rep.fittest_point = p.space->point(rep.fittest)[0];
  for (std::size_t i = 0; i < n; ++i)
    if (i != rep.fittest && std::abs(xstar[i] - rep.equilibrium) <= 1e-12 * std::max(1.0, rep.equilibrium))
      rep.tie = true;
  if (p.fitness.family() == FitnessPair::Family::LogisticMortality) {
    const auto a = p.fitness.a();
    const auto b = p.fitness.b();
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      const double r = b[i] > 0.0 ? a[i] / b[i] : std::numeric_limits<double>::infinity();
      if (r > best) {
        best = r;
        rep.unfloored_fittest = i;
      }
    }
  }

  const Trajectory traj = flow(p.u, p.kernel, p.fitness, T, ctl);
  const std::size_t stride = default_stride(traj.size(), bl_stride);
  const auto atom = MeasureVec::atom(p.space, rep.fittest);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double X = traj.masses[k];
    const double frac = X > 0.0 ? traj.states[k][rep.fittest] / X : 0.0;
    rep.times.push_back(traj.times[k]);
    rep.fraction.push_back(frac);
    const bool sample = k % stride == 0 || k + 1 == traj.size();
    rep.bl_to_atom.push_back(sample && X > 0.0 ? bl_distance(scaled(traj.states[k], 1.0 / X), atom)
                                               : std::numeric_limits<double>::quiet_NaN());
    if (!rep.hit_time && frac > threshold) {
      rep.hit_time = traj.times[k];
      rep.mass_at_hit = X;
    }
  }
  const auto fin = traj.final_state().weights();
  rep.dominant_final = static_cast<std::size_t>(std::max_element(fin.begin(), fin.end()) - fin.begin());
  const double Xf = traj.masses.back();
  for (double w : fin) rep.final_shares.push_back(Xf > 0.0 ? w / Xf : 0.0);
  if (keep) *keep = traj;
  return rep;
}

inline std::string dirac_limit_csv(const DiracLimitReport& r) {
  std::string out = "t,fraction,bl_to_atom\n";
  for (std::size_t k = 0; k < r.times.size(); ++k)
    out += format_double(r.times[k]) + "," + format_double(r.fraction[k]) + "," +
           (std::isnan(r.bl_to_atom[k]) ? std::string("nan") : format_double(r.bl_to_atom[k])) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// mutation-limit

struct MutationLimitReport {
  std::vector<double> sigmas;
  std::vector<double> sample_times;
  /// distances[s][k]: bl between the sigma_s run and the Dirac run at sample k.
  std::vector<std::vector<double>> distances;
  std::vector<double> final_distance;
  double slack = 0.05;

  bool strictly_decreasing() const {
    for (std::size_t s = 1; s < final_distance.size(); ++s)
      if (!(final_distance[s] < final_distance[s - 1])) return false;
    return true;
  }
  /// Nonincreasing allowing each step to grow by at most `slack` relative.
  bool monotone_within_slack() const {
    for (std::size_t s = 1; s < final_distance.size(); ++s)
      if (final_distance[s] > final_distance[s - 1] * (1.0 + slack)) return false;
    return true;
  }
  json to_json() const {
    return {{"sigmas", sigmas},
            {"final_distance", final_distance},
            {"strictly_decreasing", strictly_decreasing()},
            {"monotone_within_slack", monotone_within_slack()},
            {"slack", slack},
            {"pass", monotone_within_slack()}};
  }
};

/// Final-time and sampled bl distances between Gaussian-kernel runs and the
/// Dirac-kernel run of the same problem. Member runs are independent and
/// execute on up to `threads` workers.
inline MutationLimitReport mutation_limit(const Problem& p, const std::vector<double>& sigmas, double T,
                                          const FlowControls& ctl, std::size_t threads = thread_cap(),
                                          std::size_t samples = 20) {
  if (sigmas.empty()) throw ConfigError("mutation-limit needs a nonempty sigma list");
  MutationLimitReport rep;
  rep.sigmas = sigmas;
  std::vector<std::optional<Trajectory>> runs(sigmas.size() + 1);
  parallel_for(runs.size(), threads, [&](std::size_t r) {
    const auto k = r == 0 ? MutationKernel::dirac(p.space) : MutationKernel::gaussian(p.space, sigmas[r - 1]);
    runs[r] = flow(p.u, k, p.fitness, T, ctl);
  });
  const Trajectory& base = *runs[0];
  std::vector<std::size_t> nodes;
  const std::size_t N = base.size();
  for (std::size_t k = 0; k < samples; ++k) nodes.push_back((N - 1) * (k + 1) / samples);
  nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
  for (std::size_t k : nodes) rep.sample_times.push_back(base.times[k]);
  for (std::size_t s = 0; s < sigmas.size(); ++s) {
    const Trajectory& t = *runs[s + 1];
    std::vector<double> d;
    for (std::size_t k : nodes) d.push_back(bl_distance(t.states[k], base.states[k]));
    rep.final_distance.push_back(bl_distance(t.final_state(), base.final_state()));
    rep.distances.push_back(std::move(d));
  }
  return rep;
}

inline std::string mutation_limit_csv(const MutationLimitReport& r) {
  std::string out = "sigma,t,bl_to_dirac\n";
  for (std::size_t s = 0; s < r.sigmas.size(); ++s)
    for (std::size_t k = 0; k < r.sample_times.size(); ++k)
      out += format_double(r.sigmas[s]) + "," + format_double(r.sample_times[k]) + "," +
             format_double(r.distances[s][k]) + "\n";
  return out;
}

}  // namespace evomeasure::experiments

#endif  // EVOMEASURE_EXPERIMENTS_HPP
