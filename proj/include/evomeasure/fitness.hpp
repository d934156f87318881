#ifndef EVOMEASURE_FITNESS_HPP
#define EVOMEASURE_FITNESS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evomeasure/errors.hpp"
#include "evomeasure/measure.hpp"

namespace evomeasure {

enum class Rate { Birth, Mortality };

/// Density-dependent birth rate f1(X, q) and mortality rate f2(X, q), with X
/// the total mass. Coefficients a, b, c are tabulated per support point.
///
///   Constant           f1 = a              f2 = floor + b
///   LogisticMortality  f1 = a              f2 = floor + b X
///   BevertonHolt       f1 = a / (1 + c X)  f2 = floor + b X
///   Ricker             f1 = a exp(-c X)    f2 = floor + b X
///
/// A pair may be truncated at K: X is clamped to [0, K] before evaluation
/// (untruncated pairs clamp only at 0).
class FitnessPair {
 public:
  enum class Family { Constant, LogisticMortality, BevertonHolt, Ricker, Custom };
  /// AverageFitness replaces f2 by the population-average birth rate
  /// <mu, f1(X, .)> / X. Only the direct RK4 solver accepts it.
  enum class MortalityMode { Rate, AverageFitness };
  using RateFn = std::function<double(double X, std::span<const double> q)>;

  static constexpr double kDefaultFloor = 1e-3;

  static FitnessPair constant(SpacePtr space, std::vector<double> a, std::vector<double> b,
                              double floor = 0.0) {
    return tabulated(Family::Constant, std::move(space), std::move(a), std::move(b), {0.0}, floor);
  }
  static FitnessPair logistic(SpacePtr space, std::vector<double> a, std::vector<double> b,
                              double floor = kDefaultFloor) {
    return tabulated(Family::LogisticMortality, std::move(space), std::move(a), std::move(b), {0.0}, floor);
  }
  static FitnessPair beverton_holt(SpacePtr space, std::vector<double> a, std::vector<double> c,
                                   std::vector<double> b, double floor = kDefaultFloor) {
    return tabulated(Family::BevertonHolt, std::move(space), std::move(a), std::move(b), std::move(c), floor);
  }
  static FitnessPair ricker(SpacePtr space, std::vector<double> a, std::vector<double> c,
                            std::vector<double> b, double floor = kDefaultFloor) {
    return tabulated(Family::Ricker, std::move(space), std::move(a), std::move(b), std::move(c), floor);
  }
  static FitnessPair custom(SpacePtr space, RateFn f1, RateFn f2) {
    FitnessPair fp(Family::Custom, std::move(space));
    fp.custom_f1_ = std::move(f1);
    fp.custom_f2_ = std::move(f2);
    return fp;
  }

  Family family() const noexcept { return family_; }
  MortalityMode mortality_mode() const noexcept { return mode_; }
  bool average_fitness_mortality() const noexcept { return mode_ == MortalityMode::AverageFitness; }
  const SpacePtr& space() const noexcept { return space_; }
  std::optional<double> truncation() const noexcept { return k_tilde_; }
  double floor() const noexcept { return floor_; }
  std::span<const double> a() const noexcept { return a_; }
  std::span<const double> b() const noexcept { return b_; }
  std::span<const double> c() const noexcept { return c_; }

  /// Copy with X clamped to [0, K] before evaluation.
  FitnessPair truncate(double K) const {
    if (!(K > 0.0)) throw UsageError("truncate: K must be positive");
    FitnessPair fp = *this;
    fp.k_tilde_ = k_tilde_ ? std::min(*k_tilde_, K) : K;
    return fp;
  }

  FitnessPair with_average_fitness_mortality() const {
    FitnessPair fp = *this;
    fp.mode_ = MortalityMode::AverageFitness;
    return fp;
  }

  double clamp_mass(double X) const noexcept {
    X = std::max(X, 0.0);
    return k_tilde_ ? std::min(X, *k_tilde_) : X;
  }

  double f1(double X, std::size_t i) const { return checked(raw_f1(clamp_mass(X), i), "f1", X, i); }

  /// Per-point mortality; throws for average-fitness pairs (use
  /// average_birth instead).
  double f2(double X, std::size_t i) const {
    if (average_fitness_mortality())
      throw UsageError("f2: average-fitness mortality depends on the whole measure");
    return checked(raw_f2(clamp_mass(X), i), "f2", X, i);
  }

  double eval(Rate which, double X, std::size_t i) const {
    return which == Rate::Birth ? f1(X, i) : f2(X, i);
  }

  /// <mu, f1(X, .)> / X, the average birth rate; 0 for the zero measure.
  double average_birth(std::span<const double> weights, double X) const {
    if (X == 0.0) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) s += f1(X, i) * weights[i];
    return s / X;
  }

  std::string family_name() const {
    switch (family_) {
      case Family::Constant: return "constant";
      case Family::LogisticMortality: return "logistic";
      case Family::BevertonHolt: return "beverton_holt";
      case Family::Ricker: return "ricker";
      case Family::Custom: return "custom";
    }
    return "unknown";
  }

 private:
  FitnessPair(Family f, SpacePtr space) : family_(f), space_(std::move(space)) {}

  static std::vector<double> broadcast(std::vector<double> v, std::size_t n, const char* name) {
    if (v.size() == 1 && n != 1) v.assign(n, v[0]);
    if (v.size() != n)
      throw UsageError(std::string("fitness: coefficient '") + name + "' must have " + std::to_string(n) +
                       " entries");
    for (double x : v)
      if (!std::isfinite(x)) throw UsageError(std::string("fitness: coefficient '") + name + "' not finite");
    return v;
  }

  static FitnessPair tabulated(Family f, SpacePtr space, std::vector<double> a, std::vector<double> b,
                               std::vector<double> c, double floor) {
    if (!(floor >= 0.0)) throw UsageError("fitness: floor must be nonnegative");
    const std::size_t n = space->size();
    FitnessPair fp(f, std::move(space));
    fp.a_ = broadcast(std::move(a), n, "a");
    fp.b_ = broadcast(std::move(b), n, "b");
    fp.c_ = broadcast(std::move(c), n, "c");
    fp.floor_ = floor;
    return fp;
  }

  double raw_f1(double X, std::size_t i) const {
    switch (family_) {
      case Family::Constant:
      case Family::LogisticMortality: return a_[i];
      case Family::BevertonHolt: return a_[i] / (1.0 + c_[i] * X);
      case Family::Ricker: return a_[i] * std::exp(-c_[i] * X);
      case Family::Custom: return custom_f1_(X, space_->point(i));
    }
    return 0.0;
  }

  double raw_f2(double X, std::size_t i) const {
    switch (family_) {
      case Family::Constant: return floor_ + b_[i];
      case Family::LogisticMortality:
      case Family::BevertonHolt:
      case Family::Ricker: return floor_ + b_[i] * X;
      case Family::Custom: return custom_f2_(X, space_->point(i));
    }
    return 0.0;
  }

  static double checked(double v, const char* which, double X, std::size_t i) {
    if (!(v >= 0.0))
      throw ConfigError(std::string("fitness: ") + which + " is negative or NaN (" + std::to_string(v) +
                        ") at X=" + std::to_string(X) + ", point " + std::to_string(i));
    return v;
  }

  Family family_;
  MortalityMode mode_ = MortalityMode::Rate;
  SpacePtr space_;
  std::vector<double> a_, b_, c_;
  double floor_ = 0.0;
  std::optional<double> k_tilde_;
  RateFn custom_f1_, custom_f2_;
};

// ---------------------------------------------------------------------------
// Standing assumptions

struct AssumptionViolation {
  std::string kind;  // "negative", "f1_increasing", "f2_decreasing", "varpi"
  Rate which = Rate::Birth;
  double X = 0.0;
  std::size_t point = 0;
  double value = 0.0;
};

struct AssumptionReport {
  /// False for average-fitness pairs, which the checks do not cover.
  bool applicable = true;
  bool a1_ok = true;
  bool a2_ok = true;
  double varpi = 0.0;
  std::size_t lattice_size = 0;
  std::vector<AssumptionViolation> violations;

  bool pass() const noexcept { return applicable && a1_ok && a2_ok; }
};

/// Checks nonnegativity, monotonicity in X (f1 nonincreasing, f2
/// nondecreasing) and a positive intrinsic mortality floor over a lattice of
/// `lattice` X-values in [0, K] times every support point.
inline AssumptionReport verify_assumptions(const FitnessPair& fp, double K, std::size_t lattice = 101) {
  AssumptionReport rep;
  rep.lattice_size = lattice;
  if (fp.average_fitness_mortality()) {
    rep.applicable = false;
    return rep;
  }
  if (lattice < 2) throw UsageError("verify_assumptions: lattice needs at least 2 X values");
  const std::size_t n = fp.space()->size();
  std::vector<double> xs(lattice);
  for (std::size_t k = 0; k < lattice; ++k) xs[k] = K * static_cast<double>(k) / static_cast<double>(lattice - 1);

  auto value = [&](Rate r, double X, std::size_t i, bool& ok) {
    try {
      return fp.eval(r, X, i);
    } catch (const ConfigError&) {
      ok = false;
      rep.violations.push_back({"negative", r, X, i, std::nan("")});
      return 0.0;
    }
  };

  rep.varpi = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    bool ok1 = true, ok2 = true;
    double prev1 = value(Rate::Birth, xs[0], i, ok1);
    double prev2 = value(Rate::Mortality, xs[0], i, ok2);
    rep.varpi = std::min(rep.varpi, prev2);
    for (std::size_t k = 1; k < lattice && ok1 && ok2; ++k) {
      const double v1 = value(Rate::Birth, xs[k], i, ok1);
      const double v2 = value(Rate::Mortality, xs[k], i, ok2);
      if (v1 > prev1 * (1.0 + 1e-14) + 1e-300) {
        ok1 = false;
        rep.violations.push_back({"f1_increasing", Rate::Birth, xs[k], i, v1});
      }
      if (v2 < prev2 * (1.0 - 1e-14)) {
        ok2 = false;
        rep.violations.push_back({"f2_decreasing", Rate::Mortality, xs[k], i, v2});
      }
      prev1 = v1;
      prev2 = v2;
    }
    rep.a1_ok = rep.a1_ok && ok1;
    rep.a2_ok = rep.a2_ok && ok2;
  }
  if (!(rep.varpi > 0.0)) {
    rep.a2_ok = false;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (fp.f2(0.0, i) <= rep.varpi) { arg = i; break; }
    rep.violations.push_back({"varpi", Rate::Mortality, 0.0, arg, rep.varpi});
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Truncation constants and the local existence window

struct TruncationConstants {
  double K_tilde = 0.0;
  double B1 = 0.0, B2 = 0.0;
  double L1 = 0.0, L2 = 0.0;
  double M_f1 = 0.0;
  double varpi = 0.0;
  double u_mass = 0.0;
  double a = 0.0;
  double C1 = 0.0;
  double C2 = 0.0;
  double b = 0.0;
  /// sup_{X,X'} bound from 1/(2 L2 C1 + 2 B1 + 2 C2 C1) at the chosen b.
  double b_contraction_bound = 0.0;
  /// Root of (1 - e^{-B2 b}) u(Q) + 2 B1 C1 b = a (infinite if none).
  double b_ball_bound = 0.0;
  std::string binding;

  /// Upper bound on the Picard contraction ratio on a window of length b.
  double kappa() const noexcept { return 2.0 * b * (L2 * C1 + B1 + C1 * C2); }
  /// K_F(s) = B1 + B2 + (L1 + L2) s.
  double field_lipschitz(double s) const noexcept { return B1 + B2 + (L1 + L2) * s; }
};

inline nlohmann::json constants_to_json(const TruncationConstants& c) {
  auto finite_or_null = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(); };
  return {{"K_tilde", c.K_tilde}, {"B1", c.B1}, {"B2", c.B2}, {"L1", c.L1}, {"L2", c.L2},
          {"M_f1", c.M_f1}, {"varpi", c.varpi}, {"u_mass", c.u_mass}, {"a", c.a},
          {"C1", c.C1}, {"C2", c.C2}, {"b", c.b}, {"kappa", c.kappa()},
          {"b_contraction_bound", finite_or_null(c.b_contraction_bound)},
          {"b_ball_bound", finite_or_null(c.b_ball_bound)}, {"binding", c.binding}};
}

namespace detail {

struct RateStats {
  double bound = 0.0;
  double lipschitz = 0.0;
};

inline RateStats sample_rate(const FitnessPair& truncated, Rate which, double K, std::size_t lattice) {
  RateStats st;
  const std::size_t n = truncated.space()->size();
  for (std::size_t i = 0; i < n; ++i) {
    double prev = truncated.eval(which, 0.0, i);
    st.bound = std::max(st.bound, prev);
    for (std::size_t k = 1; k < lattice; ++k) {
      const double X0 = K * static_cast<double>(k - 1) / static_cast<double>(lattice - 1);
      const double X1 = K * static_cast<double>(k) / static_cast<double>(lattice - 1);
      const double v = truncated.eval(which, X1, i);
      st.bound = std::max(st.bound, v);
      st.lipschitz = std::max(st.lipschitz, std::abs(v - prev) / (X1 - X0));
      prev = v;
    }
  }
  return st;
}

}  // namespace detail

/// Bounds B1, B2 and Lipschitz constants L1, L2 of the pair truncated at K,
/// sampled on a lattice of `lattice` X-values and again at twice the
/// resolution (the larger value is kept), followed by the window b: 0.9 times
/// the binding bound among {1, ball condition, contraction condition},
/// iterated because C2 depends on b.
///
/// K defaults to 1.1 * (u(Q) + 2a).
inline TruncationConstants estimate_constants(const FitnessPair& fp, double u_mass, double a,
                                              std::optional<double> K_override = std::nullopt,
                                              std::size_t lattice = 101) {
  if (fp.average_fitness_mortality())
    throw UsageError("estimate_constants: average-fitness mortality is outside the contraction theory");
  if (!(a > 0.0)) throw UsageError("estimate_constants: ball radius a must be positive");
  if (!(u_mass >= 0.0)) throw UsageError("estimate_constants: initial mass must be nonnegative");
  TruncationConstants c;
  c.u_mass = u_mass;
  c.a = a;
  c.C1 = u_mass + 2.0 * a;
  c.K_tilde = K_override.value_or(1.1 * c.C1);
  if (!(c.K_tilde > c.C1))
    throw UsageError("estimate_constants: K_tilde must exceed u(Q) + 2a = " + std::to_string(c.C1));

  const FitnessPair tr = fp.truncate(c.K_tilde);
  for (std::size_t res : {lattice, 2 * lattice - 1}) {
    const auto s1 = detail::sample_rate(tr, Rate::Birth, c.K_tilde, res);
    const auto s2 = detail::sample_rate(tr, Rate::Mortality, c.K_tilde, res);
    c.B1 = std::max(c.B1, s1.bound);
    c.L1 = std::max(c.L1, s1.lipschitz);
    c.B2 = std::max(c.B2, s2.bound);
    c.L2 = std::max(c.L2, s2.lipschitz);
  }
  const std::size_t n = fp.space()->size();
  c.varpi = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    c.M_f1 = std::max(c.M_f1, fp.f1(0.0, i));
    c.varpi = std::min(c.varpi, fp.f2(0.0, i));
  }

  // Ball condition: g(b) = (1 - e^{-B2 b}) u + 2 B1 C1 b - a, increasing, g(0) = -a.
  auto g = [&](double b) { return (1.0 - std::exp(-c.B2 * b)) * u_mass + 2.0 * c.B1 * c.C1 * b - a; };
  double hi = 1.0;
  while (g(hi) <= 0.0 && hi < 1e12) hi *= 2.0;
  if (g(hi) <= 0.0) {
    c.b_ball_bound = std::numeric_limits<double>::infinity();
  } else {
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (g(mid) < 0.0 ? lo : hi) = mid;
    }
    c.b_ball_bound = lo;
  }

  auto contraction_bound = [&](double b) {
    const double c2 = c.L1 + 2.0 * b * c.L2 * c.B1;
    const double denom = 2.0 * c.L2 * c.C1 + 2.0 * c.B1 + 2.0 * c2 * c.C1;
    return denom > 0.0 ? 1.0 / denom : std::numeric_limits<double>::infinity();
  };
  auto binding = [&](double b) { return std::min({1.0, c.b_ball_bound, contraction_bound(b)}); };

  double b = 0.9 * binding(0.0);
  for (int it = 0; it < 20; ++it) {
    const double next = 0.9 * binding(b);
    const bool stable = std::abs(next - b) <= 1e-12 * std::max(1.0, b);
    b = next;
    if (stable) break;
  }
  // Shrinking b only loosens both conditions, so step down until the 10% margin holds.
  for (int it = 0; it < 1000 && b > 0.0 && b > 0.9 * binding(b) * (1.0 + 1e-12); ++it) b *= 0.99;
  if (!(b > 0.0) || !std::isfinite(b)) {
    throw NumericError("estimate_constants: no positive window b (ball bound " + std::to_string(c.b_ball_bound) +
                       ", contraction bound " + std::to_string(contraction_bound(0.0)) + ")");
  }

  c.b = b;
  c.C2 = c.L1 + 2.0 * b * c.L2 * c.B1;
  c.b_contraction_bound = contraction_bound(b);
  const double bind = binding(b);
  c.binding = bind == 1.0 ? "unit" : (bind == c.b_ball_bound ? "ball" : "contraction");
  return c;
}

// ---------------------------------------------------------------------------
// Config

/// A coefficient is a scalar, a per-point array, or an affine-plus-kink form
/// {"offset":c0,"slope":[..],"kink_at":[..],"kink_slope":[..]} evaluated as
/// c0 + sum_d slope_d q_d + sum_d kink_slope_d |q_d - kink_at_d|.
inline std::vector<double> coefficient_from_json(const nlohmann::json& j, const char* key, double fallback,
                                                 const StrategySpace& space) {
  if (!j.contains(key)) return {fallback};
  const auto& v = j.at(key);
  if (v.is_number()) return {v.get<double>()};
  if (v.is_array()) return v.get<std::vector<double>>();
  const std::size_t d = space.dim();
  const double c0 = v.value("offset", 0.0);
  const auto slope = v.value("slope", std::vector<double>(d, 0.0));
  const auto kink_at = v.value("kink_at", std::vector<double>(d, 0.0));
  const auto kink_slope = v.value("kink_slope", std::vector<double>(d, 0.0));
  if (slope.size() != d || kink_at.size() != d || kink_slope.size() != d)
    throw ConfigError(std::string("fitness: coefficient '") + key + "' has wrong dimension");
  std::vector<double> out(space.size());
  for (std::size_t i = 0; i < space.size(); ++i) {
    const auto q = space.point(i);
    double x = c0;
    for (std::size_t k = 0; k < d; ++k) x += slope[k] * q[k] + kink_slope[k] * std::abs(q[k] - kink_at[k]);
    out[i] = x;
  }
  return out;
}

/// {"family":"ricker","a":[..]|x,"b":..,"c":..,"floor":..,
///  "mortality":"rate"|"average_fitness"}
inline FitnessPair fitness_from_json(const nlohmann::json& j, SpacePtr space) {
  try {
    const std::string fam = j.at("family").get<std::string>();
    const auto a = coefficient_from_json(j, "a", 0.0, *space);
    const auto b = coefficient_from_json(j, "b", 0.0, *space);
    const auto c = coefficient_from_json(j, "c", 0.0, *space);
    std::optional<FitnessPair> fp;
    if (fam == "constant") fp = FitnessPair::constant(space, a, b, j.value("floor", 0.0));
    else if (fam == "logistic")
      fp = FitnessPair::logistic(space, a, b, j.value("floor", FitnessPair::kDefaultFloor));
    else if (fam == "beverton_holt")
      fp = FitnessPair::beverton_holt(space, a, c, b, j.value("floor", FitnessPair::kDefaultFloor));
    else if (fam == "ricker")
      fp = FitnessPair::ricker(space, a, c, b, j.value("floor", FitnessPair::kDefaultFloor));
    else
      throw ConfigError("fitness: unknown family '" + fam + "'");
    const std::string mode = j.value("mortality", std::string("rate"));
    if (mode == "average_fitness") fp = fp->with_average_fitness_mortality();
    else if (mode != "rate") throw ConfigError("fitness: unknown mortality mode '" + mode + "'");
    return *fp;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("fitness: ") + e.what());
  } catch (const UsageError& e) {
    throw ConfigError(std::string("fitness: ") + e.what());
  }
}

inline nlohmann::json fitness_to_json(const FitnessPair& fp) {
  nlohmann::json j = {{"family", fp.family_name()}};
  if (fp.family() != FitnessPair::Family::Custom) {
    j["a"] = std::vector<double>(fp.a().begin(), fp.a().end());
    j["b"] = std::vector<double>(fp.b().begin(), fp.b().end());
    j["c"] = std::vector<double>(fp.c().begin(), fp.c().end());
    j["floor"] = fp.floor();
  }
  j["mortality"] = fp.average_fitness_mortality() ? "average_fitness" : "rate";
  return j;
}

}  // namespace evomeasure

#endif  // EVOMEASURE_FITNESS_HPP
