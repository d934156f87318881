#ifndef EVOMEASURE_CONFIG_HPP
#define EVOMEASURE_CONFIG_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evomeasure/dynamics.hpp"
#include "evomeasure/errors.hpp"
#include "evomeasure/fitness.hpp"
#include "evomeasure/kernel.hpp"
#include "evomeasure/measure.hpp"
#include "evomeasure/serialization.hpp"

namespace evomeasure {

/// Everything one simulation needs.
struct Problem {
  SpacePtr space;
  MeasureVec u;
  MutationKernel kernel;
  FitnessPair fitness;
};

/// [0, 1) from the top 53 bits of a 64-bit Mersenne Twister draw. Written out
/// so outputs are identical across standard libraries for a given seed.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Initial measure forms:
///   {"type":"weights","weights":[..]}
///   {"type":"uniform","mass":m}
///   {"type":"cosine","mass":m,"amplitude":A}   density 1 + A prod_d cos(2 pi (q_d - lo_d)/(hi_d - lo_d))
///   {"type":"atom","index":i,"mass":m}
///   {"type":"random","mass":m,"seed":s}         cell weights uniform in [0.5, 1.5), rescaled to mass m
/// Every form but "weights" is rescaled so the total mass equals `mass` (default 1).
inline MeasureVec initial_from_json(const json& j, const SpacePtr& space, std::uint64_t default_seed = 0) {
  try {
    const std::string type = j.at("type").get<std::string>();
    const double mass = j.value("mass", 1.0);
    if (!(mass >= 0.0)) throw ConfigError("initial: mass must be nonnegative");
    auto rescaled = [&](MeasureVec m) {
      const double X = total_mass(m);
      return X > 0.0 ? scaled(m, mass / X) : m;
    };
    if (type == "weights") return {space, j.at("weights").get<std::vector<double>>()};
    if (type == "uniform") return rescaled(MeasureVec::from_density(space, [](auto) { return 1.0; }));
    if (type == "atom") return MeasureVec::atom(space, j.at("index").get<std::size_t>(), mass);
    if (type == "cosine") {
      const double A = j.value("amplitude", 0.5);
      if (!(std::abs(A) < 1.0)) throw ConfigError("initial: cosine amplitude must lie in (-1, 1)");
      const auto& b = space->bounds();
      return rescaled(MeasureVec::from_density(space, [&](std::span<const double> q) {
        double c = 1.0;
        for (std::size_t d = 0; d < q.size(); ++d)
          c *= std::cos(2.0 * std::numbers::pi * (q[d] - b.lo[d]) / (b.hi[d] - b.lo[d]));
        return 1.0 + A * c;
      }));
    }
    if (type == "random") {
      std::mt19937_64 rng(j.value("seed", default_seed));
      std::vector<double> w(space->size());
      for (double& x : w) x = 0.5 + unit_draw(rng);
      return rescaled(MeasureVec(space, std::move(w)));
    }
    throw ConfigError("initial: unknown type '" + type + "'");
  } catch (const json::exception& e) {
    throw ConfigError(std::string("initial: ") + e.what());
  } catch (const UsageError& e) {
    throw ConfigError(std::string("initial: ") + e.what());
  }
}

struct RunConfig {
  json raw;
  Problem problem;
  Solver solver = Solver::Rk4;
  double T = 1.0;
  std::optional<double> dt{};
  PicardControls picard{};
  std::optional<double> ball_radius{};
  std::uint64_t seed = 0;
  std::string out_dir{};
  std::vector<double> sigmas{};
  /// Mass-fraction threshold for the concentration experiment.
  double concentration_threshold = 0.95;
  /// Node stride for the expensive bl columns of summary.csv.
  std::size_t bl_stride = 0;

  FlowControls flow_controls() const {
    FlowControls c;
    c.solver = solver;
    c.dt = dt;
    c.picard = picard;
    c.ball_radius = ball_radius;
    return c;
  }
  double effective_dt() const { return dt.value_or(T > 0.0 ? T / 2000.0 : 1.0); }
};

inline Solver parse_solver(const std::string& s) {
  if (s == "rk4") return Solver::Rk4;
  if (s == "picard") return Solver::Picard;
  throw ConfigError("solver must be 'rk4' or 'picard', got '" + s + "'");
}

inline const char* solver_name(Solver s) { return s == Solver::Rk4 ? "rk4" : "picard"; }

/// {"space":..,"kernel":..,"fitness":..,"initial":..,"solver":"rk4"|"picard",
///  "T":..,"dt":..,"picard":{"tol":..,"max_iter":..},"ball_radius":..,
///  "seed":..,"out":..,"sigmas":[..],"concentration_threshold":..,"bl_stride":..}
inline RunConfig run_config_from_json(const json& j) {
  try {
    const auto seed = j.value("seed", std::uint64_t{0});
    auto space = space_from_json(j.at("space"));
    auto kernel = kernel_from_json(j.value("kernel", json{{"variant", "dirac"}}), space);
    auto fitness = fitness_from_json(j.at("fitness"), space);
    auto u = initial_from_json(j.value("initial", json{{"type", "uniform"}}), space, seed);
    if (!is_nonnegative(u)) throw ConfigError("initial measure must be nonnegative");
    RunConfig c{.raw = j, .problem = Problem{space, std::move(u), std::move(kernel), std::move(fitness)}};
    c.seed = seed;
    c.solver = parse_solver(j.value("solver", std::string("rk4")));
    c.T = j.value("T", 1.0);
    if (!(c.T >= 0.0) || !std::isfinite(c.T)) throw ConfigError("T must be a finite nonnegative number");
    if (j.contains("dt")) {
      c.dt = j.at("dt").get<double>();
      if (!(*c.dt > 0.0)) throw ConfigError("dt must be positive");
    }
    if (j.contains("picard")) {
      c.picard.tol = j.at("picard").value("tol", c.picard.tol);
      c.picard.max_iter = j.at("picard").value("max_iter", c.picard.max_iter);
      if (!(c.picard.tol > 0.0)) throw ConfigError("picard.tol must be positive");
    }
    if (j.contains("ball_radius")) {
      c.ball_radius = j.at("ball_radius").get<double>();
      if (!(*c.ball_radius > 0.0)) throw ConfigError("ball_radius must be positive");
    }
    c.out_dir = j.value("out", std::string());
    c.sigmas = j.value("sigmas", std::vector<double>{});
    for (double s : c.sigmas)
      if (!(s > 0.0)) throw ConfigError("sigmas must be positive");
    c.concentration_threshold = j.value("concentration_threshold", 0.95);
    c.bl_stride = j.value("bl_stride", std::size_t{0});
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const UsageError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

inline RunConfig load_run_config(const std::string& path) { return run_config_from_json(read_json_file(path)); }

}  // namespace evomeasure

#endif  // EVOMEASURE_CONFIG_HPP
