#ifndef EVOMEASURE_REFERENCE_HPP
#define EVOMEASURE_REFERENCE_HPP

#include <cmath>
#include <numbers>
#include <vector>

#include "evomeasure/config.hpp"
#include "evomeasure/fitness.hpp"
#include "evomeasure/kernel.hpp"
#include "evomeasure/measure.hpp"

// Fixed problems shared by the verification suite, the tests and the sample
// configs under configs/.
namespace evomeasure::reference {

/// Q = [1, 2] on `cells` cells; u has density 1 + 0.5 cos(2 pi (q - 1)),
/// rescaled to unit mass; Gaussian kernel; Beverton-Holt births
/// f1 = q / (1 + X) and mortality f2 = 0.2 + 0.5 X.
inline Problem problem(std::size_t cells = 64, double sigma = 0.1) {
  auto space = StrategySpace::grid_1d(1.0, 2.0, cells);
  auto u = MeasureVec::from_density(space, [](std::span<const double> q) {
    return 1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * (q[0] - 1.0));
  });
  u = scaled(u, 1.0 / total_mass(u));
  std::vector<double> a(cells);
  for (std::size_t i = 0; i < cells; ++i) a[i] = space->point(i)[0];
  auto fp = FitnessPair::beverton_holt(space, a, {1.0}, {0.5}, 0.2);
  return {space, u, MutationKernel::gaussian(space, sigma), fp};
}

/// Same problem with faithful replication.
inline Problem dirac_problem(std::size_t cells = 64) {
  Problem p = problem(cells);
  p.kernel = MutationKernel::dirac(p.space);
  return p;
}

/// Logistic pure selection on Q = [0, 1]: f1 = 1 + q, f2 = 1e-3 + (1 + 6|q - 0.3|) X,
/// Dirac kernel, u with density 1 + 0.5 cos(2 pi q) and mass 0.5. The
/// floored birth/death ratio (1 + q - 1e-3) / (1 + 6|q - 0.3|) peaks at q = 0.3.
inline Problem concentration_problem(std::size_t cells = 128) {
  auto space = StrategySpace::grid_1d(0.0, 1.0, cells);
  auto u = MeasureVec::from_density(space, [](std::span<const double> q) {
    return 1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * q[0]);
  });
  u = scaled(u, 0.5 / total_mass(u));
  std::vector<double> a(cells), b(cells);
  for (std::size_t i = 0; i < cells; ++i) {
    const double q = space->point(i)[0];
    a[i] = 1.0 + q;
    b[i] = 1.0 + 6.0 * std::abs(q - 0.3);
  }
  auto fp = FitnessPair::logistic(space, a, b, 1e-3);
  return {space, u, MutationKernel::dirac(space), fp};
}

/// Two classes that always mutate into each other, f1 = f2 = 1, all mass on
/// class 0. The exact solution stays nonnegative; RK4 with step h produces
/// a negative weight iff its stability polynomial R(-2h) exceeds 1.
inline Problem positivity_trap() {
  auto space = StrategySpace::atoms({{0.0}, {1.0}});
  auto k = MutationKernel::matrix(space, {{0.0, 1.0}, {1.0, 0.0}});
  auto fp = FitnessPair::constant(space, {1.0}, {1.0}, 0.0);
  return {space, MeasureVec::atom(space, 0), k, fp};
}

/// The reference problem as a run config (what configs/reference.json holds).
inline json problem_config(std::size_t cells = 64, double sigma = 0.1) {
  return {{"space", {{"type", "grid"}, {"lo", {1.0}}, {"hi", {2.0}}, {"cells", {cells}}}},
          {"kernel", {{"variant", "gaussian"}, {"sigma", sigma}}},
          {"fitness",
           {{"family", "beverton_holt"}, {"a", {{"slope", {1.0}}}}, {"c", 1.0}, {"b", 0.5}, {"floor", 0.2}}},
          {"initial", {{"type", "cosine"}, {"amplitude", 0.5}, {"mass", 1.0}}},
          {"solver", "rk4"},
          {"T", 1.0},
          {"dt", 1e-3}};
}

}  // namespace evomeasure::reference

#endif  // EVOMEASURE_REFERENCE_HPP
