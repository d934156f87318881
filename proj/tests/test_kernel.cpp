#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "evomeasure/kernel.hpp"

using namespace evomeasure;
using nlohmann::json;

namespace {

// Cell masses of the Gaussian centred at x0 truncated to [lo, hi], by
// composite Simpson on `sub` subcells per cell, normalized over Q.
std::vector<double> gaussian_cell_masses(double lo, double hi, std::size_t cells, double x0, double sigma,
                                         std::size_t sub) {
  const double h = (hi - lo) / static_cast<double>(cells);
  auto p = [&](double x) { return std::exp(-(x - x0) * (x - x0) / (2.0 * sigma * sigma)); };
  std::vector<double> m(cells, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    const double a = lo + h * static_cast<double>(i);
    const double g = h / static_cast<double>(sub);
    for (std::size_t k = 0; k < sub; ++k) {
      const double x = a + g * static_cast<double>(k);
      m[i] += g / 6.0 * (p(x) + 4.0 * p(x + 0.5 * g) + p(x + g));
    }
    total += m[i];
  }
  for (double& x : m) x /= total;
  return m;
}

}  // namespace

TEST(Kernel, DiracPushForwardIsIdentity) {
  auto s = StrategySpace::grid_1d(0.0, 1.0, 5);
  auto k = MutationKernel::dirac(s);
  std::vector<double> v{1, 2, 3, 4, 5}, out(5);
  k.push_forward(v, out);
  EXPECT_EQ(out, v);
  EXPECT_EQ(k.entry(2, 2), 1.0);
  EXPECT_EQ(k.entry(2, 3), 0.0);
  EXPECT_DOUBLE_EQ(total_mass(k.apply(4)), 1.0);
}

TEST(Kernel, MatrixValidation) {
  auto s = StrategySpace::atoms({{0.0}, {1.0}});
  EXPECT_NO_THROW(MutationKernel::matrix(s, {{0.25, 0.75}, {1.0, 0.0}}));
  EXPECT_THROW(MutationKernel::matrix(s, {{0.5, 0.6}, {1.0, 0.0}}), UsageError);
  EXPECT_THROW(MutationKernel::matrix(s, {{1.5, -0.5}, {1.0, 0.0}}), UsageError);
  EXPECT_THROW(MutationKernel::matrix(s, {{1.0, 0.0}}), UsageError);
  EXPECT_THROW(MutationKernel::matrix(s, {{1.0}, {1.0, 0.0}}), UsageError);
}

TEST(Kernel, PushForwardConservesMass) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto s = StrategySpace::grid_2d(0.0, 1.0, 6, 0.0, 1.0, 5);
  for (double sigma : {0.05, 0.2, 1.0}) {
    auto k = MutationKernel::gaussian(s, sigma);
    std::vector<double> v(s->size()), out(s->size());
    double sv = 0.0;
    for (double& x : v) sv += (x = U(rng));
    k.push_forward(v, out);
    double so = 0.0;
    for (double x : out) {
      EXPECT_GE(x, 0.0);
      so += x;
    }
    EXPECT_NEAR(so, sv, 1e-12 * sv);
  }
}

TEST(Kernel, RowsAreProbabilities) {
  auto s = StrategySpace::grid_1d(-1.0, 1.0, 33);
  for (const auto& k : {MutationKernel::gaussian(s, 0.1), MutationKernel::uniform(s)}) {
    for (std::size_t j = 0; j < s->size(); ++j) {
      const auto row = k.apply(j);
      EXPECT_TRUE(is_nonnegative(row));
      EXPECT_NEAR(total_mass(row), 1.0, kTolRow);
    }
  }
}

TEST(Kernel, GaussianRowsMatchFineQuadrature) {
  // Midpoint sampling of the density is second order against exact cell
  // masses: error ratio ~4 under halving.
  double prev = 0.0;
  for (std::size_t cells : {16u, 32u, 64u}) {
    auto s = StrategySpace::grid_1d(1.0, 2.0, cells);
    auto k = MutationKernel::gaussian(s, 0.1);
    double worst = 0.0;
    for (std::size_t j = 0; j < cells; ++j) {
      const auto ref = gaussian_cell_masses(1.0, 2.0, cells, s->point(j)[0], 0.1, 4);
      double tv = 0.0;
      for (std::size_t i = 0; i < cells; ++i) tv += std::abs(k.entry(j, i) - ref[i]);
      worst = std::max(worst, tv);
    }
    if (prev > 0.0) {
      EXPECT_GT(prev / worst, 3.5) << cells;
    }
    prev = worst;
  }
  EXPECT_LT(prev, 2e-3);
}

TEST(Kernel, DensityFallsBackToDiracOnEmptyRow) {
  auto s = StrategySpace::grid_1d(0.0, 1.0, 4);
  auto k = MutationKernel::from_density([](auto q, auto qh) { return qh[0] > 0.5 ? 0.0 : 1.0 + q[0]; }, s);
  EXPECT_EQ(k.entry(3, 3), 1.0);
  EXPECT_EQ(k.entry(3, 0), 0.0);
  EXPECT_NEAR(total_mass(k.apply(0)), 1.0, 1e-15);
  EXPECT_THROW(MutationKernel::from_density([](auto, auto) { return -1.0; }, s), UsageError);
}

TEST(Kernel, ContinuityModulus) {
  auto s = StrategySpace::grid_1d(0.0, 1.0, 16);
  // Dirac rows: bl(delta_x, delta_y) = |x - y| on a unit interval.
  EXPECT_NEAR(continuity_modulus(MutationKernel::dirac(s)), 1.0, 1e-12);
  EXPECT_NEAR(continuity_modulus(MutationKernel::uniform(s)), 0.0, 1e-12);
  const double g = continuity_modulus(MutationKernel::gaussian(s, 0.2));
  EXPECT_GT(g, 0.0);
  EXPECT_LE(g, 1.0 + 1e-12);
}

TEST(Kernel, JsonRoundTrip) {
  auto s = StrategySpace::atoms({{0.0}, {1.0}, {2.0}});
  const auto m = MutationKernel::matrix(s, {{0.5, 0.5, 0.0}, {0.0, 1.0, 0.0}, {0.2, 0.3, 0.5}});
  const auto back = kernel_from_json(json::parse(kernel_to_json(m).dump()), s);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(back.entry(j, i), m.entry(j, i));
  const auto g = kernel_from_json(json::parse(R"({"variant":"gaussian","sigma":0.3})"), s);
  EXPECT_EQ(g.sigma(), 0.3);
  EXPECT_THROW(kernel_from_json(json::parse(R"({"variant":"levy"})"), s), ConfigError);
  EXPECT_THROW(kernel_from_json(json::parse(R"({"variant":"gaussian","sigma":-1})"), s), ConfigError);
}
