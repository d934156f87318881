#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "evomeasure/fitness.hpp"

using namespace evomeasure;
using nlohmann::json;

namespace {

SpacePtr line(std::size_t n = 5) { return StrategySpace::grid_1d(1.0, 2.0, n); }

// Root of g(b) = (1 - e^{-B2 b}) u + 2 B1 C1 b - a by Newton from 0.
double ball_root_newton(double B1, double B2, double u, double a, double C1) {
  double b = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double g = (1.0 - std::exp(-B2 * b)) * u + 2.0 * B1 * C1 * b - a;
    const double dg = B2 * std::exp(-B2 * b) * u + 2.0 * B1 * C1;
    b -= g / dg;
  }
  return b;
}

}  // namespace

TEST(Fitness, FamilyFormulas) {
  auto s = line(3);
  const auto bh = FitnessPair::beverton_holt(s, {2.0}, {0.5}, {3.0}, 0.1);
  EXPECT_DOUBLE_EQ(bh.f1(2.0, 0), 2.0 / 2.0);
  EXPECT_DOUBLE_EQ(bh.f2(2.0, 0), 0.1 + 6.0);
  const auto rk = FitnessPair::ricker(s, {2.0}, {0.5}, {3.0}, 0.1);
  EXPECT_DOUBLE_EQ(rk.f1(2.0, 1), 2.0 * std::exp(-1.0));
  const auto lg = FitnessPair::logistic(s, {1.5}, {2.0});
  EXPECT_DOUBLE_EQ(lg.f2(0.0, 2), FitnessPair::kDefaultFloor);
  const auto cs = FitnessPair::constant(s, {1.0, 2.0, 3.0}, {0.5});
  EXPECT_DOUBLE_EQ(cs.f1(100.0, 2), 3.0);
  EXPECT_DOUBLE_EQ(cs.f2(100.0, 2), 0.5);
  EXPECT_THROW(FitnessPair::constant(s, {1.0, 2.0}, {0.5}), UsageError);
}

TEST(Fitness, NegativeRateIsRejectedAtEvaluation) {
  auto s = line(2);
  const auto bad = FitnessPair::constant(s, {-1.0}, {0.0});
  EXPECT_THROW(bad.f1(0.0, 0), ConfigError);
}

TEST(Fitness, TruncationClampsAndIsIdempotent) {
  auto s = line(4);
  const auto fp = FitnessPair::ricker(s, {1.0, 2.0, 3.0, 4.0}, {0.7}, {0.3}, 0.05);
  const auto t = fp.truncate(2.0);
  const auto tt = t.truncate(2.0);
  for (std::size_t k = 0; k <= 100; ++k) {
    const double X = 5.0 * k / 100.0;
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(t.f1(X, i), tt.f1(X, i));
      EXPECT_EQ(t.f2(X, i), tt.f2(X, i));
      EXPECT_EQ(t.f1(X, i), fp.f1(std::min(X, 2.0), i));
    }
  }
  EXPECT_EQ(t.f1(-1.0, 0), fp.f1(0.0, 0));
  EXPECT_EQ(*fp.truncate(3.0).truncate(2.0).truncation(), 2.0);
}

TEST(Assumptions, RickerWithFloorPasses) {
  auto s = line();
  const auto fp = FitnessPair::ricker(s, {1.0}, {0.5}, {0.3}, 0.02);
  const auto r = verify_assumptions(fp, 10.0);
  EXPECT_TRUE(r.pass());
  EXPECT_DOUBLE_EQ(r.varpi, 0.02);
  EXPECT_EQ(r.lattice_size, 101u);
}

TEST(Assumptions, UnflooredDensityMortalityFailsA2) {
  auto s = line();
  const auto fp = FitnessPair::logistic(s, {1.0}, {1.0}, 0.0);
  const auto r = verify_assumptions(fp, 10.0);
  EXPECT_FALSE(r.a2_ok);
  EXPECT_EQ(r.varpi, 0.0);
  ASSERT_FALSE(r.violations.empty());
  EXPECT_EQ(r.violations.back().kind, "varpi");
}

TEST(Assumptions, IncreasingBirthFailsA1WithWitness) {
  auto s = line(3);
  const auto fp = FitnessPair::custom(
      s, [](double X, auto q) { return q[0] * (1.0 + X); }, [](double X, auto) { return 0.1 + X; });
  const auto r = verify_assumptions(fp, 4.0);
  EXPECT_FALSE(r.a1_ok);
  EXPECT_TRUE(r.a2_ok);
  ASSERT_EQ(r.violations.size(), 3u);
  EXPECT_EQ(r.violations[0].kind, "f1_increasing");
  EXPECT_GT(r.violations[0].X, 0.0);
}

TEST(Assumptions, AverageFitnessIsNotApplicable) {
  const auto fp = FitnessPair::constant(line(), {1.0}, {0.0}).with_average_fitness_mortality();
  const auto r = verify_assumptions(fp, 1.0);
  EXPECT_FALSE(r.applicable);
  EXPECT_FALSE(r.pass());
  EXPECT_THROW(fp.f2(1.0, 0), UsageError);
  EXPECT_THROW(estimate_constants(fp, 1.0, 1.0), UsageError);
  const std::vector<double> w{0.5, 0.0, 0.0, 0.0, 0.5};
  EXPECT_DOUBLE_EQ(fp.average_birth(w, 1.0), 1.0);
}

TEST(Constants, ConstantRatesContractionBound) {
  // f1 = f2 = 1: L1 = L2 = 0, B1 = 1, so the contraction condition reads
  // b < 1 / (2 B1) = 0.5 and 0.9 of it is 0.45.
  const auto fp = FitnessPair::constant(StrategySpace::atoms({{0.0}}), {1.0}, {1.0});
  const auto c = estimate_constants(fp, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(c.L1, 0.0);
  EXPECT_DOUBLE_EQ(c.L2, 0.0);
  EXPECT_DOUBLE_EQ(c.B1, 1.0);
  EXPECT_DOUBLE_EQ(c.C1, 3.0);
  EXPECT_DOUBLE_EQ(c.b_contraction_bound, 0.5);
  EXPECT_DOUBLE_EQ(0.9 * c.b_contraction_bound, 0.45);
  // With the ball condition the binding bound is the root of
  // (1 - e^{-b}) + 6 b = 1, about 0.14427.
  const double root = ball_root_newton(1.0, 1.0, 1.0, 1.0, 3.0);
  EXPECT_NEAR(root, 0.1442750, 1e-7);
  EXPECT_NEAR(c.b_ball_bound, root, 1e-12);
  EXPECT_EQ(c.binding, "ball");
  EXPECT_NEAR(c.b, 0.9 * root, 1e-12);
}

TEST(Constants, LipschitzEstimatesAreSelfConsistent) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(0.1, 2.0);
  auto s = line(9);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> a(9), b(9), cc(9);
    for (std::size_t i = 0; i < 9; ++i) {
      a[i] = U(rng);
      b[i] = U(rng);
      cc[i] = U(rng);
    }
    const auto fp = rep % 2 ? FitnessPair::ricker(s, a, cc, b, 0.01) : FitnessPair::beverton_holt(s, a, cc, b, 0.01);
    const double mass = U(rng);
    const auto c = estimate_constants(fp, mass, std::max(1.0, mass));
    const auto tr = fp.truncate(c.K_tilde);
    for (std::size_t k = 0; k < 101; ++k)
      for (std::size_t l = 0; l < 101; ++l) {
        const double X = c.K_tilde * k / 100.0, Y = c.K_tilde * l / 100.0;
        for (std::size_t i = 0; i < 9; ++i) {
          EXPECT_LE(std::abs(tr.f1(X, i) - tr.f1(Y, i)), c.L1 * std::abs(X - Y) + 1e-9);
          EXPECT_LE(std::abs(tr.f2(X, i) - tr.f2(Y, i)), c.L2 * std::abs(X - Y) + 1e-9);
          EXPECT_LE(tr.f1(X, i), c.B1 + 1e-12);
          EXPECT_LE(tr.f2(X, i), c.B2 + 1e-12);
        }
      }
  }
}

TEST(Constants, WindowHasTenPercentMargin) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> U(0.05, 3.0);
  for (int rep = 0; rep < 100; ++rep) {
    auto s = line(4);
    const auto fp = FitnessPair::beverton_holt(s, {U(rng), U(rng), U(rng), U(rng)}, {U(rng)}, {U(rng)}, 0.01 + U(rng));
    const double u = U(rng), a = std::max(1.0, u) * (0.5 + U(rng));
    const auto c = estimate_constants(fp, u, a);
    EXPECT_GT(c.b, 0.0);
    EXPECT_LE(c.b, 0.9);
    // ball condition with margin
    EXPECT_LT((1.0 - std::exp(-c.B2 * c.b)) * u + 2.0 * c.B1 * c.C1 * c.b, a);
    EXPECT_LE(c.b, 0.9 * c.b_ball_bound * (1.0 + 1e-9));
    // contraction condition with margin, C2 evaluated at the chosen b
    const double denom = 2.0 * c.L2 * c.C1 + 2.0 * c.B1 + 2.0 * c.C2 * c.C1;
    EXPECT_LE(c.b * denom, 0.9 * (1.0 + 1e-9));
    EXPECT_LT(c.kappa(), 1.0);
    EXPECT_DOUBLE_EQ(c.field_lipschitz(2.0), c.B1 + c.B2 + 2.0 * (c.L1 + c.L2));
  }
}

TEST(Constants, RejectsTooSmallTruncation) {
  const auto fp = FitnessPair::constant(line(), {1.0}, {1.0});
  EXPECT_THROW(estimate_constants(fp, 1.0, 1.0, 2.5), UsageError);
  EXPECT_THROW(estimate_constants(fp, 1.0, 0.0), UsageError);
}

TEST(FitnessJson, CoefficientForms) {
  auto s = StrategySpace::grid_1d(0.0, 1.0, 4);
  const auto fp = fitness_from_json(
      json::parse(R"({"family":"logistic","a":{"offset":1,"slope":[1]},
                      "b":{"offset":1,"kink_at":[0.3],"kink_slope":[6]},"floor":0.001})"),
      s);
  for (std::size_t i = 0; i < 4; ++i) {
    const double q = s->point(i)[0];
    EXPECT_DOUBLE_EQ(fp.a()[i], 1.0 + q);
    EXPECT_DOUBLE_EQ(fp.b()[i], 1.0 + 6.0 * std::abs(q - 0.3));
  }
  const auto back = fitness_from_json(fitness_to_json(fp), s);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(back.f2(0.7, i), fp.f2(0.7, i));
  EXPECT_THROW(fitness_from_json(json::parse(R"({"family":"gompertz"})"), s), ConfigError);
  EXPECT_THROW(fitness_from_json(json::parse(R"({"family":"constant","a":[1,2]})"), s), ConfigError);
  EXPECT_TRUE(fitness_from_json(json::parse(R"({"family":"constant","a":1,"mortality":"average_fitness"})"), s)
                  .average_fitness_mortality());
}
