#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "evomeasure/flat_metric.hpp"
#include "evomeasure/measure.hpp"

using namespace evomeasure;

namespace {

// Independent oracle: the flat norm as the primal LP
//   max sum nu_i f_i  s.t.  |f_i| <= 1,  f_i - f_j <= d_ij,
// solved by a dense tableau simplex with Bland's rule after the shift
// g = f + 1 (the origin is then feasible).
double flat_norm_lp(const std::vector<double>& nu, const std::vector<std::vector<double>>& d) {
  const std::size_t n = nu.size();
  std::vector<std::vector<double>> rows;
  std::vector<double> rhs;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> r(n, 0.0);
    r[i] = 1.0;
    rows.push_back(r);
    rhs.push_back(2.0);
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      std::vector<double> r(n, 0.0);
      r[i] = 1.0;
      r[j] = -1.0;
      rows.push_back(r);
      rhs.push_back(d[i][j]);
    }
  const std::size_t m = rows.size();
  // tableau: m constraint rows + objective row, columns n vars + m slacks + rhs
  const std::size_t cols = n + m + 1;
  std::vector<std::vector<double>> t(m + 1, std::vector<double>(cols, 0.0));
  std::vector<std::size_t> basis(m);
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) t[r][c] = rows[r][c];
    t[r][n + r] = 1.0;
    t[r][cols - 1] = rhs[r];
    basis[r] = n + r;
  }
  for (std::size_t c = 0; c < n; ++c) t[m][c] = -nu[c];
  for (int iter = 0; iter < 100000; ++iter) {
    std::size_t enter = cols;
    for (std::size_t c = 0; c + 1 < cols; ++c)
      if (t[m][c] < -1e-14) {
        enter = c;
        break;
      }
    if (enter == cols) break;
    std::size_t leave = m;
    double best = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
      if (t[r][enter] > 1e-14) {
        const double ratio = t[r][cols - 1] / t[r][enter];
        if (leave == m || ratio < best - 1e-15 || (std::abs(ratio - best) <= 1e-15 && basis[r] < basis[leave])) {
          best = ratio;
          leave = r;
        }
      }
    }
    if (leave == m) return INFINITY;
    const double p = t[leave][enter];
    for (double& x : t[leave]) x /= p;
    for (std::size_t r = 0; r <= m; ++r) {
      if (r == leave || t[r][enter] == 0.0) continue;
      const double f = t[r][enter];
      for (std::size_t c = 0; c < cols; ++c) t[r][c] -= f * t[leave][c];
    }
    basis[leave] = enter;
  }
  double shift = 0.0;
  for (double x : nu) shift += x;
  return t[m][cols - 1] - shift;
}

std::vector<std::vector<double>> distances(const StrategySpace& s) {
  std::vector<std::vector<double>> d(s.size(), std::vector<double>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) d[i][j] = s.distance(i, j);
  return d;
}

// W1 between equal-mass measures on the line: integral of |F1 - F2|.
double w1_cdf(const std::vector<double>& x, const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<std::size_t> idx(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return x[i] < x[j]; });
  double F = 0.0, total = 0.0;
  for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
    F += a[idx[k]] - b[idx[k]];
    total += std::abs(F) * (x[idx[k + 1]] - x[idx[k]]);
  }
  return total;
}

SpacePtr random_atoms(std::mt19937_64& rng, std::size_t n, std::size_t dim, double width) {
  std::uniform_real_distribution<double> U(0.0, width);
  std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
  for (auto& p : pts)
    for (double& c : p) c = U(rng);
  return StrategySpace::atoms(pts);
}

MeasureVec random_measure(const SpacePtr& s, std::mt19937_64& rng, bool signed_weights) {
  std::uniform_real_distribution<double> U(signed_weights ? -1.0 : 0.0, 1.0);
  std::vector<double> w(s->size());
  for (double& x : w) x = U(rng);
  return {s, w};
}

}  // namespace

TEST(FlatNorm, ClosedFormsForAtoms) {
  auto s = StrategySpace::atoms({{0.0}, {0.3}, {5.0}});
  EXPECT_NEAR(bl_distance(MeasureVec::atom(s, 0), MeasureVec::atom(s, 1)), 0.3, 1e-14);
  EXPECT_NEAR(bl_distance(MeasureVec::atom(s, 0), MeasureVec::atom(s, 2)), 2.0, 1e-14);
  EXPECT_NEAR(bl_distance(MeasureVec::atom(s, 0, 2.5), MeasureVec::zero(s)), 2.5, 1e-14);
  EXPECT_NEAR(bl_distance(MeasureVec::atom(s, 0, -1.5), MeasureVec::zero(s)), 1.5, 1e-14);
  // a unit atom moved by 0.3 while 0.5 extra mass appears far away
  MeasureVec m1(s, {1.0, 0.0, 0.0}), m2(s, {0.0, 1.0, 0.5});
  EXPECT_NEAR(bl_distance(m1, m2), 0.8, 1e-14);
}

TEST(FlatNorm, ZeroMeasureHasZeroNorm) {
  auto s = StrategySpace::grid_1d(0.0, 1.0, 5);
  const auto r = flat_norm(MeasureVec::zero(s));
  EXPECT_EQ(r.value, 0.0);
}

TEST(FlatNorm, NormalizedStateAgainstAtom) {
  // Shares summing to 1 only up to rounding used to leave a stranded excess.
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  auto s = StrategySpace::grid_1d(0.0, 1.0, 128);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> w(128);
    double t = 0.0;
    for (double& x : w) t += (x = U(rng) * U(rng));
    for (double& x : w) x /= t;
    const auto d = bl_distance(MeasureVec(s, w), MeasureVec::atom(s, 38));
    EXPECT_GT(d, 0.0);
    EXPECT_LE(d, 1.0 + 1e-12);
  }
}

TEST(FlatNorm, MismatchedSpacesThrow) {
  auto a = StrategySpace::grid_1d(0.0, 1.0, 3);
  auto b = StrategySpace::grid_1d(0.0, 1.0, 4);
  EXPECT_THROW(bl_distance(MeasureVec::zero(a), MeasureVec::zero(b)), UsageError);
  EXPECT_NO_THROW(bl_distance_merged(MeasureVec::atom(a, 0), MeasureVec::atom(b, 0)));
}

TEST(FlatNorm, MatchesSimplexOracle1d) {
  std::mt19937_64 rng(101);
  for (int rep = 0; rep < 60; ++rep) {
    auto s = random_atoms(rng, 2 + rep % 6, 1, rep % 3 == 0 ? 6.0 : 1.5);
    const auto nu = random_measure(s, rng, true);
    const double lp = flat_norm_lp(std::vector<double>(nu.weights().begin(), nu.weights().end()), distances(*s));
    EXPECT_NEAR(flat_norm(nu).value, lp, 1e-10) << "rep " << rep;
  }
}

TEST(FlatNorm, MatchesSimplexOracle2d) {
  std::mt19937_64 rng(202);
  for (int rep = 0; rep < 40; ++rep) {
    auto s = random_atoms(rng, 2 + rep % 5, 2, rep % 2 ? 3.0 : 1.0);
    const auto nu = random_measure(s, rng, true);
    const double lp = flat_norm_lp(std::vector<double>(nu.weights().begin(), nu.weights().end()), distances(*s));
    EXPECT_NEAR(flat_norm(nu).value, lp, 1e-10) << "rep " << rep;
  }
}

TEST(FlatNorm, WitnessIsFeasibleAndOptimal) {
  std::mt19937_64 rng(303);
  for (int rep = 0; rep < 80; ++rep) {
    auto s = rep % 2 ? StrategySpace::grid_1d(0.0, 4.0, 10 + rep % 7) : random_atoms(rng, 6, 2, 2.5);
    auto nu = random_measure(s, rng, true);
    if (rep % 3 == 0) nu.weights_mut()[0] = 0.0;  // point off the support
    const auto r = flat_norm(nu);
    double pairing = 0.0;
    for (std::size_t i = 0; i < s->size(); ++i) {
      EXPECT_LE(std::abs(r.witness[i]), 1.0 + 1e-12);
      pairing += r.witness[i] * nu[i];
      for (std::size_t j = 0; j < s->size(); ++j)
        EXPECT_LE(r.witness[i] - r.witness[j], s->distance(i, j) + 1e-12);
    }
    EXPECT_NEAR(pairing, r.value, 1e-10 * std::max(1.0, r.value));
  }
}

TEST(FlatNorm, EqualsWassersteinWhenSupportIsSmall) {
  std::mt19937_64 rng(404);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 2 + rep % 9;
    auto s = random_atoms(rng, n, 1, 1.0);
    std::vector<double> a(n), b(n);
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = U(rng);
      b[i] = U(rng);
      sa += a[i];
      sb += b[i];
    }
    for (std::size_t i = 0; i < n; ++i) b[i] *= sa / sb;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = s->point(i)[0];
    EXPECT_NEAR(bl_distance(MeasureVec(s, a), MeasureVec(s, b)), w1_cdf(x, a, b), 1e-10);
  }
}

TEST(FlatNorm, MetricAxiomsOnRandomPairs) {
  std::mt19937_64 rng(505);
  for (int rep = 0; rep < 200; ++rep) {
    auto s = rep % 4 == 0 ? random_atoms(rng, 5, 2, 2.0) : StrategySpace::grid_1d(0.0, 3.0, 8 + rep % 9);
    const auto a = random_measure(s, rng, false), b = random_measure(s, rng, false), c = random_measure(s, rng, false);
    const double ab = bl_distance(a, b), ba = bl_distance(b, a);
    EXPECT_EQ(bl_distance(a, a), 0.0);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_GT(ab, 0.0);
    EXPECT_LE(ab, bl_distance(a, c) + bl_distance(c, b) + 1e-12);
    EXPECT_LE(ab, tv_norm(add_scaled(a, -1.0, b)) + 1e-12);
  }
}

TEST(FlatNorm, GridNeighbourArcsAgreeWithCompleteGraph) {
  // On the line a 1-D grid uses neighbour arcs only; the same points as a
  // 2-D atom set (second coordinate 0) use the complete graph.
  std::mt19937_64 rng(606);
  for (int rep = 0; rep < 20; ++rep) {
    auto line = StrategySpace::grid_1d(0.0, 5.0, 12);
    std::vector<std::vector<double>> pts;
    for (std::size_t i = 0; i < line->size(); ++i) pts.push_back({line->point(i)[0], 0.0});
    auto plane = StrategySpace::atoms(pts);
    auto nu = random_measure(line, rng, true);
    MeasureVec nu2(plane, std::vector<double>(nu.weights().begin(), nu.weights().end()));
    EXPECT_NEAR(flat_norm(nu).value, flat_norm(nu2).value, 1e-11);
  }
}
