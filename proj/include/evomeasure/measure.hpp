#ifndef EVOMEASURE_MEASURE_HPP
#define EVOMEASURE_MEASURE_HPP

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evomeasure/errors.hpp"

namespace evomeasure {

/// Axis-aligned box [lo_d, hi_d] per coordinate.
struct Bounds {
  std::vector<double> lo;
  std::vector<double> hi;
};

/// A discretized compact strategy space: an ordered, finite set of distinct
/// support points in R^1 or R^2, each carrying a positive cell volume.
///
/// Grids store cell centers with volume h (or h1*h2); atom sets default to
/// unit volumes. Distances are Euclidean.
class StrategySpace {
 public:
  static std::shared_ptr<const StrategySpace> grid_1d(double lo, double hi, std::size_t cells) {
    if (!(hi > lo) || cells == 0) throw UsageError("grid_1d: need hi > lo and cells > 0");
    const double h = (hi - lo) / static_cast<double>(cells);
    std::vector<double> coords(cells);
    for (std::size_t i = 0; i < cells; ++i) coords[i] = lo + (static_cast<double>(i) + 0.5) * h;
    auto s = std::shared_ptr<StrategySpace>(new StrategySpace(1, std::move(coords),
                                                              std::vector<double>(cells, h),
                                                              Bounds{{lo}, {hi}}));
    s->shape_ = {cells};
    s->validate();
    return s;
  }

  static std::shared_ptr<const StrategySpace> grid_2d(double lo1, double hi1, std::size_t n1,
                                                      double lo2, double hi2, std::size_t n2) {
    if (!(hi1 > lo1) || !(hi2 > lo2) || n1 == 0 || n2 == 0)
      throw UsageError("grid_2d: need hi > lo and positive cell counts");
    const double h1 = (hi1 - lo1) / static_cast<double>(n1);
    const double h2 = (hi2 - lo2) / static_cast<double>(n2);
    std::vector<double> coords;
    coords.reserve(2 * n1 * n2);
    // Row-major with the first coordinate varying slowest.
    for (std::size_t i = 0; i < n1; ++i) {
      for (std::size_t j = 0; j < n2; ++j) {
        coords.push_back(lo1 + (static_cast<double>(i) + 0.5) * h1);
        coords.push_back(lo2 + (static_cast<double>(j) + 0.5) * h2);
      }
    }
    auto s = std::shared_ptr<StrategySpace>(new StrategySpace(
        2, std::move(coords), std::vector<double>(n1 * n2, h1 * h2), Bounds{{lo1, lo2}, {hi1, hi2}}));
    s->shape_ = {n1, n2};
    s->validate();
    return s;
  }

  /// Explicit point set. `points` holds one coordinate vector per point;
  /// empty `volumes` means unit volume per atom; empty bounds means the
  /// bounding box of the points.
  static std::shared_ptr<const StrategySpace> atoms(const std::vector<std::vector<double>>& points,
                                                    std::vector<double> volumes = {},
                                                    Bounds bounds = {}) {
    if (points.empty()) throw UsageError("atoms: point set must be nonempty");
    const std::size_t dim = points.front().size();
    if (dim != 1 && dim != 2) throw UsageError("atoms: dimension must be 1 or 2");
    std::vector<double> coords;
    coords.reserve(dim * points.size());
    for (const auto& p : points) {
      if (p.size() != dim) throw UsageError("atoms: inconsistent point dimension");
      coords.insert(coords.end(), p.begin(), p.end());
    }
    if (volumes.empty()) volumes.assign(points.size(), 1.0);
    if (bounds.lo.empty()) {
      bounds.lo.assign(dim, std::numeric_limits<double>::infinity());
      bounds.hi.assign(dim, -std::numeric_limits<double>::infinity());
      for (const auto& p : points) {
        for (std::size_t d = 0; d < dim; ++d) {
          bounds.lo[d] = std::min(bounds.lo[d], p[d]);
          bounds.hi[d] = std::max(bounds.hi[d], p[d]);
        }
      }
    }
    auto s = std::shared_ptr<StrategySpace>(
        new StrategySpace(dim, std::move(coords), std::move(volumes), std::move(bounds)));
    s->validate();
    return s;
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return volumes_.size(); }
  std::span<const double> point(std::size_t i) const { return {coords_.data() + i * dim_, dim_}; }
  std::span<const double> coords() const noexcept { return coords_; }
  double cell_volume(std::size_t i) const { return volumes_[i]; }
  std::span<const double> cell_volumes() const noexcept { return volumes_; }
  const Bounds& bounds() const noexcept { return bounds_; }
  /// Grid cell counts per axis; empty for explicit atom sets.
  const std::vector<std::size_t>& grid_shape() const noexcept { return shape_; }
  bool is_grid() const noexcept { return !shape_.empty(); }

  double total_volume() const { return std::accumulate(volumes_.begin(), volumes_.end(), 0.0); }

  double distance(std::size_t i, std::size_t j) const {
    double s = 0.0;
    for (std::size_t d = 0; d < dim_; ++d) {
      const double diff = coords_[i * dim_ + d] - coords_[j * dim_ + d];
      s += diff * diff;
    }
    return std::sqrt(s);
  }

  double diameter() const {
    double best = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j) best = std::max(best, distance(i, j));
    return best;
  }

  /// Index of the point with exactly these coordinates, or size() if absent.
  std::size_t find(std::span<const double> q) const {
    for (std::size_t i = 0; i < size(); ++i) {
      if (std::equal(q.begin(), q.end(), coords_.begin() + static_cast<std::ptrdiff_t>(i * dim_)))
        return i;
    }
    return size();
  }

  /// Structural equality: same dimension, identical coordinates and volumes.
  bool same_as(const StrategySpace& other) const noexcept {
    return this == &other ||
           (dim_ == other.dim_ && coords_ == other.coords_ && volumes_ == other.volumes_);
  }

 private:
  StrategySpace(std::size_t dim, std::vector<double> coords, std::vector<double> volumes,
                Bounds bounds)
      : dim_(dim), coords_(std::move(coords)), volumes_(std::move(volumes)), bounds_(std::move(bounds)) {}

  void validate() const {
    const std::size_t n = size();
    if (n == 0) throw UsageError("StrategySpace: points must be nonempty");
    if (coords_.size() != n * dim_) throw UsageError("StrategySpace: coordinate/volume size mismatch");
    if (bounds_.lo.size() != dim_ || bounds_.hi.size() != dim_)
      throw UsageError("StrategySpace: bounds dimension mismatch");
    for (std::size_t i = 0; i < n; ++i) {
      if (!(volumes_[i] > 0.0) || !std::isfinite(volumes_[i]))
        throw UsageError("StrategySpace: cell volumes must be positive and finite");
      for (std::size_t d = 0; d < dim_; ++d) {
        const double x = coords_[i * dim_ + d];
        if (!std::isfinite(x) || x < bounds_.lo[d] || x > bounds_.hi[d])
          throw UsageError("StrategySpace: point " + std::to_string(i) + " outside bounds");
      }
    }
    // Pairwise distinct, checked on lexicographically sorted points.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto key = [&](std::size_t i) { return point(i); };
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      auto pa = key(a), pb = key(b);
      return std::lexicographical_compare(pa.begin(), pa.end(), pb.begin(), pb.end());
    });
    for (std::size_t k = 1; k < n; ++k) {
      auto pa = key(order[k - 1]), pb = key(order[k]);
      if (std::equal(pa.begin(), pa.end(), pb.begin()))
        throw UsageError("StrategySpace: duplicate support point");
    }
  }

  std::size_t dim_;
  std::vector<double> coords_;
  std::vector<double> volumes_;
  Bounds bounds_;
  std::vector<std::size_t> shape_;
};

using SpacePtr = std::shared_ptr<const StrategySpace>;

/// A finite signed measure on a StrategySpace: weights[i] = mu(cell_i).
/// Densities are stored pre-multiplied by the cell volume.
class MeasureVec {
 public:
  MeasureVec(SpacePtr space, std::vector<double> weights)
      : space_(std::move(space)), weights_(std::move(weights)) {
    if (!space_) throw UsageError("MeasureVec: null space");
    if (weights_.size() != space_->size())
      throw UsageError("MeasureVec: weight count " + std::to_string(weights_.size()) +
                       " does not match space size " + std::to_string(space_->size()));
  }

  static MeasureVec zero(SpacePtr space) {
    const std::size_t n = space->size();
    return {std::move(space), std::vector<double>(n, 0.0)};
  }

  static MeasureVec atom(SpacePtr space, std::size_t i, double mass = 1.0) {
    if (i >= space->size()) throw UsageError("MeasureVec::atom: index out of range");
    auto m = zero(std::move(space));
    m.weights_[i] = mass;
    return m;
  }

  /// Samples a density at the support points and folds in cell volumes.
  template <class Density>
  static MeasureVec from_density(SpacePtr space, Density&& density) {
    std::vector<double> w(space->size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = density(space->point(i)) * space->cell_volume(i);
    return {std::move(space), std::move(w)};
  }

  const SpacePtr& space() const noexcept { return space_; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::span<double> weights_mut() noexcept { return weights_; }
  std::size_t size() const noexcept { return weights_.size(); }
  double operator[](std::size_t i) const { return weights_[i]; }

  bool shares_space(const MeasureVec& other) const noexcept {
    return space_->same_as(*other.space_);
  }

 private:
  SpacePtr space_;
  std::vector<double> weights_;
};

inline double total_mass(const MeasureVec& m) {
  double s = 0.0;
  for (double w : m.weights()) s += w;
  return s;
}

inline double tv_norm(const MeasureVec& m) {
  double s = 0.0;
  for (double w : m.weights()) s += std::abs(w);
  return s;
}

/// Absolute slack for nonnegativity flags.
inline double tol_neg(const MeasureVec& m) { return 1e-12 * std::max(1.0, tv_norm(m)); }

inline bool is_nonnegative(const MeasureVec& m) {
  const double tol = tol_neg(m);
  return std::all_of(m.weights().begin(), m.weights().end(), [tol](double w) { return w >= -tol; });
}

/// <m, f> for f given by its values at the support points.
inline double pair(const MeasureVec& m, std::span<const double> f_values) {
  if (f_values.size() != m.size()) throw UsageError("pair: test function size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += f_values[i] * m[i];
  return s;
}

/// <m, f> for a callable f(point) -> double.
template <class F>
  requires std::invocable<F&, std::span<const double>>
double pair(const MeasureVec& m, F&& f) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += f(m.space()->point(i)) * m[i];
  return s;
}

/// m1 + c * m2.
inline MeasureVec add_scaled(const MeasureVec& m1, double c, const MeasureVec& m2) {
  if (!m1.shares_space(m2)) throw UsageError("add_scaled: measures live on different spaces");
  std::vector<double> w(m1.weights().begin(), m1.weights().end());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] += c * m2[i];
  return {m1.space(), std::move(w)};
}

inline MeasureVec scaled(const MeasureVec& m, double c) {
  std::vector<double> w(m.weights().begin(), m.weights().end());
  for (double& x : w) x *= c;
  return {m.space(), std::move(w)};
}

/// Re-expresses both measures on the union of their supports, zero-filling
/// weights at points a measure does not carry. Points keep the order of m1
/// followed by the new points of m2.
inline std::pair<MeasureVec, MeasureVec> merge_supports(const MeasureVec& m1, const MeasureVec& m2) {
  if (m1.shares_space(m2)) return {m1, m2};
  const auto& s1 = *m1.space();
  const auto& s2 = *m2.space();
  if (s1.dim() != s2.dim()) throw UsageError("merge_supports: dimension mismatch");
  const std::size_t dim = s1.dim();

  std::map<std::vector<double>, std::size_t> index;
  std::vector<std::vector<double>> points;
  std::vector<double> volumes;
  auto add = [&](const StrategySpace& s, std::size_t i) {
    auto p = s.point(i);
    std::vector<double> key(p.begin(), p.end());
    auto [it, inserted] = index.emplace(key, points.size());
    if (inserted) {
      points.push_back(std::move(key));
      volumes.push_back(s.cell_volume(i));
    }
    return it->second;
  };
  std::vector<std::size_t> map1(s1.size()), map2(s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) map1[i] = add(s1, i);
  for (std::size_t i = 0; i < s2.size(); ++i) map2[i] = add(s2, i);

  Bounds b{std::vector<double>(dim), std::vector<double>(dim)};
  for (std::size_t d = 0; d < dim; ++d) {
    b.lo[d] = std::min(s1.bounds().lo[d], s2.bounds().lo[d]);
    b.hi[d] = std::max(s1.bounds().hi[d], s2.bounds().hi[d]);
  }
  auto merged = StrategySpace::atoms(points, volumes, b);
  std::vector<double> w1(merged->size(), 0.0), w2(merged->size(), 0.0);
  for (std::size_t i = 0; i < s1.size(); ++i) w1[map1[i]] += m1[i];
  for (std::size_t i = 0; i < s2.size(); ++i) w2[map2[i]] += m2[i];
  return {MeasureVec(merged, std::move(w1)), MeasureVec(merged, std::move(w2))};
}

}  // namespace evomeasure

#endif  // EVOMEASURE_MEASURE_HPP
