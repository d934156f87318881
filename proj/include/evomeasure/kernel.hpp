#ifndef EVOMEASURE_KERNEL_HPP
#define EVOMEASURE_KERNEL_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evomeasure/errors.hpp"
#include "evomeasure/flat_metric.hpp"
#include "evomeasure/measure.hpp"

namespace evomeasure {

/// Row sums of a kernel must be within this of 1.
inline constexpr double kTolRow = 1e-10;

/// Offspring distribution q^ -> gamma(q^) in P(Q), one probability row per
/// source point. Matrix entry (j, i) is gamma(q^_j)({q_i}).
class MutationKernel {
 public:
  enum class Variant { Dirac, Matrix, Density };
  using DensityFn = std::function<double(std::span<const double> q, std::span<const double> q_hat)>;

  /// Faithful replication: gamma(q^) = delta_{q^}.
  static MutationKernel dirac(SpacePtr space) {
    return MutationKernel(Variant::Dirac, std::move(space), {}, "dirac");
  }

  static MutationKernel matrix(SpacePtr space, const std::vector<std::vector<double>>& rows) {
    const std::size_t n = space->size();
    if (rows.size() != n) throw UsageError("kernel matrix: expected " + std::to_string(n) + " rows");
    std::vector<double> flat;
    flat.reserve(n * n);
    for (std::size_t j = 0; j < n; ++j) {
      if (rows[j].size() != n) throw UsageError("kernel matrix: row " + std::to_string(j) + " has wrong length");
      double sum = 0.0;
      for (double x : rows[j]) {
        if (!(x >= 0.0) || !std::isfinite(x))
          throw UsageError("kernel matrix: row " + std::to_string(j) + " has a negative or non-finite entry");
        sum += x;
      }
      if (std::abs(sum - 1.0) > kTolRow)
        throw UsageError("kernel matrix: row " + std::to_string(j) + " sums to " + std::to_string(sum));
      flat.insert(flat.end(), rows[j].begin(), rows[j].end());
    }
    return MutationKernel(Variant::Matrix, std::move(space), std::move(flat), "matrix");
  }

  /// Discretizes a density: row j is p(q_i, q^_j) * vol_i renormalized to
  /// unit mass; all-zero rows fall back to the Dirac row.
  static MutationKernel from_density(const DensityFn& p, SpacePtr space, std::string label = "density") {
    const std::size_t n = space->size();
    std::vector<double> flat(n * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      double* row = flat.data() + j * n;
      for (std::size_t i = 0; i < n; ++i) {
        const double v = p(space->point(i), space->point(j));
        if (!(v >= 0.0) || !std::isfinite(v))
          throw UsageError("from_density: density is negative or non-finite at a sampled node");
        row[i] = v * space->cell_volume(i);
        sum += row[i];
      }
      if (sum > 0.0) {
        for (std::size_t i = 0; i < n; ++i) row[i] /= sum;
      } else {
        row[j] = 1.0;
      }
    }
    MutationKernel k(Variant::Density, std::move(space), std::move(flat), std::move(label));
    k.density_ = p;
    return k;
  }

  /// Gaussian offspring density of width sigma truncated to Q.
  static MutationKernel gaussian(SpacePtr space, double sigma) {
    if (!(sigma > 0.0)) throw UsageError("gaussian kernel: sigma must be positive");
    const double inv = 1.0 / (2.0 * sigma * sigma);
    auto p = [inv](std::span<const double> q, std::span<const double> qh) {
      double r2 = 0.0;
      for (std::size_t d = 0; d < q.size(); ++d) r2 += (q[d] - qh[d]) * (q[d] - qh[d]);
      return std::exp(-r2 * inv);
    };
    auto k = from_density(p, std::move(space), "gaussian");
    k.sigma_ = sigma;
    return k;
  }

  /// Offspring spread uniformly over Q regardless of parent.
  static MutationKernel uniform(SpacePtr space) {
    return from_density([](auto, auto) { return 1.0; }, std::move(space), "uniform");
  }

  Variant variant() const noexcept { return variant_; }
  bool is_dirac() const noexcept { return variant_ == Variant::Dirac; }
  const SpacePtr& space() const noexcept { return space_; }
  std::size_t size() const noexcept { return space_->size(); }
  const std::string& label() const noexcept { return label_; }
  double sigma() const noexcept { return sigma_; }
  const DensityFn& density() const noexcept { return density_; }

  /// gamma(q^_j)({q_i}).
  double entry(std::size_t j, std::size_t i) const {
    if (is_dirac()) return i == j ? 1.0 : 0.0;
    return rows_[j * size() + i];
  }

  /// gamma(q^_j) as a probability measure.
  MeasureVec apply(std::size_t j) const {
    if (j >= size()) throw UsageError("kernel apply: source index " + std::to_string(j) + " out of range");
    if (is_dirac()) return MeasureVec::atom(space_, j);
    const double* row = rows_.data() + j * size();
    return {space_, std::vector<double>(row, row + size())};
  }

  /// out[i] = sum_j gamma(q^_j)({q_i}) * v[j]: redistributes per-source
  /// offspring counts v over targets.
  void push_forward(std::span<const double> v, std::span<double> out) const {
    const std::size_t n = size();
    if (is_dirac()) {
      std::copy(v.begin(), v.end(), out.begin());
      return;
    }
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double vj = v[j];
      if (vj == 0.0) continue;
      const double* row = rows_.data() + j * n;
      for (std::size_t i = 0; i < n; ++i) out[i] += row[i] * vj;
    }
  }

  /// Dense row-major copy (row = source).
  std::vector<std::vector<double>> dense_rows() const {
    std::vector<std::vector<double>> out(size(), std::vector<double>(size(), 0.0));
    for (std::size_t j = 0; j < size(); ++j)
      for (std::size_t i = 0; i < size(); ++i) out[j][i] = entry(j, i);
    return out;
  }

 private:
  MutationKernel(Variant v, SpacePtr space, std::vector<double> rows, std::string label)
      : variant_(v), space_(std::move(space)), rows_(std::move(rows)), label_(std::move(label)) {}

  Variant variant_;
  SpacePtr space_;
  std::vector<double> rows_;
  std::string label_;
  double sigma_ = 0.0;
  DensityFn density_;
};

/// Discrete Lipschitz estimate of q^ -> gamma(q^) into (P(Q), flat metric):
/// the largest bl_distance(row_j, row_j') / d(q^_j, q^_j') over
/// nearest-neighbour source pairs.
inline double continuity_modulus(const MutationKernel& k) {
  const auto& s = *k.space();
  const std::size_t n = s.size();
  if (n < 2) return 0.0;
  double best = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double nearest = std::numeric_limits<double>::infinity();
    for (std::size_t jj = 0; jj < n; ++jj)
      if (jj != j) nearest = std::min(nearest, s.distance(j, jj));
    const auto row_j = k.apply(j);
    for (std::size_t jj = j + 1; jj < n; ++jj) {
      const double d = s.distance(j, jj);
      if (d > nearest * (1.0 + 1e-9)) continue;
      best = std::max(best, bl_distance(row_j, k.apply(jj)) / d);
    }
  }
  return best;
}

/// {"variant":"dirac"} | {"variant":"matrix","rows":[[..],..]} |
/// {"variant":"gaussian","sigma":s} | {"variant":"uniform"}
inline MutationKernel kernel_from_json(const nlohmann::json& j, SpacePtr space) {
  try {
    const std::string v = j.at("variant").get<std::string>();
    if (v == "dirac") return MutationKernel::dirac(std::move(space));
    if (v == "matrix")
      return MutationKernel::matrix(std::move(space), j.at("rows").get<std::vector<std::vector<double>>>());
    if (v == "gaussian") return MutationKernel::gaussian(std::move(space), j.at("sigma").get<double>());
    if (v == "uniform") return MutationKernel::uniform(std::move(space));
    throw ConfigError("kernel: unknown variant '" + v + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("kernel: ") + e.what());
  } catch (const UsageError& e) {
    throw ConfigError(std::string("kernel: ") + e.what());
  }
}

inline nlohmann::json kernel_to_json(const MutationKernel& k) {
  if (k.is_dirac()) return {{"variant", "dirac"}};
  if (k.label() == "gaussian") return {{"variant", "gaussian"}, {"sigma", k.sigma()}};
  if (k.label() == "uniform") return {{"variant", "uniform"}};
  return {{"variant", "matrix"}, {"rows", k.dense_rows()}};
}

}  // namespace evomeasure

#endif  // EVOMEASURE_KERNEL_HPP
