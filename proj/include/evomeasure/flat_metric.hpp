#ifndef EVOMEASURE_FLAT_METRIC_HPP
#define EVOMEASURE_FLAT_METRIC_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include "evomeasure/errors.hpp"
#include "evomeasure/measure.hpp"

namespace evomeasure {

struct FlatNormResult {
  /// sup { <nu, f> : |f| <= 1, Lip(f) <= 1 }.
  double value = 0.0;
  /// An optimal f at every point of nu's space.
  std::vector<double> witness;
  /// Augmenting paths used by the flow solver.
  std::size_t augmentations = 0;
};

namespace detail {

/// Uncapacitated min-cost transshipment solved by successive shortest paths
/// with Johnson potentials. Supplies must sum to zero.
class Transshipment {
 public:
  explicit Transshipment(std::size_t nodes) : adj_(nodes), potential_(nodes, 0.0) {}

  void add_arc(std::size_t from, std::size_t to, double cost) {
    adj_[from].push_back({to, cost, kInf, adj_[to].size()});
    adj_[to].push_back({from, -cost, 0.0, adj_[from].size() - 1});
  }

  /// Returns the optimal cost; potentials() afterwards are dual optimal.
  /// Excess within `eps` of zero is settled; the run ends once no deficit is
  /// left and the remaining positive excess is at most `slack`.
  double solve(std::vector<double> excess, double eps, double slack, std::size_t& augmentations) {
    const std::size_t n = adj_.size();
    std::vector<double> dist(n);
    std::vector<std::size_t> parent_node(n), parent_arc(n);
    std::vector<char> done(n);
    using Item = std::pair<double, std::size_t>;

    double cost = 0.0;
    augmentations = 0;
    const std::size_t max_aug = 64 * n * n + 1024;
    while (true) {
      bool any = false;
      std::fill(dist.begin(), dist.end(), kInf);
      std::fill(done.begin(), done.end(), 0);
      std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
      for (std::size_t v = 0; v < n; ++v) {
        if (excess[v] > eps) {
          dist[v] = 0.0;
          parent_node[v] = v;
          heap.emplace(0.0, v);
          any = true;
        }
      }
      if (!any) break;

      std::size_t sink = n;
      double sink_dist = kInf;
      while (!heap.empty()) {
        auto [d, v] = heap.top();
        heap.pop();
        if (done[v]) continue;
        done[v] = 1;
        if (excess[v] < -eps) {
          sink = v;
          sink_dist = d;
          break;
        }
        for (std::size_t a = 0; a < adj_[v].size(); ++a) {
          const Arc& arc = adj_[v][a];
          if (arc.cap <= 0.0) continue;
          const double rc = std::max(0.0, arc.cost + potential_[v] - potential_[arc.to]);
          const double nd = d + rc;
          if (nd < dist[arc.to]) {
            dist[arc.to] = nd;
            parent_node[arc.to] = v;
            parent_arc[arc.to] = a;
            heap.emplace(nd, arc.to);
          }
        }
      }
      if (sink == n) {
        // Leftover excess from rounding in the supplies is not a failure.
        double left = 0.0;
        for (double e : excess) left += std::max(0.0, e);
        if (left <= slack) break;
        throw NumericError("flat metric: no augmenting path (unbalanced supplies)");
      }

      for (std::size_t v = 0; v < n; ++v) potential_[v] += std::min(dist[v], sink_dist);

      std::size_t source = sink;
      double push = -excess[sink];
      while (parent_node[source] != source) {
        const std::size_t u = parent_node[source];
        push = std::min(push, adj_[u][parent_arc[source]].cap);
        source = u;
      }
      push = std::min(push, excess[source]);

      for (std::size_t v = sink; v != source;) {
        const std::size_t u = parent_node[v];
        Arc& arc = adj_[u][parent_arc[v]];
        if (arc.cap != kInf) arc.cap -= push;
        adj_[v][arc.rev].cap += push;
        cost += push * arc.cost;
        v = u;
      }
      excess[source] -= push;
      excess[sink] += push;
      if (++augmentations > max_aug) throw NumericError("flat metric: augmentation limit exceeded");
    }
    return cost;
  }

  const std::vector<double>& potentials() const noexcept { return potential_; }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();
  struct Arc {
    std::size_t to;
    double cost;
    double cap;
    std::size_t rev;
  };
  std::vector<std::vector<Arc>> adj_;
  std::vector<double> potential_;
};

}  // namespace detail

/// Flat (bounded-Lipschitz) norm of a signed measure, solved exactly as the
/// dual min-cost flow: mass moves between support points at cost d(q_i, q_j)
/// or is created/destroyed through a ground node at cost 1.
///
/// Zero-weight points are dropped (the metric satisfies the triangle
/// inequality, so routing through them never helps). On the line only
/// neighbouring support points need arcs; in 2-D the graph is complete.
inline FlatNormResult flat_norm(const MeasureVec& nu) {
  const auto& space = *nu.space();
  FlatNormResult result;
  result.witness.assign(space.size(), 0.0);

  std::vector<std::size_t> support;
  for (std::size_t i = 0; i < nu.size(); ++i)
    if (nu[i] != 0.0) support.push_back(i);
  if (support.empty()) return result;

  const std::size_t m = support.size();
  const std::size_t ground = m;
  detail::Transshipment net(m + 1);
  if (space.dim() == 1) {
    std::sort(support.begin(), support.end(),
              [&](std::size_t a, std::size_t b) { return space.point(a)[0] < space.point(b)[0]; });
    for (std::size_t k = 0; k + 1 < m; ++k) {
      const double gap = space.distance(support[k], support[k + 1]);
      net.add_arc(k, k + 1, gap);
      net.add_arc(k + 1, k, gap);
    }
  } else {
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b)
        if (a != b) net.add_arc(a, b, space.distance(support[a], support[b]));
  }
  for (std::size_t k = 0; k < m; ++k) {
    net.add_arc(k, ground, 1.0);
    net.add_arc(ground, k, 1.0);
  }

  std::vector<double> supply(m + 1, 0.0);
  double net_mass = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    supply[k] = nu[support[k]];
    net_mass += supply[k];
    scale += std::abs(supply[k]);
  }
  supply[ground] = -net_mass;
  result.value = net.solve(std::move(supply), 1e-15 * scale, 1e-12 * scale, result.augmentations);

  // Dual potentials give the optimal test function on the support; extend to
  // the remaining points by the clamped McShane extension (keeps |f| <= 1 and
  // Lip(f) <= 1).
  const auto& pi = net.potentials();
  std::vector<double> f_support(m);
  for (std::size_t k = 0; k < m; ++k) {
    f_support[k] = std::clamp(pi[ground] - pi[k], -1.0, 1.0);
    result.witness[support[k]] = f_support[k];
  }
  std::vector<char> on_support(space.size(), 0);
  for (std::size_t i : support) on_support[i] = 1;
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (on_support[i]) continue;
    double ext = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) ext = std::min(ext, f_support[k] + space.distance(i, support[k]));
    result.witness[i] = std::clamp(ext, -1.0, 1.0);
  }
  return result;
}

/// Bounded-Lipschitz distance between two measures on one space.
inline double bl_distance(const MeasureVec& m1, const MeasureVec& m2) {
  if (!m1.shares_space(m2))
    throw UsageError("bl_distance: measures live on different spaces (merge supports first)");
  return flat_norm(add_scaled(m1, -1.0, m2)).value;
}

/// bl_distance after merging the two supports.
inline double bl_distance_merged(const MeasureVec& m1, const MeasureVec& m2) {
  auto [a, b] = merge_supports(m1, m2);
  return bl_distance(a, b);
}

}  // namespace evomeasure

#endif  // EVOMEASURE_FLAT_METRIC_HPP
