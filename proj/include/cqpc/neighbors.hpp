#pragma once

// Exact k-nearest and fixed-diameter ball queries over a point set.
//
// Ordering is lexicographic on (squared Euclidean distance, row index), and
// the kd-tree path returns exactly what the brute-force scan returns.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cqpc/error.hpp"

namespace cqpc {

enum class PoolingMode { all, radius, count };

/// Which calibration points are pooled for a query.
struct PoolingSpec {
  PoolingMode mode = PoolingMode::all;
  double xi = std::numeric_limits<double>::infinity();  // ball diameter (radius mode)
  std::size_t m = 0;                                     // neighbor count (count mode)

  static PoolingSpec all() { return {}; }
  static PoolingSpec radius(double xi) {
    if (!(xi > 0.0)) throw InvalidArgument("pooling diameter must be positive");
    return {PoolingMode::radius, xi, 0};
  }
  static PoolingSpec count(std::size_t m) {
    if (m == 0) throw InvalidArgument("pooling count must be positive");
    return {PoolingMode::count, std::numeric_limits<double>::infinity(), m};
  }

  std::string label() const {
    switch (mode) {
      case PoolingMode::all:
        return "all";
      case PoolingMode::count:
        return std::to_string(m);
      case PoolingMode::radius: {
        std::string s = std::to_string(xi);
        return "xi=" + s;
      }
    }
    return "all";
  }

  friend bool operator==(const PoolingSpec& a, const PoolingSpec& b) {
    if (a.mode != b.mode) return false;
    switch (a.mode) {
      case PoolingMode::all:
        return true;
      case PoolingMode::radius:
        return a.xi == b.xi;
      case PoolingMode::count:
        return a.m == b.m;
    }
    return false;
  }
};

struct Neighbor {
  double sq_dist;
  std::size_t index;
  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
  }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

inline double distance(std::span<const double> a, std::span<const double> b) noexcept {
  return std::sqrt(squared_distance(a, b));
}

class NeighborIndex {
 public:
  NeighborIndex(std::vector<double> points, std::size_t dim)
      : points_(std::move(points)), dim_(dim) {
    if (dim_ == 0 || points_.empty() || points_.size() % dim_ != 0) {
      throw InvalidArgument("neighbor index needs at least one point of positive dimension");
    }
    n_ = points_.size() / dim_;
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * n_ / kLeafSize + 2);
    build(0, n_);
  }

  std::size_t size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> point(std::size_t i) const noexcept {
    return std::span<const double>(points_).subspan(i * dim_, dim_);
  }

  /// m nearest indices sorted by (distance, index).
  std::vector<std::size_t> k_nearest(std::span<const double> x, std::size_t m) const {
    check_query(x);
    if (m > n_) {
      throw InvalidArgument("k_nearest: requested " + std::to_string(m) + " neighbors from " +
                            std::to_string(n_) + " points");
    }
    if (m == 0) return {};
    std::priority_queue<Neighbor> heap;  // max-heap on (dist, index)
    search_knn(0, x, m, heap);
    return drain(heap);
  }

  /// Indices within distance xi/2 of x, sorted by (distance, index).
  std::vector<std::size_t> within_radius(std::span<const double> x, double xi) const {
    check_query(x);
    if (!(xi > 0.0)) throw InvalidArgument("within_radius: xi must be positive");
    const double r = xi / 2.0;
    const double r2 = r * r;
    std::vector<Neighbor> hits;
    search_radius(0, x, r2, hits);
    std::sort(hits.begin(), hits.end());
    std::vector<std::size_t> out;
    out.reserve(hits.size());
    for (const auto& h : hits) out.push_back(h.index);
    return out;
  }

  std::vector<std::size_t> k_nearest_brute(std::span<const double> x, std::size_t m) const {
    check_query(x);
    if (m > n_) throw InvalidArgument("k_nearest: m exceeds point count");
    std::vector<Neighbor> all;
    all.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) all.push_back({squared_distance(point(i), x), i});
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(m), all.end());
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m; ++i) out.push_back(all[i].index);
    return out;
  }

  std::vector<std::size_t> within_radius_brute(std::span<const double> x, double xi) const {
    check_query(x);
    const double r = xi / 2.0;
    const double r2 = r * r;
    std::vector<Neighbor> hits;
    for (std::size_t i = 0; i < n_; ++i) {
      const double d2 = squared_distance(point(i), x);
      if (d2 <= r2) hits.push_back({d2, i});
    }
    std::sort(hits.begin(), hits.end());
    std::vector<std::size_t> out;
    for (const auto& h : hits) out.push_back(h.index);
    return out;
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t split_dim = 0;
    double split_value = 0.0;
    std::size_t left = 0;  // 0 marks a leaf (root is never a child)
    std::size_t right = 0;
  };

  void check_query(std::span<const double> x) const {
    if (x.size() != dim_) throw InvalidArgument("neighbor query dimension mismatch");
  }

  std::size_t build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end, 0, 0.0, 0, 0});
    if (end - begin <= kLeafSize) return id;

    std::size_t best_dim = 0;
    double best_spread = -1.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t k = begin; k < end; ++k) {
        const double v = points_[order_[k] * dim_ + j];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        best_dim = j;
      }
    }
    if (best_spread <= 0.0) return id;  // all points identical

    const std::size_t mid = begin + (end - begin) / 2;
    auto key = [&](std::size_t i) { return points_[i * dim_ + best_dim]; };
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return key(a) < key(b) || (key(a) == key(b) && a < b);
                     });
    const double split = key(order_[mid]);
    // Left child holds values <= split. Everything in [mid, end) is >= split.
    nodes_[id].split_dim = best_dim;
    nodes_[id].split_value = split;
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search_knn(std::size_t id, std::span<const double> x, std::size_t m,
                  std::priority_queue<Neighbor>& heap) const {
    const Node& node = nodes_[id];
    if (node.left == 0) {
      for (std::size_t k = node.begin; k < node.end; ++k) {
        const std::size_t i = order_[k];
        const Neighbor cand{squared_distance(point(i), x), i};
        if (heap.size() < m) {
          heap.push(cand);
        } else if (cand < heap.top()) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    const double diff = x[node.split_dim] - node.split_value;
    const std::size_t near = diff <= 0.0 ? node.left : node.right;
    const std::size_t far = diff <= 0.0 ? node.right : node.left;
    search_knn(near, x, m, heap);
    // Points on the far side are at least |diff| away along split_dim. Ties
    // must still be visited because a lower index could displace the worst.
    if (heap.size() < m || diff * diff <= heap.top().sq_dist) search_knn(far, x, m, heap);
  }

  void search_radius(std::size_t id, std::span<const double> x, double r2,
                     std::vector<Neighbor>& hits) const {
    const Node& node = nodes_[id];
    if (node.left == 0) {
      for (std::size_t k = node.begin; k < node.end; ++k) {
        const std::size_t i = order_[k];
        const double d2 = squared_distance(point(i), x);
        if (d2 <= r2) hits.push_back({d2, i});
      }
      return;
    }
    const double diff = x[node.split_dim] - node.split_value;
    const std::size_t near = diff <= 0.0 ? node.left : node.right;
    const std::size_t far = diff <= 0.0 ? node.right : node.left;
    search_radius(near, x, r2, hits);
    if (diff * diff <= r2) search_radius(far, x, r2, hits);
  }

  static std::vector<std::size_t> drain(std::priority_queue<Neighbor>& heap) {
    std::vector<std::size_t> out(heap.size());
    for (std::size_t k = out.size(); k > 0; --k) {
      out[k - 1] = heap.top().index;
      heap.pop();
    }
    return out;
  }

  std::vector<double> points_;
  std::size_t dim_;
  std::size_t n_ = 0;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace cqpc
