#pragma once

#include <cstddef>
#include <vector>

#include "gsicp/types.hpp"

namespace gsicp {

/// Static 3-d tree over a fixed point array.
///
/// Queries are exact. Results are ordered by (squared distance, index), so
/// equal-distance neighbours come back lowest index first. The tree is
/// immutable after construction and may be queried from several threads.
class KdTree {
 public:
  struct Neighbor {
    int index = -1;
    double dist2 = 0.0;
  };

  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points, int leaf_size = 8);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Vec3>& points() const { return points_; }

  /// The min(k, size()) nearest points.
  std::vector<Neighbor> knn(const Vec3& query, int k) const;
  void knn(const Vec3& query, int k, std::vector<Neighbor>& out) const;

  /// Single nearest neighbour; index == -1 on an empty tree.
  Neighbor nearest(const Vec3& query) const;

 private:
  struct Node {
    int begin = 0;
    int end = 0;
    int left = -1;
    int right = -1;
    Vec3 lo = Vec3::Zero();
    Vec3 hi = Vec3::Zero();
  };

  int build(int begin, int end);
  double boxDist2(const Node& n, const Vec3& q) const;

  template <typename Sink>
  void search(int node, const Vec3& q, Sink& sink) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int leaf_size_ = 8;
};

}  // namespace gsicp
