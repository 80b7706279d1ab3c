#include "gsicp/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace gsicp {

namespace {

bool closer(const KdTree::Neighbor& a, const KdTree::Neighbor& b) {
  return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
}

// Bounded max-heap on (dist2, index).
struct KnnSink {
  std::vector<KdTree::Neighbor>& heap;
  std::size_t k;

  double bound() const {
    return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.front().dist2;
  }
  void offer(int index, double d2) {
    const KdTree::Neighbor cand{index, d2};
    if (heap.size() < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), closer);
    } else if (closer(cand, heap.front())) {
      std::pop_heap(heap.begin(), heap.end(), closer);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), closer);
    }
  }
};

struct NearestSink {
  KdTree::Neighbor best{-1, std::numeric_limits<double>::infinity()};

  double bound() const { return best.dist2; }
  void offer(int index, double d2) {
    const KdTree::Neighbor cand{index, d2};
    if (best.index < 0 || closer(cand, best)) best = cand;
  }
};

}  // namespace

KdTree::KdTree(std::vector<Vec3> points, int leaf_size)
    : points_(std::move(points)), leaf_size_(std::max(1, leaf_size)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
    build(0, static_cast<int>(points_.size()));
  }
}

int KdTree::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  nodes_[id].lo = lo;
  nodes_[id].hi = hi;
  if (end - begin <= leaf_size_) return id;

  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  // Index tie-break keeps the split deterministic for duplicate coordinates.
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     const double pa = points_[a][axis];
                     const double pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double KdTree::boxDist2(const Node& n, const Vec3& q) const {
  const Vec3 d = (n.lo - q).cwiseMax(q - n.hi).cwiseMax(0.0);
  return d.squaredNorm();
}

template <typename Sink>
void KdTree::search(int node, const Vec3& q, Sink& sink) const {
  const Node& n = nodes_[node];
  if (n.left < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const int idx = order_[i];
      sink.offer(idx, (points_[idx] - q).squaredNorm());
    }
    return;
  }
  const double dl = boxDist2(nodes_[n.left], q);
  const double dr = boxDist2(nodes_[n.right], q);
  const int first = dl <= dr ? n.left : n.right;
  const int second = dl <= dr ? n.right : n.left;
  const double d_second = dl <= dr ? dr : dl;
  if (std::min(dl, dr) <= sink.bound()) search(first, q, sink);
  // Visit on equality: an equal-distance point may carry a lower index.
  if (d_second <= sink.bound()) search(second, q, sink);
}

void KdTree::knn(const Vec3& query, int k, std::vector<Neighbor>& out) const {
  out.clear();
  if (points_.empty() || k <= 0) return;
  KnnSink sink{out, std::min<std::size_t>(static_cast<std::size_t>(k), points_.size())};
  search(0, query, sink);
  std::sort(out.begin(), out.end(), closer);
}

std::vector<KdTree::Neighbor> KdTree::knn(const Vec3& query, int k) const {
  std::vector<Neighbor> out;
  knn(query, k, out);
  return out;
}

KdTree::Neighbor KdTree::nearest(const Vec3& query) const {
  NearestSink sink;
  if (!points_.empty()) search(0, query, sink);
  return sink.best;
}

}  // namespace gsicp
