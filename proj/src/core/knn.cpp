#include "core/knn.hpp"

#include <algorithm>
#include <numeric>

namespace arapgs {
namespace {
constexpr std::size_t kLeafSize = 8;
}

KdTree::KdTree(std::vector<Vec3d> points) : points_(std::move(points)) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    if (!points_.empty()) build(0, points_.size());
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{-1, 0.0, begin, end, 0, 0});
    if (end - begin <= kLeafSize) return id;

    Vec3d lo = points_[order_[begin]], hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
        lo = lo.cwiseMin(points_[order_[i]]);
        hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return id; // all coincident, keep as one leaf

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t a, std::size_t b) {
                         const double ca = points_[a][axis], cb = points_[b][axis];
                         return ca < cb || (ca == cb && a < b);
                     });
    const double split = points_[order_[mid]][axis];
    const std::size_t left = build(begin, mid);
    const std::size_t right = build(mid, end);
    Node& n = nodes_[id];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
}

void KdTree::search(std::size_t node_id, const Vec3d& q, std::size_t k, std::optional<std::size_t> exclude,
                    std::vector<Neighbor>& heap) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
        for (std::size_t i = node.begin; i < node.end; ++i) {
            const std::size_t idx = order_[i];
            if (exclude && *exclude == idx) continue;
            const Neighbor cand{idx, (points_[idx] - q).squaredNorm()};
            if (heap.size() < k) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end());
            } else if (cand < heap.front()) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end());
            }
        }
        return;
    }
    const double diff = q[node.axis] - node.split;
    const std::size_t near = diff < 0 ? node.left : node.right;
    const std::size_t far = diff < 0 ? node.right : node.left;
    search(near, q, k, exclude, heap);
    // Equal distances must still be visited so lower-index ties can win.
    if (heap.size() < k || diff * diff <= heap.front().dist2) search(far, q, k, exclude, heap);
}

std::vector<Neighbor> KdTree::nearest(const Vec3d& query, std::size_t k, std::optional<std::size_t> exclude) const {
    std::vector<Neighbor> heap;
    if (k == 0 || points_.empty()) return heap;
    heap.reserve(k + 1);
    search(0, query, k, exclude, heap);
    std::sort_heap(heap.begin(), heap.end());
    return heap;
}

} // namespace arapgs
