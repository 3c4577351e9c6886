#pragma once

#include "core/scene.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace arapgs {

struct Neighbor {
    std::size_t index = 0;
    double dist2 = 0;

    friend bool operator<(const Neighbor& a, const Neighbor& b) {
        return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
    }
};

/// Exact k-nearest-neighbor search over a static point set. Results are
/// ordered by (squared distance, index), so ties resolve to the lower index
/// and queries are deterministic.
class KdTree {
public:
    explicit KdTree(std::vector<Vec3d> points);

    std::vector<Neighbor> nearest(const Vec3d& query, std::size_t k,
                                  std::optional<std::size_t> exclude = std::nullopt) const;

    std::size_t size() const noexcept { return points_.size(); }
    const std::vector<Vec3d>& points() const noexcept { return points_; }

private:
    struct Node {
        int axis = -1; // -1 marks a leaf
        double split = 0;
        std::size_t begin = 0, end = 0;
        std::size_t left = 0, right = 0;
    };

    std::size_t build(std::size_t begin, std::size_t end);
    void search(std::size_t node, const Vec3d& q, std::size_t k, std::optional<std::size_t> exclude,
                std::vector<Neighbor>& heap) const;

    std::vector<Vec3d> points_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
};

} // namespace arapgs
