#pragma once

#include "core/drag_spec.hpp"
#include "core/scene.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace arapgs {

enum class WeightMode { Uniform, GaussianKernel };

enum class ConstraintKind { Handle, Anchor, AutoAnchor, ComponentAnchor };

const char* to_string(ConstraintKind kind);

struct Constraint {
    std::size_t node = 0;
    Vec3d target;
    ConstraintKind kind = ConstraintKind::Anchor;
};

/// Where a handle or anchor landed after snapping to the scene.
struct Snap {
    Vec3d point;
    std::size_t gaussian = 0;
    std::size_t node = 0;
    double distance = 0;
};

struct SubsetSample {
    std::vector<std::size_t> indices; ///< ascending Gaussian indices
    std::vector<Snap> snaps;          ///< one per forced point, in input order
};

/// Representative subset over the Gaussians inside `region`, plus the node
/// carrying each forced point (handle sources then anchors).
SubsetSample sample_subset(const GaussianScene& scene, const std::optional<Region>& region, std::size_t n_sub,
                           std::uint64_t seed, std::span<const Vec3d> forced_points = {});

/// Symmetric kNN graph over the subset in CSR layout.
struct DeformGraph {
    std::vector<std::size_t> subset;
    std::vector<Vec3d> positions;
    std::vector<std::size_t> offsets{0};
    std::vector<std::size_t> neighbors;
    std::vector<double> edge_weights;
    std::vector<double> cell_weights;
    std::vector<Constraint> constraints; ///< sorted by node, at most one per node
    double mean_knn_distance = 0;

    std::size_t size() const noexcept { return positions.size(); }
    std::size_t directed_edge_count() const noexcept { return neighbors.size(); }

    std::span<const std::size_t> neighbors_of(std::size_t i) const {
        return {neighbors.data() + offsets[i], offsets[i + 1] - offsets[i]};
    }
    std::span<const double> weights_of(std::size_t i) const {
        return {edge_weights.data() + offsets[i], offsets[i + 1] - offsets[i]};
    }

    /// Component label per node; labels are assigned in order of the
    /// lowest node index of each component.
    std::vector<std::size_t> components(std::size_t* count = nullptr) const;
};

DeformGraph build_graph(std::span<const Vec3d> positions, std::size_t k, WeightMode mode);

struct ConstraintStats {
    std::size_t handles = 0;
    std::size_t anchors = 0;
    std::size_t auto_anchors = 0;
    std::size_t component_anchors = 0;
};

/// Installs handle/anchor constraints. `snaps` must hold the handle snaps
/// followed by the anchor snaps, as returned by sample_subset. Handle nodes
/// are displaced by (target - source), so a zero drag is exactly the
/// identity.
ConstraintStats assign_constraints(DeformGraph& graph, const DragSpec& spec, std::span<const Snap> snaps,
                                   std::vector<std::string>* warnings = nullptr);

/// Handle targets keyed by node, with conflicts rejected. Exposed so callers
/// can validate a drag before paying for graph construction.
std::vector<Constraint> handle_constraints(std::span<const Vec3d> node_positions, const DragSpec& spec,
                                           std::span<const Snap> snaps);

} // namespace arapgs
