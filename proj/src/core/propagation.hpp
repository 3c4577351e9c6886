#pragma once

#include "core/arap.hpp"
#include "core/drag_spec.hpp"
#include "core/knn.hpp"

#include <optional>

namespace arapgs {

/// Solved deformation of the representative subset.
struct SubsetTransform {
    std::vector<std::size_t> indices; ///< Gaussian index per node
    std::vector<Vec3d> p;
    std::vector<Vec3d> p_prime;
    std::vector<Eigen::Quaterniond> q_prime; ///< unit, w >= 0

    void validate(std::size_t scene_size) const;
};

SubsetTransform make_subset_transform(const DeformGraph& graph, const ArapState& state);

struct InterpWeights {
    std::vector<std::size_t> nodes; ///< nearest first
    std::vector<double> weights;    ///< softmax(-distance / temperature), sums to 1
};

/// Blend weights of the k subset nodes nearest to `query`, measured in the
/// undeformed configuration.
InterpWeights interp_weights(const Vec3d& query, const KdTree& subset, std::size_t k, double temperature);

/// Mean distance from each subset node to its nearest other node; the
/// default softmax temperature. Falls back to 1 for degenerate sets.
double mean_spacing(const KdTree& subset);

struct PropagationConfig {
    std::size_t k = 8;
    /// Softmax temperature in scene units; mean subset spacing when unset.
    /// A value of 1 reproduces the raw exp(-distance) weighting.
    std::optional<double> temperature;
};

struct PropagationStats {
    std::size_t updated = 0;
    std::size_t antipodal_fallbacks = 0;
    double temperature = 0;
};

/// Moves every active Gaussian by the blended subset displacement and
/// pre-multiplies its rotation by the blended subset rotation. Scales,
/// opacities and SH coefficients pass through; Gaussians outside `region`
/// are copied bit for bit.
GaussianScene propagate(const GaussianScene& scene, const std::optional<Region>& region,
                        const SubsetTransform& transform, const PropagationConfig& config,
                        PropagationStats* stats = nullptr);

} // namespace arapgs
