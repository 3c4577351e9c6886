#pragma once

// Slow, obviously-correct reference implementations. None of these call
// into the code they check beyond plain data types.

#include "core/camera.hpp"
#include "core/image.hpp"
#include "core/knn.hpp"
#include "core/neighborhood.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace arapgs::oracle {

std::vector<Neighbor> brute_knn(const std::vector<Vec3d>& points, const Vec3d& q, std::size_t k,
                                std::optional<std::size_t> exclude = std::nullopt);

Mat3d random_rotation(std::mt19937_64& rng);
double rotation_angle_deg(const Mat3d& a, const Mat3d& b);

/// Rotation maximizing tr(R S) found by exhaustive search: `samples`
/// uniformly drawn rotations, then two rounds of exhaustive local grids
/// around the best one to get below the coarse grid spacing.
Mat3d grid_best_rotation(const Mat3d& S, std::size_t samples, std::uint64_t seed);

/// Energy summed straight from its definition, edge by edge.
double arap_energy(const DeformGraph& g, const std::vector<Vec3d>& p, const std::vector<Vec3d>& pp,
                   const std::vector<Mat3d>& R);

/// Minimizer of the energy over unconstrained positions with R fixed,
/// recovered by probing the quadratic energy (Hessian by polarization) and
/// solving the dense system with full-pivot LU.
std::vector<Vec3d> dense_global_solve(const DeformGraph& g, const std::vector<Vec3d>& p, const std::vector<Mat3d>& R);

/// Random kNN graph over `n` points, uniform weights, with `anchors`
/// constrained nodes pinned in place and one handle node moved by `drag`.
DeformGraph random_graph(std::mt19937_64& rng, std::size_t n, std::size_t k, std::size_t anchors,
                         const Vec3d& drag);

struct OracleSplat {
    double u = 0, v = 0;         ///< pixel-space mean
    double a = 0, b = 0, c = 0;  ///< 2x2 covariance [[a b][b c]]
    double depth = 0;
    double opacity = 0;
    Vec3d color;
};

/// One pixel composited front to back with the reference cutoffs.
Vec3d composite_pixel(std::vector<OracleSplat> splats, double x, double y, const Vec3d& background);

/// Splat of an isotropic, degree-0 Gaussian seen by a camera at the origin
/// looking down +z, written out by hand: cov2d = s^2 J J^T + 0.3 I.
OracleSplat axis_splat(const GaussianScene& scene, std::size_t i, const Camera& camera);

/// Whole image from axis_splat + composite_pixel.
ImageBuffer axis_render(const GaussianScene& scene, const Camera& camera, const Vec3d& background);

/// DAI written as plain loops over views, handles, gammas and patch
/// offsets. Images are indexed [y][x][c].
double brute_dai(const std::vector<ImageBuffer>& originals, const std::vector<ImageBuffer>& edited,
                 const std::vector<std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>>>& pairs,
                 const std::vector<int>& gammas);

/// Per-pixel select: mask ? enhanced : original.
ImageBuffer scalar_merge(const ImageBuffer& enhanced, const ImageBuffer& original, const MaskBuffer& mask);

} // namespace arapgs::oracle
