#pragma once

#include "core/camera.hpp"
#include "core/image.hpp"
#include "core/scene.hpp"

#include <optional>
#include <span>
#include <vector>

namespace arapgs {

inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovarianceFloor = 0.3;
inline constexpr double kMinContribution = 1.0 / 255.0;
inline constexpr double kTransmittanceCutoff = 1e-4;
inline constexpr double kShC0 = 0.28209479177387814;

/// A Gaussian projected to the image plane.
struct Splat2D {
    Eigen::Vector2d mean2d;
    Eigen::Matrix2d cov2d; ///< includes the anti-aliasing floor
    Eigen::Vector3d conic; ///< (a, b, c) of the inverse covariance [[a b][b c]]
    double depth = 0;
    Vec3d color;
    double alpha = 0;
    int radius = 0; ///< conservative 3-sigma pixel radius
    std::size_t gaussian = 0;
};

struct ProjectStats {
    std::size_t culled = 0;
    std::size_t non_finite = 0;
};

/// 3D covariance R S S^T R^T from the normalized quaternion and activated scales.
Mat3d covariance3d(const GaussianScene& scene, std::size_t i);

/// View-dependent color from SH coefficients up to the scene's degree,
/// offset by 0.5 and clamped below at 0.
Vec3d sh_color(const GaussianScene& scene, std::size_t i, const Vec3d& view_dir);

/// Splat with an EWA-projected covariance. Returns nothing for Gaussians at
/// or behind the near plane, off-screen, or with non-finite intermediates.
std::optional<Splat2D> project_one(const GaussianScene& scene, std::size_t i, const Camera& camera,
                                   bool cull_offscreen = true);

std::vector<Splat2D> project(const GaussianScene& scene, const Camera& camera, ProjectStats* stats = nullptr);

/// Per-pixel record of which splats contributed and with what blending
/// weight T * alpha * G. Rows are pixels in row-major order (CSR layout).
struct CompositeTrace {
    std::vector<std::uint32_t> offsets;
    std::vector<std::uint32_t> splat;  ///< index into the splat list passed in
    std::vector<double> weight;
};

/// Front-to-back alpha compositing over a global depth sort. The output is
/// independent of splat input order and of tiling. When `trace` is set,
/// contributions are recorded for pixels where `record` is nonzero (all
/// pixels when `record` is null).
ImageBuffer rasterize(std::span<const Splat2D> splats, const Camera& camera, const Vec3d& background,
                      CompositeTrace* trace = nullptr, const MaskBuffer* record = nullptr);

ImageBuffer render(const GaussianScene& scene, const Camera& camera, const Vec3d& background = Vec3d::Zero());

/// World point at the alpha-weighted median depth under pixel (x, y), or
/// nothing when accumulated opacity is below 0.5.
std::optional<Vec3d> depth_at(const GaussianScene& scene, const Camera& camera, int x, int y);

/// Deterministic total order used for compositing.
bool splat_before(const Splat2D& a, const Splat2D& b);

} // namespace arapgs
