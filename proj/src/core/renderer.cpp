#include "core/renderer.hpp"

#include "core/error.hpp"
#include "core/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <numeric>
#include <tuple>

namespace arapgs {
namespace {

constexpr int kTile = 16;

constexpr double kShC1 = 0.4886025119029199;
constexpr double kShC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                             0.5462742152960396};
constexpr double kShC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                             -0.4570457994644658, 1.445305721320277,  -0.5900435899266435};

struct PixelHit {
    std::uint32_t splat;
    double weight;
};

} // namespace

Mat3d covariance3d(const GaussianScene& scene, std::size_t i) {
    const Mat3d r = unit_rotation(scene.rotations[i]).toRotationMatrix();
    const Mat3d m = r * activated_scale(scene, i).asDiagonal();
    return m * m.transpose();
}

Vec3d sh_color(const GaussianScene& scene, std::size_t i, const Vec3d& view_dir) {
    Vec3d result = kShC0 * scene.sh_dc[i].cast<double>();
    const int degree = scene.sh_degree();
    if (degree > 0) {
        const std::size_t per_channel = scene.rest_dim / 3;
        const float* rest = scene.sh_rest.data() + i * scene.rest_dim;
        auto coef = [&](std::size_t k) {
            return Vec3d(rest[k], rest[per_channel + k], rest[2 * per_channel + k]);
        };
        const double x = view_dir.x(), y = view_dir.y(), z = view_dir.z();
        result += -kShC1 * y * coef(0) + kShC1 * z * coef(1) - kShC1 * x * coef(2);
        if (degree > 1) {
            const double xx = x * x, yy = y * y, zz = z * z, xy = x * y, yz = y * z, xz = x * z;
            result += kShC2[0] * xy * coef(3) + kShC2[1] * yz * coef(4) + kShC2[2] * (2 * zz - xx - yy) * coef(5) +
                      kShC2[3] * xz * coef(6) + kShC2[4] * (xx - yy) * coef(7);
            if (degree > 2) {
                result += kShC3[0] * y * (3 * xx - yy) * coef(8) + kShC3[1] * xy * z * coef(9) +
                          kShC3[2] * y * (4 * zz - xx - yy) * coef(10) +
                          kShC3[3] * z * (2 * zz - 3 * xx - 3 * yy) * coef(11) +
                          kShC3[4] * x * (4 * zz - xx - yy) * coef(12) + kShC3[5] * z * (xx - yy) * coef(13) +
                          kShC3[6] * x * (xx - 3 * yy) * coef(14);
            }
        }
    }
    result.array() += 0.5;
    return result.cwiseMax(0.0);
}

std::optional<Splat2D> project_one(const GaussianScene& scene, std::size_t i, const Camera& camera,
                                   bool cull_offscreen) {
    const Vec3d world = scene.centers[i].cast<double>();
    const Vec3d t = camera.to_camera(world);
    if (!(t.z() > kNearPlane)) return std::nullopt;

    const Mat3d w = camera.rotation().transpose();
    Eigen::Matrix<double, 2, 3> j;
    j << camera.fx / t.z(), 0, -camera.fx * t.x() / (t.z() * t.z()), 0, camera.fy / t.z(),
        -camera.fy * t.y() / (t.z() * t.z());
    const Eigen::Matrix<double, 2, 3> jw = j * w;

    Splat2D s;
    s.gaussian = i;
    s.depth = t.z();
    s.mean2d = Eigen::Vector2d(camera.fx * t.x() / t.z() + camera.cx, camera.fy * t.y() / t.z() + camera.cy);
    s.cov2d = jw * covariance3d(scene, i) * jw.transpose();
    s.cov2d(0, 0) += kCovarianceFloor;
    s.cov2d(1, 1) += kCovarianceFloor;
    const double det = s.cov2d.determinant();
    if (!(det > 0) || !s.cov2d.allFinite() || !s.mean2d.allFinite()) return std::nullopt;
    s.conic = Eigen::Vector3d(s.cov2d(1, 1) / det, -s.cov2d(0, 1) / det, s.cov2d(0, 0) / det);

    const double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
    const double lambda = mid + std::sqrt(std::max(0.1, mid * mid - det));
    s.radius = static_cast<int>(std::ceil(3.0 * std::sqrt(lambda)));

    if (cull_offscreen) {
        if (s.mean2d.x() + s.radius < 0 || s.mean2d.x() - s.radius > camera.width - 1 ||
            s.mean2d.y() + s.radius < 0 || s.mean2d.y() - s.radius > camera.height - 1) {
            return std::nullopt;
        }
    }

    s.color = sh_color(scene, i, (world - camera.position()).normalized());
    s.alpha = sigmoid(scene.opacity_logits[i]);
    if (!s.color.allFinite() || !std::isfinite(s.alpha)) return std::nullopt;
    return s;
}

std::vector<Splat2D> project(const GaussianScene& scene, const Camera& camera, ProjectStats* stats) {
    std::vector<std::optional<Splat2D>> slots(scene.size());
    parallel_for(0, scene.size(), [&](std::size_t i) { slots[i] = project_one(scene, i, camera); });
    std::vector<Splat2D> out;
    out.reserve(scene.size());
    ProjectStats local;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) {
            out.push_back(*slots[i]);
        } else if (!scene.centers[i].allFinite()) {
            ++local.non_finite;
        } else {
            ++local.culled;
        }
    }
    if (stats) *stats = local;
    return out;
}

bool splat_before(const Splat2D& a, const Splat2D& b) {
    auto key = [](const Splat2D& s) {
        return std::make_tuple(s.depth, s.mean2d.x(), s.mean2d.y(), s.alpha, s.color.x(), s.color.y(), s.color.z(),
                               s.conic.x(), s.conic.y(), s.conic.z(), s.gaussian);
    };
    return key(a) < key(b);
}

ImageBuffer rasterize(std::span<const Splat2D> splats, const Camera& camera, const Vec3d& background,
                      CompositeTrace* trace, const MaskBuffer* record) {
    const int width = camera.width, height = camera.height;
    ImageBuffer image(width, height, 3);

    std::vector<std::uint32_t> order(splats.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return splat_before(splats[a], splats[b]); });

    const int tiles_x = (width + kTile - 1) / kTile;
    const int tiles_y = (height + kTile - 1) / kTile;
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::uint32_t idx : order) {
        const Splat2D& s = splats[idx];
        const int x0 = std::max(0, static_cast<int>(std::floor(s.mean2d.x() - s.radius)) / kTile);
        const int x1 = std::min(tiles_x - 1, static_cast<int>(std::floor(s.mean2d.x() + s.radius)) / kTile);
        const int y0 = std::max(0, static_cast<int>(std::floor(s.mean2d.y() - s.radius)) / kTile);
        const int y1 = std::min(tiles_y - 1, static_cast<int>(std::floor(s.mean2d.y() + s.radius)) / kTile);
        if (s.mean2d.x() + s.radius < 0 || s.mean2d.y() + s.radius < 0) continue;
        for (int ty = y0; ty <= y1; ++ty) {
            for (int tx = x0; tx <= x1; ++tx) bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(idx);
        }
    }

    std::vector<std::vector<PixelHit>> hits;
    if (trace) hits.resize(static_cast<std::size_t>(width) * height);

    parallel_for(
        0, bins.size(),
        [&](std::size_t tile) {
            const int tx = static_cast<int>(tile % tiles_x), ty = static_cast<int>(tile / tiles_x);
            const auto& bin = bins[tile];
            for (int y = ty * kTile; y < std::min(height, (ty + 1) * kTile); ++y) {
                for (int x = tx * kTile; x < std::min(width, (tx + 1) * kTile); ++x) {
                    const std::size_t pix = static_cast<std::size_t>(y) * width + x;
                    const bool recording = trace && (!record || record->bits[pix] != 0);
                    Vec3d c = Vec3d::Zero();
                    double transmittance = 1.0;
                    for (std::uint32_t idx : bin) {
                        const Splat2D& s = splats[idx];
                        const double dx = x - s.mean2d.x(), dy = y - s.mean2d.y();
                        const double power = s.conic.x() * dx * dx + 2 * s.conic.y() * dx * dy + s.conic.z() * dy * dy;
                        if (power > 9.0) continue;
                        const double a = s.alpha * std::exp(-0.5 * power);
                        if (a < kMinContribution) continue;
                        const double w = transmittance * a;
                        c += w * s.color;
                        if (recording) hits[pix].push_back(PixelHit{idx, w});
                        transmittance *= 1.0 - a;
                        if (transmittance < kTransmittanceCutoff) break;
                    }
                    c += transmittance * background;
                    for (int k = 0; k < 3; ++k) {
                        image.at(x, y, k) = static_cast<float>(std::clamp(c[k], 0.0, 1.0));
                    }
                }
            }
        },
        1);

    if (trace) {
        trace->offsets.assign(1, 0);
        trace->splat.clear();
        trace->weight.clear();
        for (const auto& list : hits) {
            for (const auto& h : list) {
                trace->splat.push_back(h.splat);
                trace->weight.push_back(h.weight);
            }
            trace->offsets.push_back(static_cast<std::uint32_t>(trace->splat.size()));
        }
    }
    return image;
}

ImageBuffer render(const GaussianScene& scene, const Camera& camera, const Vec3d& background) {
    const auto splats = project(scene, camera);
    return rasterize(splats, camera, background);
}

std::optional<Vec3d> depth_at(const GaussianScene& scene, const Camera& camera, int x, int y) {
    if (x < 0 || y < 0 || x >= camera.width || y >= camera.height) {
        throw Error(ErrorCode::Config, "pixel outside the image");
    }
    auto splats = project(scene, camera);
    std::sort(splats.begin(), splats.end(), splat_before);

    std::vector<std::pair<double, double>> contrib; // (depth, weight)
    double transmittance = 1.0;
    for (const Splat2D& s : splats) {
        const double dx = x - s.mean2d.x(), dy = y - s.mean2d.y();
        const double power = s.conic.x() * dx * dx + 2 * s.conic.y() * dx * dy + s.conic.z() * dy * dy;
        if (power > 9.0) continue;
        const double a = s.alpha * std::exp(-0.5 * power);
        if (a < kMinContribution) continue;
        contrib.emplace_back(s.depth, transmittance * a);
        transmittance *= 1.0 - a;
        if (transmittance < kTransmittanceCutoff) break;
    }
    const double opacity = 1.0 - transmittance;
    if (contrib.empty() || opacity < 0.5) return std::nullopt;

    double total = 0;
    for (const auto& [d, w] : contrib) total += w;
    double depth = contrib.back().first, acc = 0;
    for (const auto& [d, w] : contrib) {
        acc += w;
        if (acc >= 0.5 * total) {
            depth = d;
            break;
        }
    }
    const Vec3d cam((x - camera.cx) / camera.fx * depth, (y - camera.cy) / camera.fy * depth, depth);
    return camera.to_world(cam);
}

} // namespace arapgs
