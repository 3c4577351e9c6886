#pragma once

#include "core/scene.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace arapgs {

/// Pinhole camera, OpenCV convention (x right, y down, z forward). Pixel
/// (u, v) is centered on integer coordinates, matching the reference
/// rasterizer.
struct Camera {
    int width = 0;
    int height = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Eigen::Matrix4d c2w = Eigen::Matrix4d::Identity();
    std::optional<std::filesystem::path> image_path;

    Mat3d rotation() const { return c2w.topLeftCorner<3, 3>(); }
    Vec3d position() const { return c2w.topRightCorner<3, 1>(); }

    Vec3d to_camera(const Vec3d& world) const { return rotation().transpose() * (world - position()); }
    Vec3d to_world(const Vec3d& cam) const { return rotation() * cam + position(); }

    /// Throws Schema when intrinsics are non-positive or the pose is not a
    /// proper rigid transform (orthonormal within 1e-5, det +1).
    void validate() const;
};

using CameraSet = std::vector<Camera>;

/// Relative image paths resolve against the directory of the JSON file.
CameraSet read_cameras(const std::filesystem::path& path);
CameraSet parse_cameras(std::string_view text, const std::filesystem::path& base_dir = {});
std::string cameras_to_json(const CameraSet& cameras);

} // namespace arapgs
