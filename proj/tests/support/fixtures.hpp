#pragma once

// Synthetic scenes and rigs shared by the unit tests and the acceptance
// binary.

#include "core/camera.hpp"
#include "core/drag_spec.hpp"
#include "core/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace arapgs::testing {

/// Two spherical blobs at x = -1 and x = +1 joined by a thin bar, with
/// mildly random rotations, scales, colors and degree-1 SH.
GaussianScene dumbbell_scene(std::uint64_t seed = 7, std::size_t per_blob = 1500, std::size_t bar = 400);

/// Drags the +x blob by (0.3, 0, 0.15); the far blob is auto-anchored.
DragSpec dumbbell_drag();

/// Three overlapping isotropic splats in front of an axis-aligned camera;
/// the golden image in tests/fixtures comes from the oracle renderer.
GaussianScene three_splat_scene();
Camera three_splat_camera();

/// `count` cameras on a ring of `radius` around the origin, looking at it.
CameraSet ring_cameras(std::size_t count, int width = 96, int height = 72, double radius = 4.0,
                       double elevation = 0.4);

Camera look_at(const Vec3d& eye, const Vec3d& target, int width, int height, double focal);

/// Unique, empty directory under the system temp dir, removed on
/// destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "arapgs");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Writes scene.ply, cameras.json and drag.json for the dumbbell into `dir`.
void write_dumbbell_inputs(const std::filesystem::path& dir, std::size_t cameras = 4);

} // namespace arapgs::testing
