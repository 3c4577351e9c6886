#pragma once

#include "core/camera.hpp"
#include "core/drag_spec.hpp"
#include "core/image.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace arapgs {

struct Pixel {
    int x = 0;
    int y = 0;

    friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Pinhole projection rounded to the nearest pixel; nothing when the point
/// is not in front of the camera.
std::optional<Pixel> project_point(const Camera& camera, const Vec3d& world);

struct HandlePixels {
    Pixel source; ///< p: handle in the original view
    Pixel target; ///< q: target in the edited view
};

struct ViewHandles {
    std::size_t view = 0;
    std::vector<HandlePixels> pairs;
};

/// Projects every handle and its target into each camera. Views where any
/// point falls behind the camera are skipped with a warning.
std::vector<ViewHandles> project_handles(std::span<const Handle> handles, const CameraSet& cameras,
                                         std::vector<std::string>* warnings = nullptr);

inline const std::vector<int> kDefaultGammas = {1, 5, 10, 20};
inline constexpr std::size_t kDefaultDaiViews = 10;

struct DaiView {
    const ImageBuffer* original = nullptr;
    const ImageBuffer* edited = nullptr;
    std::vector<HandlePixels> pairs;
};

struct DaiResult {
    double dai = 0;
    std::vector<std::pair<int, double>> per_gamma;
    std::vector<double> per_view; ///< mean over gammas of each view's handle sum
};

/// Squared L2 distance between the (1+2g)^2 patches around p in `a` and q
/// in `b`, summed over channels, clamp-to-edge at borders, divided by the
/// patch area.
double patch_term(const ImageBuffer& a, Pixel p, const ImageBuffer& b, Pixel q, int gamma);

/// Dragging accuracy index: for each gamma, the handle-summed patch terms
/// averaged over views; the result is the mean over gammas.
DaiResult dai(std::span<const DaiView> views, std::span<const int> gammas = kDefaultGammas);

/// Seeded choice of min(n, count) distinct view indices, ascending.
std::vector<std::size_t> select_views(std::size_t count, std::size_t n, std::uint64_t seed);

} // namespace arapgs
