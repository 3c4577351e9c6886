#include "core/metrics.hpp"

#include "core/error.hpp"
#include "core/log.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace arapgs {

std::optional<Pixel> project_point(const Camera& camera, const Vec3d& world) {
    const Vec3d c = camera.to_camera(world);
    if (!(c.z() > 0)) return std::nullopt;
    const double u = camera.fx * c.x() / c.z() + camera.cx;
    const double v = camera.fy * c.y() / c.z() + camera.cy;
    if (!std::isfinite(u) || !std::isfinite(v) || std::abs(u) > 1e9 || std::abs(v) > 1e9) return std::nullopt;
    return Pixel{static_cast<int>(std::lround(u)), static_cast<int>(std::lround(v))};
}

std::vector<ViewHandles> project_handles(std::span<const Handle> handles, const CameraSet& cameras,
                                         std::vector<std::string>* warnings) {
    std::vector<ViewHandles> out;
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        ViewHandles vh{v, {}};
        bool ok = true;
        for (const auto& h : handles) {
            const auto p = project_point(cameras[v], h.source);
            const auto q = project_point(cameras[v], h.target);
            if (!p || !q) {
                ok = false;
                break;
            }
            vh.pairs.push_back(HandlePixels{*p, *q});
        }
        if (!ok) {
            const std::string msg = "view " + std::to_string(v) + " skipped: a handle lies behind the camera";
            log::warn(msg);
            if (warnings) warnings->push_back(msg);
            continue;
        }
        out.push_back(std::move(vh));
    }
    return out;
}

double patch_term(const ImageBuffer& a, Pixel p, const ImageBuffer& b, Pixel q, int gamma) {
    if (a.channels != b.channels) throw Error(ErrorCode::ShapeMismatch, "patch images differ in channel count");
    if (gamma < 0) throw Error(ErrorCode::Config, "gamma must be non-negative");
    double sum = 0;
    for (int dy = -gamma; dy <= gamma; ++dy) {
        for (int dx = -gamma; dx <= gamma; ++dx) {
            const int ax = std::clamp(p.x + dx, 0, a.width - 1), ay = std::clamp(p.y + dy, 0, a.height - 1);
            const int bx = std::clamp(q.x + dx, 0, b.width - 1), by = std::clamp(q.y + dy, 0, b.height - 1);
            for (int c = 0; c < a.channels; ++c) {
                const double d = static_cast<double>(a.at(ax, ay, c)) - b.at(bx, by, c);
                sum += d * d;
            }
        }
    }
    const double side = 1.0 + 2.0 * gamma;
    return sum / (side * side);
}

DaiResult dai(std::span<const DaiView> views, std::span<const int> gammas) {
    if (views.empty()) throw Error(ErrorCode::Config, "DAI needs at least one view");
    if (gammas.empty()) throw Error(ErrorCode::Config, "DAI needs at least one gamma");
    DaiResult r;
    r.per_view.assign(views.size(), 0.0);
    const double n = static_cast<double>(views.size());
    for (int g : gammas) {
        double total = 0;
        for (std::size_t v = 0; v < views.size(); ++v) {
            const DaiView& view = views[v];
            if (!view.original || !view.edited) throw Error(ErrorCode::Config, "DAI view is missing an image");
            double s = 0;
            for (const auto& pair : view.pairs) s += patch_term(*view.original, pair.source, *view.edited, pair.target, g);
            total += s;
            r.per_view[v] += s / static_cast<double>(gammas.size());
        }
        r.per_gamma.emplace_back(g, total / n);
    }
    for (const auto& [g, value] : r.per_gamma) r.dai += value;
    r.dai /= static_cast<double>(gammas.size());
    return r;
}

std::vector<std::size_t> select_views(std::size_t count, std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> all(count);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (n >= count) return all;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        // Same unbiased draw as subset sampling.
        const std::uint64_t range = count - i;
        const std::uint64_t threshold = (0 - range) % range;
        std::uint64_t x;
        do {
            x = rng();
        } while (x < threshold);
        std::swap(all[i], all[i + static_cast<std::size_t>(x % range)]);
    }
    all.resize(n);
    std::sort(all.begin(), all.end());
    return all;
}

} // namespace arapgs
