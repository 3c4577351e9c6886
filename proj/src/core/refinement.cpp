#include "core/refinement.hpp"

#include "core/error.hpp"
#include "core/log.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

namespace arapgs {
namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

class TempDir {
public:
    TempDir() {
        std::string pattern = (std::filesystem::temp_directory_path() / "arapgs-enh-XXXXXX").string();
        if (!mkdtemp(pattern.data())) throw Error(ErrorCode::Io, "cannot create temporary directory");
        path_ = pattern;
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

ImageBuffer run_external(const ImageBuffer& image, const std::string& command) {
    if (command.empty()) throw Error(ErrorCode::Enhancer, "external enhancer has no command");
    TempDir dir;
    const auto in = dir.path() / "input.png";
    const auto out = dir.path() / "output.png";
    write_png(image, in);
    const std::string cmd = command + " " + shell_quote(in.string()) + " " + shell_quote(out.string());
    const int status = std::system(cmd.c_str());
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        throw Error(ErrorCode::Enhancer, "enhancer command failed (status " + std::to_string(status) + "): " + cmd);
    }
    ImageBuffer result;
    try {
        result = read_png(out);
    } catch (const Error& e) {
        throw Error(ErrorCode::Enhancer, std::string("enhancer output unreadable: ") + e.what());
    }
    if (result.width != image.width || result.height != image.height) {
        throw Error(ErrorCode::Enhancer, "enhancer changed the image size");
    }
    return result;
}

void dilate(MaskBuffer& mask, int radius) {
    if (radius <= 0) return;
    const int w = mask.width, h = mask.height;
    MaskBuffer tmp(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = 0;
            for (int dx = std::max(0, x - radius); dx <= std::min(w - 1, x + radius) && !v; ++dx) v = mask.at(dx, y);
            tmp.at(x, y) = v;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::uint8_t v = 0;
            for (int dy = std::max(0, y - radius); dy <= std::min(h - 1, y + radius) && !v; ++dy) v = tmp.at(x, dy);
            mask.at(x, y) = v;
        }
    }
}

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-15;
    std::vector<Vec3d> m, v;
    std::size_t t = 0;

    explicit Adam(std::size_t n) : m(n, Vec3d::Zero()), v(n, Vec3d::Zero()) {}

    std::vector<Vec3d> step(const std::vector<Vec3d>& grad, double lr) {
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        std::vector<Vec3d> delta(grad.size());
        for (std::size_t i = 0; i < grad.size(); ++i) {
            m[i] = beta1 * m[i] + (1 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1 - beta2) * grad[i].cwiseProduct(grad[i]);
            const Vec3d mhat = m[i] / c1;
            const Vec3d vhat = v[i] / c2;
            delta[i] = -lr * mhat.array() / (vhat.array().sqrt() + eps);
        }
        return delta;
    }
};

double masked_l1(const ImageBuffer& a, const ImageBuffer& b, const MaskBuffer& mask) {
    double sum = 0;
    std::size_t n = 0;
    for (int y = 0; y < a.height; ++y) {
        for (int x = 0; x < a.width; ++x) {
            if (!mask.at(x, y)) continue;
            ++n;
            for (int c = 0; c < 3; ++c) sum += std::abs(static_cast<double>(a.at(x, y, c)) - b.at(x, y, c));
        }
    }
    return n ? sum / (3.0 * static_cast<double>(n)) : 0.0;
}

} // namespace

EnhancerConfig resolve_enhancer(EnhancerConfig config) {
    if (const char* env = std::getenv("ARAPGS_ENHANCER_CMD"); env && *env) {
        config.kind = EnhancerKind::External;
        config.command = env;
    }
    return config;
}

void RefineConfig::validate() const {
    if (update_period < 1) throw Error(ErrorCode::Config, "refine.update_period must be >= 1");
    if (views_per_update < 1) throw Error(ErrorCode::Config, "refine.views_per_update must be >= 1");
    if (total_iters && *total_iters < 1) throw Error(ErrorCode::Config, "refine.total_iters must be >= 1");
    if (!(displacement_threshold >= 0)) throw Error(ErrorCode::Config, "refine.displacement_threshold must be >= 0");
    if (mask_dilation < 0) throw Error(ErrorCode::Config, "refine.mask_dilation must be >= 0");
    if (!(learning_rate > 0)) throw Error(ErrorCode::Config, "refine.learning_rate must be positive");
    if (enhancer.kind == EnhancerKind::External && enhancer.command.empty()) {
        throw Error(ErrorCode::Config, "external enhancer requires a command");
    }
}

std::size_t default_total_iters(std::size_t gaussian_count) {
    constexpr double lo = 500'000, hi = 3'000'000;
    const double c = static_cast<double>(gaussian_count);
    if (c <= lo) return 800;
    if (c >= hi) return 2000;
    return static_cast<std::size_t>(std::llround(800.0 + (c - lo) / (hi - lo) * 1200.0));
}

std::vector<std::size_t> moved_gaussians(const GaussianScene& original, const GaussianScene& deformed,
                                         double tau_abs) {
    if (original.size() != deformed.size()) throw Error(ErrorCode::ShapeMismatch, "scenes are not index-aligned");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < original.size(); ++i) {
        const double d = (deformed.centers[i].cast<double>() - original.centers[i].cast<double>()).norm();
        if (d > tau_abs) out.push_back(i);
    }
    return out;
}

MaskBuffer displacement_mask(const GaussianScene& original, const GaussianScene& deformed, const Camera& camera,
                             double tau_abs, int dilation) {
    MaskBuffer mask(camera.width, camera.height);
    for (std::size_t i : moved_gaussians(original, deformed, tau_abs)) {
        const auto s = project_one(deformed, i, camera);
        if (!s) continue;
        const int x0 = std::max(0, static_cast<int>(std::floor(s->mean2d.x() - s->radius)));
        const int x1 = std::min(camera.width - 1, static_cast<int>(std::ceil(s->mean2d.x() + s->radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(s->mean2d.y() - s->radius)));
        const int y1 = std::min(camera.height - 1, static_cast<int>(std::ceil(s->mean2d.y() + s->radius)));
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - s->mean2d.x(), dy = y - s->mean2d.y();
                const double power = s->conic.x() * dx * dx + 2 * s->conic.y() * dx * dy + s->conic.z() * dy * dy;
                if (power <= 9.0) mask.at(x, y) = 1;
            }
        }
    }
    dilate(mask, dilation);
    return mask;
}

ImageBuffer merge_images(const ImageBuffer& enhanced, const ImageBuffer& original, const MaskBuffer& mask) {
    if (!enhanced.same_shape(original) || mask.width != original.width || mask.height != original.height) {
        throw Error(ErrorCode::ShapeMismatch, "merge inputs differ in shape");
    }
    ImageBuffer out = original;
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            if (!mask.at(x, y)) continue;
            for (int c = 0; c < out.channels; ++c) out.at(x, y, c) = enhanced.at(x, y, c);
        }
    }
    return out;
}

ImageBuffer sharpen(const ImageBuffer& image) {
    static constexpr double blur[3] = {0.25, 0.5, 0.25};
    ImageBuffer out(image.width, image.height, image.channels);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < image.channels; ++c) {
                double b = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    const int yy = std::clamp(y + dy, 0, image.height - 1);
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int xx = std::clamp(x + dx, 0, image.width - 1);
                        b += blur[dy + 1] * blur[dx + 1] * image.at(xx, yy, c);
                    }
                }
                const double v = 2.0 * image.at(x, y, c) - b;
                out.at(x, y, c) = static_cast<float>(std::clamp(v, 0.0, 1.0));
            }
        }
    }
    return out;
}

ImageBuffer enhance(const ImageBuffer& image, const EnhancerConfig& config) {
    switch (config.kind) {
    case EnhancerKind::Identity: return image;
    case EnhancerKind::Sharpen: return sharpen(image);
    case EnhancerKind::External: return run_external(image, config.command);
    }
    throw Error(ErrorCode::Internal, "unknown enhancer");
}

ViewDataset build_view_dataset(const GaussianScene& original, const GaussianScene& deformed,
                               const CameraSet& cameras, const RefineConfig& config) {
    const double tau_abs = config.displacement_threshold * bounds(original).diagonal();
    ViewDataset views;
    views.reserve(cameras.size());
    for (const auto& cam : cameras) {
        ViewData v;
        v.camera = cam;
        if (cam.image_path) {
            v.original = read_png(*cam.image_path);
            if (v.original.width != cam.width || v.original.height != cam.height) {
                throw Error(ErrorCode::ShapeMismatch,
                            "image '" + cam.image_path->string() + "' does not match its camera size");
            }
        } else {
            v.original = render(original, cam, config.background);
        }
        v.supervision = v.original;
        v.mask = displacement_mask(original, deformed, cam, tau_abs, config.mask_dilation);
        views.push_back(std::move(v));
    }
    return views;
}

RefineResult refine(const GaussianScene& deformed, ViewDataset& views, std::span<const std::size_t> trainable,
                    const RefineConfig& config, const RefineProgress& progress) {
    config.validate();
    if (views.empty()) throw Error(ErrorCode::Config, "refinement needs at least one view");
    for (const auto& v : views) {
        if (v.mask.width != v.camera.width || v.mask.height != v.camera.height ||
            v.original.width != v.camera.width || v.original.height != v.camera.height ||
            !v.supervision.same_shape(v.original)) {
            throw Error(ErrorCode::ShapeMismatch, "view images or mask do not match the camera size");
        }
    }

    RefineResult result;
    result.scene = deformed;
    GaussianScene& scene = result.scene;

    std::vector<std::ptrdiff_t> slot(scene.size(), -1);
    for (std::size_t s = 0; s < trainable.size(); ++s) {
        if (trainable[s] >= scene.size()) throw Error(ErrorCode::Data, "trainable index out of range");
        slot[trainable[s]] = static_cast<std::ptrdiff_t>(s);
    }

    const std::size_t total = config.total_iters ? *config.total_iters : default_total_iters(scene.size());
    Adam adam(trainable.size());
    std::size_t update_cursor = 0;

    for (std::size_t step = 0; step < total; ++step) {
        if (step > 0 && step % config.update_period == 0) {
            for (std::size_t u = 0; u < config.views_per_update; ++u) {
                ViewData& v = views[update_cursor];
                update_cursor = (update_cursor + 1) % views.size();
                const ImageBuffer current = render(scene, v.camera, config.background);
                ImageBuffer enhanced;
                try {
                    enhanced = enhance(current, config.enhancer);
                } catch (const Error& e) {
                    ++result.enhancer_failures;
                    const std::string msg = std::string("enhancer failed, using the render as-is: ") + e.what();
                    log::warn(msg);
                    result.warnings.push_back(msg);
                    enhanced = current;
                }
                v.supervision = merge_images(enhanced, v.original, v.mask);
                v.last_enhanced = step;
            }
        }

        const std::size_t vi = step % views.size();
        ViewData& view = views[vi];
        const auto splats = project(scene, view.camera);
        CompositeTrace trace;
        const ImageBuffer image = rasterize(splats, view.camera, config.background, &trace, &view.mask);
        const double loss = masked_l1(image, view.supervision, view.mask);
        result.trace.push_back(LossRecord{step, vi, loss});
        if (progress) progress(step + 1, total);

        const std::size_t masked = view.mask.count();
        if (masked == 0 || trainable.empty() || loss == 0.0) continue;
        const double norm = 1.0 / (3.0 * static_cast<double>(masked));

        // Residuals and gradient of the masked L1 loss. Blending weights do
        // not depend on color, so the render is affine in sh_dc.
        std::vector<Vec3d> grad(trainable.size(), Vec3d::Zero());
        const std::size_t pixels = static_cast<std::size_t>(image.width) * image.height;
        std::vector<Vec3d> residual(pixels, Vec3d::Zero());
        for (std::size_t p = 0; p < pixels; ++p) {
            if (!view.mask.bits[p]) continue;
            const int x = static_cast<int>(p % image.width), y = static_cast<int>(p / image.width);
            Vec3d r;
            for (int c = 0; c < 3; ++c) r[c] = static_cast<double>(image.at(x, y, c)) - view.supervision.at(x, y, c);
            residual[p] = r;
            const Vec3d sign = r.unaryExpr([](double v) { return static_cast<double>((v > 0) - (v < 0)); });
            for (std::uint32_t e = trace.offsets[p]; e < trace.offsets[p + 1]; ++e) {
                const Splat2D& s = splats[trace.splat[e]];
                const std::ptrdiff_t k = slot[s.gaussian];
                if (k < 0) continue;
                const Vec3d live = (s.color.array() > 0).cast<double>();
                grad[static_cast<std::size_t>(k)] += (norm * kShC0 * trace.weight[e]) * sign.cwiseProduct(live);
            }
        }
        const std::vector<Vec3d> delta = adam.step(grad, config.learning_rate);

        // Predicted change of each masked pixel under the full step.
        std::vector<Vec3d> change(pixels, Vec3d::Zero());
        for (std::size_t p = 0; p < pixels; ++p) {
            if (!view.mask.bits[p]) continue;
            for (std::uint32_t e = trace.offsets[p]; e < trace.offsets[p + 1]; ++e) {
                const Splat2D& s = splats[trace.splat[e]];
                const std::ptrdiff_t k = slot[s.gaussian];
                if (k < 0) continue;
                const Vec3d live = (s.color.array() > 0).cast<double>();
                change[p] += (kShC0 * trace.weight[e]) * delta[static_cast<std::size_t>(k)].cwiseProduct(live);
            }
        }
        auto predicted = [&](double eta) {
            double sum = 0;
            for (std::size_t p = 0; p < pixels; ++p) {
                if (view.mask.bits[p]) sum += (residual[p] + eta * change[p]).cwiseAbs().sum();
            }
            return sum * norm;
        };
        // Backtrack on the exact linear model so a frozen target never sees
        // the loss go up.
        const double base = predicted(0.0);
        double eta = 1.0;
        while (eta > 1.0 / 1024 && predicted(eta) > base) eta *= 0.5;
        if (predicted(eta) > base) continue;
        for (std::size_t k = 0; k < trainable.size(); ++k) {
            Vec3f& dc = scene.sh_dc[trainable[k]];
            dc = (dc.cast<double>() + eta * delta[k]).cast<float>();
        }
    }
    return result;
}

std::string loss_csv(std::span<const LossRecord> trace) {
    std::ostringstream out;
    out.precision(17);
    out << "step,view,loss\n";
    for (const auto& r : trace) out << r.step << ',' << r.view << ',' << r.loss << '\n';
    return out.str();
}

} // namespace arapgs
