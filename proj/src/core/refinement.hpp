#pragma once

#include "core/camera.hpp"
#include "core/image.hpp"
#include "core/renderer.hpp"
#include "core/scene.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace arapgs {

enum class EnhancerKind { Identity, Sharpen, External };

struct EnhancerConfig {
    EnhancerKind kind = EnhancerKind::Identity;
    std::string command; ///< invoked as `<command> <input.png> <output.png>`
};

/// Applies ARAPGS_ENHANCER_CMD when set: the enhancer becomes external with
/// that command.
EnhancerConfig resolve_enhancer(EnhancerConfig config);

struct RefineConfig {
    std::size_t update_period = 10;   ///< dataset update every t steps
    std::size_t views_per_update = 1; ///< views enhanced per update
    std::optional<std::size_t> total_iters; ///< derived from scene size when unset
    double displacement_threshold = 0.01;   ///< fraction of the scene bbox diagonal
    int mask_dilation = 4;                  ///< pixels
    double learning_rate = 0.0025;          ///< Adam step size for sh_dc
    EnhancerConfig enhancer;
    Vec3d background = Vec3d::Zero();

    void validate() const;
};

/// 800 steps up to 500k Gaussians, 2000 from 3000k, linear in between.
std::size_t default_total_iters(std::size_t gaussian_count);

/// Gaussians whose center moved farther than tau_abs (scene units).
std::vector<std::size_t> moved_gaussians(const GaussianScene& original, const GaussianScene& deformed,
                                         double tau_abs);

/// 3-sigma footprints of the moved Gaussians (at their deformed pose),
/// followed by a square dilation of `dilation` pixels.
MaskBuffer displacement_mask(const GaussianScene& original, const GaussianScene& deformed, const Camera& camera,
                             double tau_abs, int dilation);

/// M * enhanced + (1 - M) * original, per pixel.
ImageBuffer merge_images(const ImageBuffer& enhanced, const ImageBuffer& original, const MaskBuffer& mask);

/// 3x3 unsharp mask: 2*delta - binomial blur ([1 2 1]^T [1 2 1] / 16),
/// clamp-to-edge borders, output clamped to [0, 1]. Kernel taps sum to 1.
ImageBuffer sharpen(const ImageBuffer& image);

/// Throws Enhancer when an external command fails or changes the image size.
ImageBuffer enhance(const ImageBuffer& image, const EnhancerConfig& config);

struct ViewData {
    Camera camera;
    ImageBuffer original;    ///< I_gt
    ImageBuffer supervision; ///< current target, I_gt until the first update
    MaskBuffer mask;
    std::optional<std::size_t> last_enhanced;
};

using ViewDataset = std::vector<ViewData>;

/// Ground truth comes from each camera's image when present, otherwise from
/// a render of the original scene.
ViewDataset build_view_dataset(const GaussianScene& original, const GaussianScene& deformed,
                               const CameraSet& cameras, const RefineConfig& config);

struct LossRecord {
    std::size_t step = 0;
    std::size_t view = 0;
    double loss = 0;
};

struct RefineResult {
    GaussianScene scene;
    std::vector<LossRecord> trace;
    std::size_t enhancer_failures = 0;
    std::vector<std::string> warnings;
};

using RefineProgress = std::function<void(std::size_t step, std::size_t total)>;

/// Appearance fine-tuning of sh_dc for the `trainable` Gaussians against
/// masked supervision, with round-robin dataset updates every
/// `update_period` steps.
RefineResult refine(const GaussianScene& deformed, ViewDataset& views, std::span<const std::size_t> trainable,
                    const RefineConfig& config, const RefineProgress& progress = {});

std::string loss_csv(std::span<const LossRecord> trace);

} // namespace arapgs
