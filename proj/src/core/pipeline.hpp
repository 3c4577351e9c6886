#pragma once

#include "core/arap.hpp"
#include "core/camera.hpp"
#include "core/drag_spec.hpp"
#include "core/metrics.hpp"
#include "core/propagation.hpp"
#include "core/refinement.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace arapgs {

struct SamplingConfig {
    std::size_t n_sub = 16384;
};

struct GraphConfig {
    std::size_t k = 32;
    WeightMode weight_mode = WeightMode::Uniform;
};

struct EvalConfig {
    std::vector<int> gammas = kDefaultGammas;
    std::size_t views = kDefaultDaiViews;
};

/// Everything a batch run needs. The JSON form mirrors these fields; see
/// parse_manifest.
struct RunManifest {
    std::optional<std::filesystem::path> scene;
    std::optional<std::filesystem::path> drag;
    std::optional<std::filesystem::path> cameras;
    std::optional<std::filesystem::path> out;
    std::uint64_t seed = 0;
    SamplingConfig sampling;
    GraphConfig graph;
    ArapConfig arap;
    PropagationConfig propagation;
    RefineConfig refine;
    EvalConfig eval;

    void validate() const;
};

/// Overlays the JSON configuration onto `base`. Unknown keys are rejected
/// with the JSON pointer of the offending field (ErrorCode::Config).
RunManifest parse_manifest(std::string_view text, const RunManifest& base = {},
                           const std::filesystem::path& base_dir = {});
std::string manifest_to_json(const RunManifest& manifest);

struct SnapReport {
    std::string kind; ///< "handle" or "anchor"
    std::size_t index = 0;
    std::size_t gaussian = 0;
    double distance = 0;
};

struct DeformReport {
    std::uint64_t seed = 0;
    std::size_t gaussians = 0;
    std::size_t active = 0;
    std::size_t subset = 0;
    std::size_t directed_edges = 0;
    std::size_t graph_k = 0;
    ConstraintStats constraints;
    std::vector<SnapReport> snaps;
    std::vector<double> energy_trace;
    std::size_t iterations = 0;
    bool converged = false;
    double interpolation_temperature = 0;
    std::size_t antipodal_fallbacks = 0;
    std::vector<std::pair<std::string, double>> timings_ms;
    std::vector<std::string> warnings;
};

std::string report_to_json(const DeformReport& report);

struct DeformResult {
    GaussianScene scene;
    DeformReport report;
};

using StageProgress = std::function<void(double fraction)>;

/// Snapping and handle-conflict check only; cheap enough to run before
/// queuing a deformation. Throws like deform_scene would.
void check_drag(const GaussianScene& scene, const DragSpec& drag, const RunManifest& manifest);

/// sample -> graph -> constraints -> ARAP -> propagation.
DeformResult deform_scene(const GaussianScene& scene, const DragSpec& drag, const RunManifest& manifest,
                          const StageProgress& progress = {});

struct RefineOutcome {
    GaussianScene scene;
    std::vector<LossRecord> trace;
    std::size_t trainable = 0;
    std::size_t enhancer_failures = 0;
    std::vector<std::string> warnings;
};

RefineOutcome refine_scene(const GaussianScene& original, const GaussianScene& deformed, const CameraSet& cameras,
                           const RunManifest& manifest, const StageProgress& progress = {});

std::string view_filename(std::size_t index);

/// Writes view_{i}.png for every camera; returns the written paths.
std::vector<std::filesystem::path> render_views(const GaussianScene& scene, const CameraSet& cameras,
                                                const std::filesystem::path& out_dir,
                                                const Vec3d& background = Vec3d::Zero());

struct EvalOutcome {
    DaiResult result;
    std::vector<std::size_t> views; ///< camera indices that entered the metric
    std::vector<std::string> warnings;
};

/// DAI over renders stored as view_{i}.png in the two directories.
EvalOutcome evaluate_renders(const std::filesystem::path& original_dir, const std::filesystem::path& edited_dir,
                             const DragSpec& drag, const CameraSet& cameras, const RunManifest& manifest);

std::string eval_to_json(const EvalOutcome& outcome);

} // namespace arapgs
