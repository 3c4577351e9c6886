#include "arapgs/arapgs.h"

#include "core/camera.hpp"
#include "core/drag_spec.hpp"
#include "core/error.hpp"
#include "core/pipeline.hpp"
#include "core/ply.hpp"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

struct arapgs_scene {
    arapgs::GaussianScene scene;
};

struct arapgs_cameras {
    arapgs::CameraSet cameras;
};

struct arapgs_drag {
    arapgs::DragSpec drag;
};

namespace {

thread_local std::string g_last_error;

arapgs_status status_of(arapgs::ErrorCode code) {
    using arapgs::ErrorCode;
    switch (code) {
    case ErrorCode::Io: return ARAPGS_ERR_IO;
    case ErrorCode::Format: return ARAPGS_ERR_FORMAT;
    case ErrorCode::Schema: return ARAPGS_ERR_SCHEMA;
    case ErrorCode::Data: return ARAPGS_ERR_DATA;
    case ErrorCode::Config: return ARAPGS_ERR_CONFIG;
    case ErrorCode::EmptySelection: return ARAPGS_ERR_EMPTY_SELECTION;
    case ErrorCode::ConflictingConstraint: return ARAPGS_ERR_CONFLICTING_CONSTRAINT;
    case ErrorCode::Solver: return ARAPGS_ERR_SOLVER;
    case ErrorCode::Enhancer: return ARAPGS_ERR_ENHANCER;
    case ErrorCode::ShapeMismatch: return ARAPGS_ERR_SHAPE_MISMATCH;
    case ErrorCode::Internal: return ARAPGS_ERR_INTERNAL;
    }
    return ARAPGS_ERR_INTERNAL;
}

arapgs_status fail(arapgs_status s, std::string msg) {
    g_last_error = std::move(msg);
    return s;
}

// Runs `body`, translating exceptions into status codes. Nothing escapes.
template <class F>
arapgs_status guarded(F&& body) {
    try {
        g_last_error.clear();
        body();
        return ARAPGS_OK;
    } catch (const arapgs::Error& e) {
        return fail(status_of(e.code()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(ARAPGS_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(ARAPGS_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(ARAPGS_ERR_INTERNAL, "unknown exception");
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) throw std::bad_alloc();
    std::memcpy(out, s.data(), s.size() + 1);
    return out;
}

arapgs::RunManifest manifest_from(const char* config_json, int64_t seed) {
    arapgs::RunManifest m;
    if (config_json && *config_json) m = arapgs::parse_manifest(config_json);
    if (seed >= 0) m.seed = static_cast<std::uint64_t>(seed);
    return m;
}

} // namespace

extern "C" {

const char* arapgs_version(void) { return "1.0.0"; }

const char* arapgs_status_name(arapgs_status status) {
    switch (status) {
    case ARAPGS_OK: return "ok";
    case ARAPGS_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case ARAPGS_ERR_IO: return "io";
    case ARAPGS_ERR_FORMAT: return "format";
    case ARAPGS_ERR_SCHEMA: return "schema";
    case ARAPGS_ERR_DATA: return "data";
    case ARAPGS_ERR_CONFIG: return "config";
    case ARAPGS_ERR_EMPTY_SELECTION: return "empty_selection";
    case ARAPGS_ERR_CONFLICTING_CONSTRAINT: return "conflicting_constraint";
    case ARAPGS_ERR_SOLVER: return "solver";
    case ARAPGS_ERR_ENHANCER: return "enhancer";
    case ARAPGS_ERR_SHAPE_MISMATCH: return "shape_mismatch";
    case ARAPGS_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* arapgs_last_error(void) { return g_last_error.c_str(); }

void arapgs_string_free(char* s) { std::free(s); }

arapgs_status arapgs_scene_read_ply(const char* path, arapgs_scene** out) {
    if (!path || !out) return fail(ARAPGS_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] { *out = new arapgs_scene{arapgs::read_ply(path)}; });
}

arapgs_status arapgs_scene_write_ply(const arapgs_scene* scene, const char* path) {
    if (!scene || !path) return fail(ARAPGS_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { arapgs::write_ply(scene->scene, path); });
}

size_t arapgs_scene_count(const arapgs_scene* scene) { return scene ? scene->scene.size() : 0; }

void arapgs_scene_free(arapgs_scene* scene) { delete scene; }

arapgs_status arapgs_cameras_read(const char* path, arapgs_cameras** out) {
    if (!path || !out) return fail(ARAPGS_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] { *out = new arapgs_cameras{arapgs::read_cameras(path)}; });
}

size_t arapgs_cameras_count(const arapgs_cameras* cameras) { return cameras ? cameras->cameras.size() : 0; }

void arapgs_cameras_free(arapgs_cameras* cameras) { delete cameras; }

arapgs_status arapgs_drag_read(const char* path, arapgs_drag** out) {
    if (!path || !out) return fail(ARAPGS_ERR_INVALID_ARGUMENT, "null argument");
    *out = nullptr;
    return guarded([&] { *out = new arapgs_drag{arapgs::read_dragspec(path)}; });
}

void arapgs_drag_free(arapgs_drag* drag) { delete drag; }

arapgs_status arapgs_deform(const arapgs_scene* scene, const arapgs_drag* drag, const char* config_json,
                            int64_t seed, arapgs_scene** out_scene, char** report_json) {
    if (!scene || !drag || !out_scene) return fail(ARAPGS_ERR_INVALID_ARGUMENT, "null argument");
    *out_scene = nullptr;
    if (report_json) *report_json = nullptr;
    return guarded([&] {
        const auto manifest = manifest_from(config_json, seed);
        auto result = arapgs::deform_scene(scene->scene, drag->drag, manifest);
        char* report = report_json ? dup_string(arapgs::report_to_json(result.report)) : nullptr;
        *out_scene = new arapgs_scene{std::move(result.scene)};
        if (report_json) *report_json = report;
    });
}

arapgs_status arapgs_render_views(const arapgs_scene* scene, const arapgs_cameras* cameras, const char* out_dir) {
    if (!scene || !cameras || !out_dir) return fail(ARAPGS_ERR_INVALID_ARGUMENT, "null argument");
    return guarded([&] { arapgs::render_views(scene->scene, cameras->cameras, out_dir); });
}

arapgs_status arapgs_refine(const arapgs_scene* original, const arapgs_scene* deformed,
                            const arapgs_cameras* cameras, const char* config_json, int64_t seed,
                            arapgs_scene** out_scene, char** loss_csv) {
    if (!original || !deformed || !cameras || !out_scene) return fail(ARAPGS_ERR_INVALID_ARGUMENT, "null argument");
    *out_scene = nullptr;
    if (loss_csv) *loss_csv = nullptr;
    return guarded([&] {
        const auto manifest = manifest_from(config_json, seed);
        auto outcome = arapgs::refine_scene(original->scene, deformed->scene, cameras->cameras, manifest);
        char* csv = loss_csv ? dup_string(arapgs::loss_csv(outcome.trace)) : nullptr;
        *out_scene = new arapgs_scene{std::move(outcome.scene)};
        if (loss_csv) *loss_csv = csv;
    });
}

arapgs_status arapgs_eval(const char* original_dir, const char* edited_dir, const arapgs_drag* drag,
                          const arapgs_cameras* cameras, const char* config_json, int64_t seed,
                          char** result_json) {
    if (!original_dir || !edited_dir || !drag || !cameras || !result_json) {
        return fail(ARAPGS_ERR_INVALID_ARGUMENT, "null argument");
    }
    *result_json = nullptr;
    return guarded([&] {
        const auto manifest = manifest_from(config_json, seed);
        const auto outcome =
            arapgs::evaluate_renders(original_dir, edited_dir, drag->drag, cameras->cameras, manifest);
        *result_json = dup_string(arapgs::eval_to_json(outcome));
    });
}

} // extern "C"
