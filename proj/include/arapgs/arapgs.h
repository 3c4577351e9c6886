#ifndef ARAPGS_H
#define ARAPGS_H

/* Shared-library interface to the deformation toolkit. All objects are
 * opaque; every call returns an arapgs_status and, on failure, leaves a
 * message retrievable with arapgs_last_error() on the same thread.
 * Strings returned through char** are owned by the caller and released
 * with arapgs_string_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ARAPGS_API __declspec(dllexport)
#else
#define ARAPGS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum arapgs_status {
    ARAPGS_OK = 0,
    ARAPGS_ERR_INVALID_ARGUMENT = 1,
    ARAPGS_ERR_IO = 2,
    ARAPGS_ERR_FORMAT = 3,
    ARAPGS_ERR_SCHEMA = 4,
    ARAPGS_ERR_DATA = 5,
    ARAPGS_ERR_CONFIG = 6,
    ARAPGS_ERR_EMPTY_SELECTION = 7,
    ARAPGS_ERR_CONFLICTING_CONSTRAINT = 8,
    ARAPGS_ERR_SOLVER = 9,
    ARAPGS_ERR_ENHANCER = 10,
    ARAPGS_ERR_SHAPE_MISMATCH = 11,
    ARAPGS_ERR_INTERNAL = 12
} arapgs_status;

typedef struct arapgs_scene arapgs_scene;
typedef struct arapgs_cameras arapgs_cameras;
typedef struct arapgs_drag arapgs_drag;

ARAPGS_API const char* arapgs_version(void);
ARAPGS_API const char* arapgs_status_name(arapgs_status status);
/* Message of the last failed call on this thread; "" after a success. */
ARAPGS_API const char* arapgs_last_error(void);
ARAPGS_API void arapgs_string_free(char* s);

ARAPGS_API arapgs_status arapgs_scene_read_ply(const char* path, arapgs_scene** out);
ARAPGS_API arapgs_status arapgs_scene_write_ply(const arapgs_scene* scene, const char* path);
ARAPGS_API size_t arapgs_scene_count(const arapgs_scene* scene);
ARAPGS_API void arapgs_scene_free(arapgs_scene* scene);

ARAPGS_API arapgs_status arapgs_cameras_read(const char* path, arapgs_cameras** out);
ARAPGS_API size_t arapgs_cameras_count(const arapgs_cameras* cameras);
ARAPGS_API void arapgs_cameras_free(arapgs_cameras* cameras);

ARAPGS_API arapgs_status arapgs_drag_read(const char* path, arapgs_drag** out);
ARAPGS_API void arapgs_drag_free(arapgs_drag* drag);

/* config_json may be NULL. It uses the run-manifest layout (seed, sampling,
 * graph, arap, propagation, refine, eval); unknown keys are rejected.
 * seed overrides the config's seed when non-negative. */

ARAPGS_API arapgs_status arapgs_deform(const arapgs_scene* scene, const arapgs_drag* drag, const char* config_json,
                                       int64_t seed, arapgs_scene** out_scene, char** report_json);

/* Renders every camera to <out_dir>/view_{i}.png. */
ARAPGS_API arapgs_status arapgs_render_views(const arapgs_scene* scene, const arapgs_cameras* cameras,
                                             const char* out_dir);

ARAPGS_API arapgs_status arapgs_refine(const arapgs_scene* original, const arapgs_scene* deformed,
                                       const arapgs_cameras* cameras, const char* config_json, int64_t seed,
                                       arapgs_scene** out_scene, char** loss_csv);

/* DAI between view_{i}.png renders in the two directories. */
ARAPGS_API arapgs_status arapgs_eval(const char* original_dir, const char* edited_dir, const arapgs_drag* drag,
                                     const arapgs_cameras* cameras, const char* config_json, int64_t seed,
                                     char** result_json);

#ifdef __cplusplus
}
#endif

#endif
