#pragma once

#include "core/camera.hpp"
#include "core/scene.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace arapgs::service {

inline constexpr std::size_t kPreviewLimit = 200000;

/// u32 count, then count records of 3 f32 position + 3 u8 DC color, little
/// endian. Uniform stride subsample when the scene is larger than `limit`.
std::vector<std::uint8_t> encode_pointcloud(const GaussianScene& scene, std::size_t limit = kPreviewLimit);

enum class JobKind { Deform, Refine };
enum class JobStatus { Queued, Running, Done, Failed };

const char* to_string(JobKind kind);
const char* to_string(JobStatus status);

struct JobRecord {
    std::string id;
    std::string scene_id;
    JobKind kind = JobKind::Deform;
    JobStatus status = JobStatus::Queued;
    double progress = 0;
    std::string report;  ///< JSON text, set when done
    std::string error;   ///< set when failed
};

std::string job_to_json(const JobRecord& job);

// Readers take a shared_ptr copy under the session mutex and work on that
// immutable snapshot; a finished job swaps the pointer. Nothing mutates a
// published scene in place.
struct Session {
    std::string id;
    std::shared_ptr<const GaussianScene> original;
    std::shared_ptr<const CameraSet> cameras;
    std::shared_ptr<const std::vector<std::uint8_t>> preview;

    mutable std::mutex mutex;
    std::shared_ptr<const GaussianScene> deformed;
    std::shared_ptr<const std::vector<std::uint8_t>> deformed_preview;
    std::optional<std::string> active_job;
};

struct ServiceOptions {
    std::optional<std::filesystem::path> data_dir; ///< persistence root; in-memory only when unset
    std::string cors_origin = "*";
};

class Service {
public:
    explicit Service(ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Registers all routes on `server`.
    void mount(httplib::Server& server);

    /// Blocks until every queued or running job has finished.
    void wait_idle();

    std::size_t session_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace arapgs::service
