#include "service/service.hpp"

#include "core/error.hpp"
#include "core/image.hpp"
#include "core/log.hpp"
#include "core/pipeline.hpp"
#include "core/ply.hpp"
#include "core/renderer.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace arapgs::service {

using json = nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(JobKind kind) { return kind == JobKind::Deform ? "deform" : "refine"; }

const char* to_string(JobStatus status) {
    switch (status) {
    case JobStatus::Queued: return "queued";
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
    }
    return "failed";
}

std::string job_to_json(const JobRecord& job) {
    json j = {{"id", job.id},
              {"scene_id", job.scene_id},
              {"kind", to_string(job.kind)},
              {"status", to_string(job.status)},
              {"progress", job.progress}};
    j["report"] = job.report.empty() ? json(nullptr) : json::parse(job.report);
    j["error"] = job.error.empty() ? json(nullptr) : json(job.error);
    return j.dump();
}

std::vector<std::uint8_t> encode_pointcloud(const GaussianScene& scene, std::size_t limit) {
    const std::size_t n = scene.size();
    const std::size_t count = std::min(n, limit);
    std::vector<std::uint8_t> out(4 + count * 15);
    auto put32 = [&](std::size_t at, std::uint32_t v) {
        for (int b = 0; b < 4; ++b) out[at + b] = static_cast<std::uint8_t>(v >> (8 * b));
    };
    put32(0, static_cast<std::uint32_t>(count));
    std::size_t at = 4;
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t i = count == n ? k : static_cast<std::size_t>((static_cast<unsigned __int128>(k) * n) / count);
        for (int c = 0; c < 3; ++c) {
            std::uint32_t bits;
            const float f = scene.centers[i][c];
            std::memcpy(&bits, &f, 4);
            put32(at, bits);
            at += 4;
        }
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(kShC0 * scene.sh_dc[i][c] + 0.5, 0.0, 1.0);
            out[at++] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
    return out;
}

namespace {

int http_status_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::Io:
    case ErrorCode::Format:
    case ErrorCode::Schema:
    case ErrorCode::Data:
    case ErrorCode::Config: return 400;
    case ErrorCode::EmptySelection:
    case ErrorCode::ConflictingConstraint: return 422;
    default: return 500;
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, {{"error", code}, {"message", message}});
}

void send_error(httplib::Response& res, const Error& e, int status = 0) {
    send_error(res, status ? status : http_status_for(e.code()), to_string(e.code()), e.what());
}

void write_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    write_file_bytes(tmp, bytes);
    fs::rename(tmp, path);
}

void write_atomic(const fs::path& path, const std::string& text) {
    write_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const fs::path& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

// Body is either a bare drag.json or {"drag": ..., "config": ..., "seed": n}.
struct JobRequest {
    json drag;
    RunManifest manifest;
};

JobRequest parse_job_request(const std::string& body, bool needs_drag) {
    json j;
    if (body.empty()) {
        j = json::object();
    } else {
        try {
            j = json::parse(body);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::Config, std::string("request body is not valid JSON: ") + e.what());
        }
    }
    if (!j.is_object()) throw Error(ErrorCode::Config, "request body must be a JSON object");
    JobRequest r;
    const bool wrapped = j.contains("drag") || j.contains("config") || j.contains("seed");
    if (needs_drag) r.drag = wrapped ? j.value("drag", json()) : j;
    if (wrapped) {
        for (const auto& [k, v] : j.items()) {
            if (k != "drag" && k != "config" && k != "seed") throw Error(ErrorCode::Config, "/" + k + ": unknown key");
        }
        if (j.contains("config") && !j["config"].is_null()) {
            if (!j["config"].is_object()) throw Error(ErrorCode::Config, "/config: expected object");
            r.manifest = parse_manifest(j["config"].dump());
        }
        if (j.contains("seed")) {
            const auto& s = j["seed"];
            if (!s.is_number_unsigned()) throw Error(ErrorCode::Config, "/seed: expected non-negative integer");
            r.manifest.seed = s.get<std::uint64_t>();
        }
    }
    return r;
}

} // namespace

struct Service::Impl {
    ServiceOptions options;

    mutable std::mutex sessions_mutex;
    std::map<std::string, std::shared_ptr<Session>> sessions;

    std::mutex jobs_mutex;
    std::condition_variable jobs_cv;
    std::map<std::string, JobRecord> jobs;
    std::vector<std::thread> workers;
    std::size_t pending = 0;

    std::mutex id_mutex;
    std::mt19937_64 id_rng{std::random_device{}()};

    explicit Impl(ServiceOptions o) : options(std::move(o)) {
        if (options.data_dir) rehydrate();
    }

    ~Impl() {
        std::vector<std::thread> to_join;
        {
            std::lock_guard lock(jobs_mutex);
            to_join.swap(workers);
        }
        for (auto& t : to_join) t.join();
    }

    std::string new_id(char prefix) {
        std::lock_guard lock(id_mutex);
        char buf[24];
        std::snprintf(buf, sizeof buf, "%c%016llx", prefix, static_cast<unsigned long long>(id_rng()));
        return buf;
    }

    std::shared_ptr<Session> find_session(const std::string& id) const {
        std::lock_guard lock(sessions_mutex);
        auto it = sessions.find(id);
        return it == sessions.end() ? nullptr : it->second;
    }

    fs::path session_dir(const std::string& id) const { return *options.data_dir / "sessions" / id; }
    fs::path job_path(const std::string& id) const { return *options.data_dir / "jobs" / (id + ".json"); }

    void persist_job(const JobRecord& job) {
        if (!options.data_dir) return;
        try {
            write_atomic(job_path(job.id), job_to_json(job));
        } catch (const std::exception& e) {
            log::warn("cannot persist job " + job.id + ": " + e.what());
        }
    }

    void rehydrate() {
        const fs::path root = *options.data_dir;
        std::error_code ec;
        fs::create_directories(root / "sessions", ec);
        fs::create_directories(root / "jobs", ec);
        for (const auto& entry : fs::directory_iterator(root / "sessions", ec)) {
            if (!entry.is_directory()) continue;
            const std::string id = entry.path().filename().string();
            try {
                auto s = std::make_shared<Session>();
                s->id = id;
                s->original = std::make_shared<const GaussianScene>(read_ply(entry.path() / "original.ply"));
                s->cameras = std::make_shared<const CameraSet>(parse_cameras(read_text(entry.path() / "cameras.json")));
                s->preview = std::make_shared<const std::vector<std::uint8_t>>(encode_pointcloud(*s->original));
                if (fs::exists(entry.path() / "deformed.ply")) {
                    s->deformed = std::make_shared<const GaussianScene>(read_ply(entry.path() / "deformed.ply"));
                    s->deformed_preview =
                        std::make_shared<const std::vector<std::uint8_t>>(encode_pointcloud(*s->deformed));
                }
                sessions.emplace(id, std::move(s));
            } catch (const std::exception& e) {
                log::warn("skipping stored session " + id + ": " + e.what());
            }
        }
        for (const auto& entry : fs::directory_iterator(root / "jobs", ec)) {
            if (entry.path().extension() != ".json") continue;
            try {
                const json j = json::parse(read_text(entry.path()));
                JobRecord job;
                job.id = j.at("id").get<std::string>();
                job.scene_id = j.at("scene_id").get<std::string>();
                job.kind = j.at("kind") == "deform" ? JobKind::Deform : JobKind::Refine;
                const std::string st = j.at("status").get<std::string>();
                job.status = st == "done" ? JobStatus::Done : JobStatus::Failed;
                job.progress = j.value("progress", 0.0);
                if (!j["report"].is_null()) job.report = j["report"].dump();
                if (job.status == JobStatus::Failed) {
                    job.error = j["error"].is_string() ? j["error"].get<std::string>() : "interrupted by restart";
                }
                jobs.emplace(job.id, std::move(job));
            } catch (const std::exception& e) {
                log::warn("skipping stored job " + entry.path().string() + ": " + e.what());
            }
        }
    }

    void set_job(const std::string& id, const std::function<void(JobRecord&)>& update) {
        JobRecord copy;
        {
            std::lock_guard lock(jobs_mutex);
            update(jobs.at(id));
            copy = jobs.at(id);
        }
        if (copy.status == JobStatus::Done || copy.status == JobStatus::Failed) persist_job(copy);
    }

    // Claims the session's mutation right and queues `work` on its own
    // thread. Returns the job id, or nothing when another job holds the
    // right.
    std::optional<std::string> launch(const std::shared_ptr<Session>& session, JobKind kind,
                                      std::function<std::string(const std::function<void(double)>&)> work) {
        const std::string job_id = new_id('j');
        {
            std::lock_guard lock(session->mutex);
            if (session->active_job) return std::nullopt;
            session->active_job = job_id;
        }
        std::lock_guard lock(jobs_mutex);
        jobs[job_id] = JobRecord{job_id, session->id, kind, JobStatus::Queued, 0.0, {}, {}};
        ++pending;
        workers.emplace_back([this, session, job_id, work = std::move(work)] {
            set_job(job_id, [](JobRecord& j) { j.status = JobStatus::Running; });
            std::string report, error;
            try {
                report = work([&](double f) {
                    std::lock_guard l(jobs_mutex);
                    auto& j = jobs.at(job_id);
                    j.progress = std::max(j.progress, std::min(f, 1.0));
                });
            } catch (const std::exception& e) {
                error = e.what();
            }
            {
                std::lock_guard l(session->mutex);
                session->active_job.reset();
            }
            set_job(job_id, [&](JobRecord& j) {
                if (error.empty()) {
                    j.status = JobStatus::Done;
                    j.progress = 1.0;
                    j.report = report;
                } else {
                    j.status = JobStatus::Failed;
                    j.error = error;
                }
            });
            std::lock_guard l(jobs_mutex);
            --pending;
            jobs_cv.notify_all();
        });
        return job_id;
    }

    void publish_deformed(Session& s, GaussianScene scene) {
        auto scene_ptr = std::make_shared<const GaussianScene>(std::move(scene));
        auto preview = std::make_shared<const std::vector<std::uint8_t>>(encode_pointcloud(*scene_ptr));
        if (options.data_dir) write_atomic(session_dir(s.id) / "deformed.ply", encode_ply(*scene_ptr));
        std::lock_guard lock(s.mutex);
        s.deformed = std::move(scene_ptr);
        s.deformed_preview = std::move(preview);
    }

    // Snapshot of the requested scene, or null.
    std::shared_ptr<const GaussianScene> snapshot(const Session& s, const std::string& which) const {
        if (which.empty() || which == "original") return s.original;
        if (which == "deformed") {
            std::lock_guard lock(s.mutex);
            return s.deformed;
        }
        return nullptr;
    }

    // ---- handlers ---------------------------------------------------------

    void post_scene(const httplib::Request& req, httplib::Response& res) {
        if (!req.has_file("ply") || !req.has_file("cameras")) {
            send_error(res, 400, "schema", "multipart fields 'ply' and 'cameras' are required");
            return;
        }
        const std::string& ply = req.get_file_value("ply").content;
        const std::string& cams = req.get_file_value("cameras").content;
        auto s = std::make_shared<Session>();
        try {
            s->original = std::make_shared<const GaussianScene>(
                parse_ply(std::span(reinterpret_cast<const std::uint8_t*>(ply.data()), ply.size())));
            s->original->validate();
            s->cameras = std::make_shared<const CameraSet>(parse_cameras(cams));
        } catch (const Error& e) {
            send_error(res, e, 400);
            return;
        }
        s->preview = std::make_shared<const std::vector<std::uint8_t>>(encode_pointcloud(*s->original));
        s->id = new_id('s');
        if (options.data_dir) {
            const fs::path dir = session_dir(s->id);
            write_atomic(dir / "original.ply", std::span(reinterpret_cast<const std::uint8_t*>(ply.data()), ply.size()));
            write_atomic(dir / "cameras.json", cameras_to_json(*s->cameras));
        }
        {
            std::lock_guard lock(sessions_mutex);
            sessions.emplace(s->id, s);
        }
        send_json(res, 201, {{"scene_id", s->id}, {"gaussians", s->original->size()}, {"cameras", s->cameras->size()}});
    }

    void get_scene(const std::shared_ptr<Session>& s, httplib::Response& res) {
        json cams = json::array();
        for (const auto& c : *s->cameras) cams.push_back({{"width", c.width}, {"height", c.height}});
        std::lock_guard lock(s->mutex);
        send_json(res, 200,
                  {{"scene_id", s->id},
                   {"gaussians", s->original->size()},
                   {"cameras", cams},
                   {"has_deformed", s->deformed != nullptr},
                   {"active_job", s->active_job ? json(*s->active_job) : json(nullptr)}});
    }

    void get_render(const std::shared_ptr<Session>& s, const httplib::Request& req, httplib::Response& res) {
        const std::string which = req.has_param("which") ? req.get_param_value("which") : "original";
        if (which != "original" && which != "deformed") {
            send_error(res, 400, "config", "which must be 'original' or 'deformed'");
            return;
        }
        long cam = -1;
        if (req.has_param("cam")) {
            try {
                cam = std::stol(req.get_param_value("cam"));
            } catch (const std::exception&) {
                cam = -1;
            }
        }
        if (cam < 0 || static_cast<std::size_t>(cam) >= s->cameras->size()) {
            send_error(res, 404, "not_found", "unknown camera");
            return;
        }
        auto scene = snapshot(*s, which);
        if (!scene) {
            send_error(res, 404, "not_found", "no deformed scene yet");
            return;
        }
        const auto png = encode_png(render(*scene, (*s->cameras)[cam]));
        res.status = 200;
        res.set_content(std::string(png.begin(), png.end()), "image/png");
    }

    void post_pick(const std::shared_ptr<Session>& s, const httplib::Request& req, httplib::Response& res) {
        json j;
        try {
            j = json::parse(req.body);
        } catch (const json::parse_error&) {
            send_error(res, 400, "schema", "request body is not valid JSON");
            return;
        }
        if (!j.is_object() || !j.contains("cam") || !j.contains("x") || !j.contains("y") ||
            !j["cam"].is_number_integer() || !j["x"].is_number() || !j["y"].is_number()) {
            send_error(res, 400, "schema", "expected {cam, x, y}");
            return;
        }
        const long long cam = j["cam"].get<long long>();
        if (cam < 0 || static_cast<std::size_t>(cam) >= s->cameras->size()) {
            send_error(res, 404, "not_found", "unknown camera");
            return;
        }
        const Camera& c = (*s->cameras)[cam];
        const double x = j["x"].get<double>(), y = j["y"].get<double>();
        if (!(x >= 0 && y >= 0 && x < c.width && y < c.height)) {
            send_error(res, 400, "config", "pixel out of bounds");
            return;
        }
        auto scene = snapshot(*s, j.value("which", std::string("original")));
        if (!scene) {
            send_error(res, 404, "not_found", "no such scene version");
            return;
        }
        const auto hit = depth_at(*scene, c, static_cast<int>(x), static_cast<int>(y));
        if (!hit) {
            send_error(res, 404, "no_surface", "no surface under the pixel");
            return;
        }
        send_json(res, 200, {{"point", {hit->x(), hit->y(), hit->z()}}});
    }

    void post_deform(const std::shared_ptr<Session>& s, const httplib::Request& req, httplib::Response& res) {
        DragSpec drag;
        RunManifest manifest;
        try {
            JobRequest r = parse_job_request(req.body, true);
            manifest = r.manifest;
            try {
                drag = parse_dragspec(r.drag.dump());
                check_drag(*s->original, drag, manifest);
            } catch (const Error& e) {
                send_error(res, e, e.code() == ErrorCode::Config ? 400 : 422);
                return;
            }
        } catch (const Error& e) {
            send_error(res, e, 400);
            return;
        }
        auto original = s->original;
        auto job = launch(s, JobKind::Deform, [this, s, original, drag, manifest](const auto& progress) {
            DeformResult result = deform_scene(*original, drag, manifest, progress);
            publish_deformed(*s, std::move(result.scene));
            return report_to_json(result.report);
        });
        if (!job) {
            send_error(res, 409, "busy", "another job is modifying this scene");
            return;
        }
        send_json(res, 202, {{"job_id", *job}});
    }

    void post_refine(const std::shared_ptr<Session>& s, const httplib::Request& req, httplib::Response& res) {
        RunManifest manifest;
        try {
            manifest = parse_job_request(req.body, false).manifest;
        } catch (const Error& e) {
            send_error(res, e, 400);
            return;
        }
        auto deformed = snapshot(*s, "deformed");
        if (!deformed) {
            send_error(res, 409, "no_deformed", "run a deform job first");
            return;
        }
        auto original = s->original;
        auto cameras = s->cameras;
        auto job = launch(s, JobKind::Refine, [this, s, original, deformed, cameras, manifest](const auto& progress) {
            RefineOutcome out = refine_scene(*original, *deformed, *cameras, manifest, progress);
            json loss = json::array();
            for (const auto& r : out.trace) loss.push_back({{"step", r.step}, {"view", r.view}, {"loss", r.loss}});
            json report = {{"loss", loss},
                           {"trainable", out.trainable},
                           {"enhancer_failures", out.enhancer_failures},
                           {"warnings", out.warnings}};
            publish_deformed(*s, std::move(out.scene));
            return report.dump();
        });
        if (!job) {
            send_error(res, 409, "busy", "another job is modifying this scene");
            return;
        }
        send_json(res, 202, {{"job_id", *job}});
    }

    void get_pointcloud(const std::shared_ptr<Session>& s, const httplib::Request& req, httplib::Response& res) {
        const std::string which = req.has_param("which") ? req.get_param_value("which") : "original";
        std::shared_ptr<const std::vector<std::uint8_t>> data;
        if (which == "original") {
            data = s->preview;
        } else if (which == "deformed") {
            std::lock_guard lock(s->mutex);
            data = s->deformed_preview;
        }
        if (!data) {
            send_error(res, 404, "not_found", "no such scene version");
            return;
        }
        res.status = 200;
        res.set_content(std::string(data->begin(), data->end()), "application/octet-stream");
    }

    void get_ply(const std::shared_ptr<Session>& s, const httplib::Request& req, httplib::Response& res) {
        const std::string which = req.has_param("which") ? req.get_param_value("which") : "original";
        auto scene = snapshot(*s, which);
        if (!scene) {
            send_error(res, 404, "not_found", "no such scene version");
            return;
        }
        const auto bytes = encode_ply(*scene);
        res.status = 200;
        res.set_content(std::string(bytes.begin(), bytes.end()), "application/octet-stream");
    }

    void get_job(const std::string& id, httplib::Response& res) {
        std::lock_guard lock(jobs_mutex);
        auto it = jobs.find(id);
        if (it == jobs.end()) {
            send_error(res, 404, "not_found", "unknown job");
            return;
        }
        res.status = 200;
        res.set_content(job_to_json(it->second), "application/json");
    }
};

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Service::~Service() = default;

std::size_t Service::session_count() const {
    std::lock_guard lock(impl_->sessions_mutex);
    return impl_->sessions.size();
}

void Service::wait_idle() {
    std::unique_lock lock(impl_->jobs_mutex);
    impl_->jobs_cv.wait(lock, [&] { return impl_->pending == 0; });
}

void Service::mount(httplib::Server& server) {
    Impl* impl = impl_.get();
    server.set_default_headers({{"Access-Control-Allow-Origin", impl->options.cors_origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    // Wraps a per-session handler: resolves the id and turns stray
    // exceptions into 500s rather than dropped connections.
    auto with_session = [impl](auto handler) {
        return [impl, handler](const httplib::Request& req, httplib::Response& res) {
            auto s = impl->find_session(req.matches[1]);
            if (!s) {
                send_error(res, 404, "not_found", "unknown scene");
                return;
            }
            try {
                handler(s, req, res);
            } catch (const Error& e) {
                send_error(res, e);
            } catch (const std::exception& e) {
                send_error(res, 500, "internal", e.what());
            }
        };
    };

    server.Post("/scenes", [impl](const httplib::Request& req, httplib::Response& res) {
        try {
            impl->post_scene(req, res);
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    });
    server.Get(R"(/scenes/([^/]+))", with_session([impl](auto s, const auto&, auto& res) { impl->get_scene(s, res); }));
    server.Get(R"(/scenes/([^/]+)/render)",
               with_session([impl](auto s, const auto& req, auto& res) { impl->get_render(s, req, res); }));
    server.Post(R"(/scenes/([^/]+)/pick)",
                with_session([impl](auto s, const auto& req, auto& res) { impl->post_pick(s, req, res); }));
    server.Post(R"(/scenes/([^/]+)/deform)",
                with_session([impl](auto s, const auto& req, auto& res) { impl->post_deform(s, req, res); }));
    server.Post(R"(/scenes/([^/]+)/refine)",
                with_session([impl](auto s, const auto& req, auto& res) { impl->post_refine(s, req, res); }));
    server.Get(R"(/scenes/([^/]+)/pointcloud)",
               with_session([impl](auto s, const auto& req, auto& res) { impl->get_pointcloud(s, req, res); }));
    server.Get(R"(/scenes/([^/]+)/scene\.ply)",
               with_session([impl](auto s, const auto& req, auto& res) { impl->get_ply(s, req, res); }));
    server.Get(R"(/scenes/([^/]+)/cameras)", with_session([](auto s, const auto&, auto& res) {
                   res.status = 200;
                   res.set_content(cameras_to_json(*s->cameras), "application/json");
               }));
    server.Get(R"(/jobs/([^/]+))",
               [impl](const httplib::Request& req, httplib::Response& res) { impl->get_job(req.matches[1], res); });
}

} // namespace arapgs::service
