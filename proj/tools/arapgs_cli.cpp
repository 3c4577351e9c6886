// Batch driver. Talks to the library only through the C interface.

#include "arapgs/arapgs.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

// Input and configuration problems are the caller's to fix (2); anything
// that went wrong inside a stage is 3.
int exit_code_for(arapgs_status s) {
    switch (s) {
    case ARAPGS_OK: return kExitOk;
    case ARAPGS_ERR_INVALID_ARGUMENT:
    case ARAPGS_ERR_IO:
    case ARAPGS_ERR_FORMAT:
    case ARAPGS_ERR_SCHEMA:
    case ARAPGS_ERR_DATA:
    case ARAPGS_ERR_CONFIG: return kExitConfig;
    default: return kExitStage;
    }
}

struct Failure {
    int code;
    std::string message;
};

void check(arapgs_status s, const std::string& what) {
    if (s != ARAPGS_OK) {
        throw Failure{exit_code_for(s), what + ": " + arapgs_status_name(s) + ": " + arapgs_last_error()};
    }
}

struct SceneDeleter {
    void operator()(arapgs_scene* p) const { arapgs_scene_free(p); }
};
struct CamerasDeleter {
    void operator()(arapgs_cameras* p) const { arapgs_cameras_free(p); }
};
struct DragDeleter {
    void operator()(arapgs_drag* p) const { arapgs_drag_free(p); }
};
struct StringDeleter {
    void operator()(char* p) const { arapgs_string_free(p); }
};
using ScenePtr = std::unique_ptr<arapgs_scene, SceneDeleter>;
using CamerasPtr = std::unique_ptr<arapgs_cameras, CamerasDeleter>;
using DragPtr = std::unique_ptr<arapgs_drag, DragDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

ScenePtr load_scene(const fs::path& p) {
    arapgs_scene* s = nullptr;
    check(arapgs_scene_read_ply(p.c_str(), &s), "reading " + p.string());
    return ScenePtr(s);
}

CamerasPtr load_cameras(const fs::path& p) {
    arapgs_cameras* c = nullptr;
    check(arapgs_cameras_read(p.c_str(), &c), "reading " + p.string());
    return CamerasPtr(c);
}

DragPtr load_drag(const fs::path& p) {
    arapgs_drag* d = nullptr;
    check(arapgs_drag_read(p.c_str(), &d), "reading " + p.string());
    return DragPtr(d);
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
    if (!f.flush()) throw Failure{kExitStage, "cannot write " + p.string()};
}

// Files a command creates; deleted again unless the command commits.
class OutputGuard {
public:
    void add(fs::path p) { paths_.push_back(std::move(p)); }
    void commit() { paths_.clear(); }
    ~OutputGuard() {
        std::error_code ec;
        for (const auto& p : paths_) fs::remove_all(p, ec);
    }

private:
    std::vector<fs::path> paths_;
};

// Shared options. Paths may also come from the config file (the run
// manifest); command-line values win.
struct Options {
    std::string scene, drag, cameras, out, config, deformed, original_renders, edited_renders;
    std::optional<std::uint64_t> seed;

    std::string config_text;

    void load_config() {
        if (config.empty()) return;
        std::ifstream f(config, std::ios::binary);
        if (!f) throw Failure{kExitConfig, "cannot read config " + config};
        std::stringstream ss;
        ss << f.rdbuf();
        config_text = ss.str();
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(config_text);
        } catch (const nlohmann::json::exception& e) {
            throw Failure{kExitConfig, "invalid configuration JSON in " + config + ": " + e.what()};
        }
        if (!j.is_object()) throw Failure{kExitConfig, config + ": expected a JSON object"};
        const fs::path base = fs::path(config).parent_path();
        auto fill = [&](std::string& field, const char* key) {
            if (!field.empty() || !j.contains(key) || j[key].is_null()) return;
            if (!j[key].is_string()) throw Failure{kExitConfig, config + ": /" + key + ": expected path string"};
            fs::path p = j[key].get<std::string>();
            field = (p.is_relative() ? base / p : p).string();
        };
        fill(scene, "scene");
        fill(drag, "drag");
        fill(cameras, "cameras");
        fill(out, "out");
    }

    const char* config_json() const { return config_text.empty() ? nullptr : config_text.c_str(); }
    std::int64_t seed_arg() const { return seed ? static_cast<std::int64_t>(*seed) : -1; }

    static void need(const std::string& value, const char* flag) {
        if (value.empty()) throw Failure{kExitConfig, std::string("missing required option ") + flag};
    }
};

void ensure_dir(const fs::path& dir, OutputGuard* guard) {
    std::error_code ec;
    const bool existed = fs::exists(dir, ec);
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw Failure{kExitConfig, "output directory not writable: " + dir.string()};
    if (!existed && guard) guard->add(dir);
}

int cmd_deform(const Options& o) {
    Options::need(o.scene, "--scene");
    Options::need(o.drag, "--drag");
    Options::need(o.out, "--out");
    auto scene = load_scene(o.scene);
    auto drag = load_drag(o.drag);
    OutputGuard guard;
    ensure_dir(o.out, nullptr);
    const fs::path ply = fs::path(o.out) / "deformed.ply";
    const fs::path report_path = fs::path(o.out) / "report.json";
    guard.add(ply);
    guard.add(report_path);

    arapgs_scene* raw = nullptr;
    char* report_raw = nullptr;
    check(arapgs_deform(scene.get(), drag.get(), o.config_json(), o.seed_arg(), &raw, &report_raw), "deform");
    ScenePtr deformed(raw);
    StringPtr report(report_raw);
    check(arapgs_scene_write_ply(deformed.get(), ply.c_str()), "writing " + ply.string());
    write_text(report_path, std::string(report.get()) + "\n");
    guard.commit();
    std::cerr << "wrote " << ply.string() << " and " << report_path.string() << "\n";
    return kExitOk;
}

int cmd_render(const Options& o) {
    Options::need(o.scene, "--scene");
    Options::need(o.cameras, "--cameras");
    Options::need(o.out, "--out");
    auto scene = load_scene(o.scene);
    auto cams = load_cameras(o.cameras);
    OutputGuard guard;
    ensure_dir(o.out, &guard);
    check(arapgs_render_views(scene.get(), cams.get(), o.out.c_str()), "render");
    guard.commit();
    std::cerr << "rendered " << arapgs_cameras_count(cams.get()) << " view(s) to " << o.out << "\n";
    return kExitOk;
}

int cmd_refine(const Options& o) {
    Options::need(o.scene, "--scene");
    Options::need(o.cameras, "--cameras");
    Options::need(o.out, "--out");
    const fs::path deformed_path = o.deformed.empty() ? fs::path(o.out) / "deformed.ply" : fs::path(o.deformed);
    auto original = load_scene(o.scene);
    auto deformed = load_scene(deformed_path);
    auto cams = load_cameras(o.cameras);
    OutputGuard guard;
    ensure_dir(o.out, nullptr);
    const fs::path ply = fs::path(o.out) / "refined.ply";
    const fs::path csv_path = fs::path(o.out) / "loss.csv";
    guard.add(ply);
    guard.add(csv_path);

    arapgs_scene* raw = nullptr;
    char* csv_raw = nullptr;
    check(arapgs_refine(original.get(), deformed.get(), cams.get(), o.config_json(), o.seed_arg(), &raw, &csv_raw),
          "refine");
    ScenePtr refined(raw);
    StringPtr csv(csv_raw);
    check(arapgs_scene_write_ply(refined.get(), ply.c_str()), "writing " + ply.string());
    write_text(csv_path, csv.get());
    guard.commit();
    std::cerr << "wrote " << ply.string() << " and " << csv_path.string() << "\n";
    return kExitOk;
}

int cmd_eval(const Options& o) {
    Options::need(o.original_renders, "--original");
    Options::need(o.edited_renders, "--edited");
    Options::need(o.drag, "--drag");
    Options::need(o.cameras, "--cameras");
    auto drag = load_drag(o.drag);
    auto cams = load_cameras(o.cameras);
    char* raw = nullptr;
    check(arapgs_eval(o.original_renders.c_str(), o.edited_renders.c_str(), drag.get(), cams.get(), o.config_json(),
                      o.seed_arg(), &raw),
          "eval");
    StringPtr json(raw);
    if (!o.out.empty()) {
        OutputGuard guard;
        ensure_dir(o.out, nullptr);
        const fs::path p = fs::path(o.out) / "dai.json";
        guard.add(p);
        write_text(p, std::string(json.get()) + "\n");
        guard.commit();
    }
    std::cout << json.get() << "\n";
    return kExitOk;
}

// deform -> render original and deformed -> refine -> render refined -> eval.
int cmd_run(const Options& o) {
    Options::need(o.cameras, "--cameras");
    if (int rc = cmd_deform(o); rc != kExitOk) return rc;
    const fs::path out = o.out;
    Options r = o;
    r.out = (out / "renders" / "original").string();
    cmd_render(r);
    r.scene = (out / "deformed.ply").string();
    r.out = (out / "renders" / "deformed").string();
    cmd_render(r);
    Options f = o;
    cmd_refine(f);
    r.scene = (out / "refined.ply").string();
    r.out = (out / "renders" / "refined").string();
    cmd_render(r);
    Options e = o;
    e.original_renders = (out / "renders" / "original").string();
    e.edited_renders = (out / "renders" / "refined").string();
    return cmd_eval(e);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Drag-driven deformation of Gaussian splat scenes"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "run manifest / stage configuration JSON");
        sub->add_option("--seed", o.seed, "random seed (overrides the config)");
    };
    auto* deform = app.add_subcommand("deform", "ARAP deformation: writes deformed.ply and report.json");
    deform->add_option("--scene", o.scene, "input scene PLY");
    deform->add_option("--drag", o.drag, "drag.json");
    deform->add_option("--cameras", o.cameras, "cameras.json (unused by this stage)");
    deform->add_option("--out", o.out, "output directory");
    add_common(deform);

    auto* render = app.add_subcommand("render", "render view_{i}.png for every camera");
    render->add_option("--scene", o.scene, "scene PLY");
    render->add_option("--cameras", o.cameras, "cameras.json");
    render->add_option("--out", o.out, "output directory");
    add_common(render);

    auto* refine = app.add_subcommand("refine", "appearance refinement: writes refined.ply and loss.csv");
    refine->add_option("--scene", o.scene, "original (undeformed) scene PLY");
    refine->add_option("--deformed", o.deformed, "deformed scene PLY (default <out>/deformed.ply)");
    refine->add_option("--cameras", o.cameras, "cameras.json");
    refine->add_option("--out", o.out, "output directory");
    add_common(refine);

    auto* eval = app.add_subcommand("eval", "DAI between two render directories; prints JSON");
    eval->add_option("--original", o.original_renders, "directory of original renders");
    eval->add_option("--edited", o.edited_renders, "directory of edited renders");
    eval->add_option("--drag", o.drag, "drag.json");
    eval->add_option("--cameras", o.cameras, "cameras.json");
    eval->add_option("--out", o.out, "also write <out>/dai.json");
    add_common(eval);

    auto* run = app.add_subcommand("run", "deform, render, refine, render, eval in one go");
    run->add_option("--scene", o.scene, "input scene PLY");
    run->add_option("--drag", o.drag, "drag.json");
    run->add_option("--cameras", o.cameras, "cameras.json");
    run->add_option("--out", o.out, "output directory");
    add_common(run);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        o.load_config();
        if (*deform) return cmd_deform(o);
        if (*render) return cmd_render(o);
        if (*refine) return cmd_refine(o);
        if (*eval) return cmd_eval(o);
        if (*run) return cmd_run(o);
    } catch (const Failure& f) {
        std::cerr << "error: " << f.message << "\n";
        return f.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitStage;
    }
    return kExitConfig;
}
