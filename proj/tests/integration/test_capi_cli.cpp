// The shared library through its C header, and the CLI as a subprocess.

#include "arapgs/arapgs.h"
#include "core/camera.hpp"
#include "core/image.hpp"
#include "core/ply.hpp"
#include "fixtures.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>

namespace fs = std::filesystem;
using json = nlohmann::json;
using arapgs::testing::TempDir;

namespace {

const char* kSmallConfig = R"({"sampling": {"n_sub": 800}, "graph": {"k": 12}, "refine": {"total_iters": 12}})";

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + ARAPGS_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// Inputs plus a small config so CLI runs stay quick.
void write_inputs(const TempDir& dir, std::size_t cameras = 3) {
    arapgs::testing::write_dumbbell_inputs(dir.path(), cameras);
    arapgs::testing::write_text(dir / "config.json", kSmallConfig);
}

} // namespace

TEST_CASE("C API reports status codes and a thread-local message") {
    TempDir dir;
    arapgs_scene* s = nullptr;
    CHECK(arapgs_scene_read_ply((dir / "missing.ply").c_str(), &s) == ARAPGS_ERR_IO);
    CHECK(s == nullptr);
    CHECK(std::string(arapgs_last_error()).find("missing.ply") != std::string::npos);
    CHECK(std::string(arapgs_status_name(ARAPGS_ERR_SOLVER)) == "solver");

    CHECK(arapgs_scene_read_ply(nullptr, &s) == ARAPGS_ERR_INVALID_ARGUMENT);
    CHECK(arapgs_deform(nullptr, nullptr, nullptr, -1, nullptr, nullptr) == ARAPGS_ERR_INVALID_ARGUMENT);
    CHECK(arapgs_scene_count(nullptr) == 0);
    arapgs_scene_free(nullptr);
    arapgs_string_free(nullptr);

    arapgs::testing::write_text(dir / "bad.ply", "ply\nformat ascii 1.0\nend_header\n");
    CHECK(arapgs_scene_read_ply((dir / "bad.ply").c_str(), &s) == ARAPGS_ERR_FORMAT);

    write_inputs(dir);
    REQUIRE(arapgs_scene_read_ply((dir / "scene.ply").c_str(), &s) == ARAPGS_OK);
    CHECK(std::string(arapgs_last_error()).empty());
    CHECK(arapgs_scene_count(s) == arapgs::testing::dumbbell_scene().size());
    arapgs_drag* d = nullptr;
    REQUIRE(arapgs_drag_read((dir / "drag.json").c_str(), &d) == ARAPGS_OK);

    arapgs_scene* out = nullptr;
    char* report = nullptr;
    CHECK(arapgs_deform(s, d, R"({"graph": {"k": "many"}})", -1, &out, &report) == ARAPGS_ERR_CONFIG);
    CHECK(arapgs_deform(s, d, R"({"bogus": 1})", -1, &out, &report) == ARAPGS_ERR_CONFIG);
    CHECK(out == nullptr);
    REQUIRE(arapgs_deform(s, d, kSmallConfig, 9, &out, &report) == ARAPGS_OK);
    const json r = json::parse(report);
    CHECK(r["seed"] == 9);
    CHECK(r["counts"]["subset"] == 800);
    arapgs_string_free(report);
    arapgs_scene_free(out);
    arapgs_drag_free(d);
    arapgs_scene_free(s);
}

TEST_CASE("conflicting handles map to a stage error in the C API and exit 3 in the CLI") {
    TempDir dir;
    write_inputs(dir);
    json drag = json::parse(arapgs::testing::read_text(dir / "drag.json"));
    json h = drag["handles"][0];
    h["target"] = {h["source"][0].get<double>(), h["source"][1].get<double>() + 0.5, h["source"][2].get<double>()};
    drag["handles"].push_back(h);
    arapgs::testing::write_text(dir / "conflict.json", drag.dump());

    arapgs_scene* s = nullptr;
    arapgs_drag* d = nullptr;
    REQUIRE(arapgs_scene_read_ply((dir / "scene.ply").c_str(), &s) == ARAPGS_OK);
    REQUIRE(arapgs_drag_read((dir / "conflict.json").c_str(), &d) == ARAPGS_OK);
    arapgs_scene* out = nullptr;
    char* report = nullptr;
    CHECK(arapgs_deform(s, d, kSmallConfig, -1, &out, &report) == ARAPGS_ERR_CONFLICTING_CONSTRAINT);
    arapgs_drag_free(d);
    arapgs_scene_free(s);

    const fs::path out_dir = dir / "out";
    CHECK(run_cli("deform --scene " + q(dir / "scene.ply") + " --drag " + q(dir / "conflict.json") + " --config " +
                  q(dir / "config.json") + " --out " + q(out_dir)) == 3);
    // No partial outputs survive a failed stage.
    CHECK_FALSE(fs::exists(out_dir / "deformed.ply"));
    CHECK_FALSE(fs::exists(out_dir / "report.json"));
}

TEST_CASE("CLI exit codes for bad invocations and inputs") {
    TempDir dir;
    write_inputs(dir);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("deform --scene") == 2);
    CHECK(run_cli("deform --drag " + q(dir / "drag.json") + " --out " + q(dir / "o")) == 2);
    CHECK(run_cli("deform --scene " + q(dir / "nope.ply") + " --drag " + q(dir / "drag.json") + " --out " +
                  q(dir / "o")) == 2);
    arapgs::testing::write_text(dir / "broken.json", "{ not json");
    CHECK(run_cli("deform --scene " + q(dir / "scene.ply") + " --drag " + q(dir / "drag.json") + " --config " +
                  q(dir / "broken.json") + " --out " + q(dir / "o")) == 2);
    arapgs::testing::write_text(dir / "baddrag.json", R"({"handles": [{"source": [0, 0]}]})");
    CHECK(run_cli("deform --scene " + q(dir / "scene.ply") + " --drag " + q(dir / "baddrag.json") + " --out " +
                  q(dir / "o")) == 2);
    CHECK_FALSE(fs::exists(dir / "o" / "deformed.ply"));
    CHECK(run_cli("render --scene " + q(dir / "scene.ply") + " --cameras " + q(dir / "nope.json") + " --out " +
                  q(dir / "r")) == 2);
    CHECK_FALSE(fs::exists(dir / "r"));
}

TEST_CASE("deform runs without cameras and is byte-deterministic") {
    TempDir dir;
    write_inputs(dir);
    const std::string base = "deform --scene " + q(dir / "scene.ply") + " --drag " + q(dir / "drag.json") +
                             " --config " + q(dir / "config.json") + " --seed 5 --out ";
    REQUIRE(run_cli(base + q(dir / "a")) == 0);
    REQUIRE(run_cli(base + q(dir / "b")) == 0);
    CHECK(arapgs::read_file_bytes(dir / "a" / "deformed.ply") == arapgs::read_file_bytes(dir / "b" / "deformed.ply"));
    const json ra = json::parse(arapgs::testing::read_text(dir / "a" / "report.json"));
    const json rb = json::parse(arapgs::testing::read_text(dir / "b" / "report.json"));
    CHECK(ra["energy_trace"] == rb["energy_trace"]);
    CHECK(ra["seed"] == 5);

    // The C API with the same inputs yields the same bytes.
    arapgs_scene* s = nullptr;
    arapgs_drag* d = nullptr;
    REQUIRE(arapgs_scene_read_ply((dir / "scene.ply").c_str(), &s) == ARAPGS_OK);
    REQUIRE(arapgs_drag_read((dir / "drag.json").c_str(), &d) == ARAPGS_OK);
    arapgs_scene* out = nullptr;
    char* report = nullptr;
    REQUIRE(arapgs_deform(s, d, kSmallConfig, 5, &out, &report) == ARAPGS_OK);
    REQUIRE(arapgs_scene_write_ply(out, (dir / "c.ply").c_str()) == ARAPGS_OK);
    CHECK(arapgs::read_file_bytes(dir / "c.ply") == arapgs::read_file_bytes(dir / "a" / "deformed.ply"));
    arapgs_string_free(report);
    arapgs_scene_free(out);
    arapgs_drag_free(d);
    arapgs_scene_free(s);
}

TEST_CASE("render writes one PNG per camera; zero cameras writes none") {
    TempDir dir;
    write_inputs(dir, 3);
    REQUIRE(run_cli("render --scene " + q(dir / "scene.ply") + " --cameras " + q(dir / "cameras.json") + " --out " +
                    q(dir / "r1")) == 0);
    REQUIRE(run_cli("render --scene " + q(dir / "scene.ply") + " --cameras " + q(dir / "cameras.json") + " --out " +
                    q(dir / "r2")) == 0);
    for (int i = 0; i < 3; ++i) {
        const std::string name = "view_" + std::to_string(i) + ".png";
        CHECK(arapgs::read_file_bytes(dir / "r1" / name) == arapgs::read_file_bytes(dir / "r2" / name));
    }
    CHECK_FALSE(fs::exists(dir / "r1" / "view_3.png"));
    const auto img = arapgs::read_png(dir / "r1" / "view_0.png");
    CHECK(img.width == 96);
    CHECK(img.height == 72);

    arapgs::testing::write_text(dir / "none.json", arapgs::cameras_to_json({}));
    REQUIRE(run_cli("render --scene " + q(dir / "scene.ply") + " --cameras " + q(dir / "none.json") + " --out " +
                    q(dir / "r0")) == 0);
    CHECK(fs::is_empty(dir / "r0"));
}

TEST_CASE("CLI render of the three-splat scene matches the oracle golden image") {
    TempDir dir;
    arapgs::write_ply(arapgs::testing::three_splat_scene(), dir / "s.ply");
    arapgs::testing::write_text(dir / "c.json", arapgs::cameras_to_json({arapgs::testing::three_splat_camera()}));
    REQUIRE(run_cli("render --scene " + q(dir / "s.ply") + " --cameras " + q(dir / "c.json") + " --out " +
                    q(dir / "r")) == 0);
    const auto got = arapgs::read_png(dir / "r" / "view_0.png");
    const auto want = arapgs::read_png(fs::path(ARAPGS_FIXTURES) / "three_splats.png");
    REQUIRE(got.width == want.width);
    REQUIRE(got.height == want.height);
    double worst = 0;
    for (std::size_t i = 0; i < got.pixels.size(); ++i) {
        worst = std::max(worst, double(std::abs(got.pixels[i] - want.pixels[i])));
    }
    CHECK(worst <= 1.0 / 255.0 + 1e-6);
}

TEST_CASE("full run produces every artifact and matching eval output") {
    TempDir dir;
    write_inputs(dir, 2);
    REQUIRE(run_cli("run --scene " + q(dir / "scene.ply") + " --drag " + q(dir / "drag.json") + " --cameras " +
                    q(dir / "cameras.json") + " --config " + q(dir / "config.json") + " --out " + q(dir / "out")) ==
            0);
    for (const char* f : {"deformed.ply", "report.json", "refined.ply", "loss.csv", "dai.json",
                          "renders/original/view_1.png", "renders/deformed/view_1.png",
                          "renders/refined/view_1.png"}) {
        CHECK_MESSAGE(fs::exists(dir / "out" / f), f);
    }
    const json dai = json::parse(arapgs::testing::read_text(dir / "out" / "dai.json"));
    CHECK(dai["dai"].get<double>() >= 0.0);
    const std::string csv = arapgs::testing::read_text(dir / "out" / "loss.csv");
    CHECK(csv.rfind("step,view,loss", 0) == 0);
}
