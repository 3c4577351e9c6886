#include "fixtures.hpp"

#include "core/ply.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace arapgs::testing {

namespace {

Vec3f random_in_ball(std::mt19937_64& rng, double radius) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (;;) {
        Vec3d p(u(rng), u(rng), u(rng));
        if (p.squaredNorm() <= 1.0) return (p * radius).cast<float>();
    }
}

} // namespace

GaussianScene dumbbell_scene(std::uint64_t seed, std::size_t per_blob, std::size_t bar) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> nd(0.0, 1.0);
    GaussianScene s;
    const std::size_t n = 2 * per_blob + bar;
    s.resize(n, 9);
    for (std::size_t i = 0; i < n; ++i) {
        Vec3f c;
        Vec3f color;
        if (i < per_blob) {
            c = random_in_ball(rng, 0.4) + Vec3f(-1.0f, 0.0f, 0.0f);
            color = Vec3f(1.2f, -0.6f, -0.6f);
        } else if (i < 2 * per_blob) {
            c = random_in_ball(rng, 0.4) + Vec3f(1.0f, 0.0f, 0.0f);
            color = Vec3f(-0.6f, -0.6f, 1.2f);
        } else {
            const double t = u(rng);
            c = Vec3f(static_cast<float>(-0.7 + 1.4 * t), 0.0f, 0.0f) + random_in_ball(rng, 0.08);
            color = Vec3f(0.8f, 0.8f, -0.4f);
        }
        s.centers[i] = c;
        Eigen::Quaterniond q(nd(rng), nd(rng), nd(rng), nd(rng));
        // Deliberately not unit length: the file format stores raw values.
        const double len = 0.8 + 0.4 * u(rng);
        q.coeffs() *= len / q.coeffs().norm();
        s.rotations[i] = Quat4f{static_cast<float>(q.w()), static_cast<float>(q.x()), static_cast<float>(q.y()),
                                static_cast<float>(q.z())};
        for (int k = 0; k < 3; ++k) {
            s.log_scales[i][k] = static_cast<float>(std::log(0.02 + 0.03 * u(rng)));
            s.sh_dc[i][k] = color[k] + static_cast<float>(0.1 * nd(rng));
        }
        s.opacity_logits[i] = static_cast<float>(1.5 + 0.5 * nd(rng));
        for (std::size_t k = 0; k < 9; ++k) s.sh_rest[i * 9 + k] = static_cast<float>(0.05 * nd(rng));
    }
    return s;
}

GaussianScene three_splat_scene() {
    GaussianScene s;
    s.resize(3);
    const float dc = 1.0f / 0.28209479177387814f;
    s.centers = {Vec3f(-0.15f, 0.05f, 2.5f), Vec3f(0.1f, -0.05f, 3.0f), Vec3f(0.02f, 0.12f, 2.0f)};
    s.log_scales = {Vec3f::Constant(std::log(0.18f)), Vec3f::Constant(std::log(0.25f)),
                    Vec3f::Constant(std::log(0.08f))};
    s.opacity_logits = {1.5f, 2.5f, 0.0f};
    s.sh_dc = {Vec3f(0.4f, -0.3f, -0.3f) * dc, Vec3f(-0.3f, 0.35f, -0.2f) * dc, Vec3f(-0.4f, -0.4f, 0.45f) * dc};
    return s;
}

Camera three_splat_camera() {
    Camera c;
    c.width = 64;
    c.height = 48;
    c.fx = c.fy = 70;
    c.cx = 31.5;
    c.cy = 23.5;
    return c;
}

DragSpec dumbbell_drag() {
    DragSpec d;
    d.handles.push_back(Handle{Vec3d(1.0, 0.0, 0.0), Vec3d(1.3, 0.0, 0.15)});
    d.auto_anchor_radius = 1.2;
    return d;
}

Camera look_at(const Vec3d& eye, const Vec3d& target, int width, int height, double focal) {
    const Vec3d f = (target - eye).normalized();
    Vec3d up(0, 0, 1);
    if (std::abs(f.dot(up)) > 0.99) up = Vec3d(0, 1, 0);
    const Vec3d right = f.cross(up).normalized();
    const Vec3d down = f.cross(right);
    Camera c;
    c.width = width;
    c.height = height;
    c.fx = c.fy = focal;
    c.cx = (width - 1) / 2.0;
    c.cy = (height - 1) / 2.0;
    c.c2w.setIdentity();
    c.c2w.block<3, 1>(0, 0) = right;
    c.c2w.block<3, 1>(0, 1) = down;
    c.c2w.block<3, 1>(0, 2) = f;
    c.c2w.block<3, 1>(0, 3) = eye;
    return c;
}

CameraSet ring_cameras(std::size_t count, int width, int height, double radius, double elevation) {
    CameraSet cams;
    for (std::size_t i = 0; i < count; ++i) {
        const double a = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(count) + 0.3;
        const Vec3d eye(radius * std::cos(a), radius * std::sin(a), elevation);
        cams.push_back(look_at(eye, Vec3d::Zero(), width, height, 0.9 * width));
    }
    return cams;
}

TempDir::TempDir(const std::string& tag) {
    const auto base = std::filesystem::temp_directory_path();
    std::string pattern = (base / (tag + "-XXXXXX")).string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f.flush()) throw std::runtime_error("cannot write " + path.string());
}

void write_dumbbell_inputs(const std::filesystem::path& dir, std::size_t cameras) {
    std::filesystem::create_directories(dir);
    write_ply(dumbbell_scene(), dir / "scene.ply");
    write_text(dir / "cameras.json", cameras_to_json(ring_cameras(cameras)));
    write_text(dir / "drag.json", dragspec_to_json(dumbbell_drag()));
}

} // namespace arapgs::testing
