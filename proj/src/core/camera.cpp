#include "core/camera.hpp"

#include "core/json_util.hpp"
#include "core/ply.hpp"

namespace arapgs {

using detail::json;

namespace {

void check_pose(const Eigen::Matrix4d& c2w, const std::string& ptr) {
    const Mat3d r = c2w.topLeftCorner<3, 3>();
    const double ortho = (r.transpose() * r - Mat3d::Identity()).cwiseAbs().maxCoeff();
    if (!(ortho <= 1e-5)) detail::schema_error(ptr, "rotation block is not orthonormal");
    if (!(r.determinant() > 0.0)) detail::schema_error(ptr, "rotation block has negative determinant (reflection)");
    const Eigen::RowVector4d last = c2w.row(3);
    if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-6) {
        detail::schema_error(ptr, "last row must be [0, 0, 0, 1]");
    }
}

Camera parse_camera(const json& j, const std::string& ptr, const std::filesystem::path& base_dir) {
    Camera cam;
    const auto positive_int = [&](const char* key) {
        const long long v = detail::integer(detail::member(j, ptr, key), ptr + "/" + key);
        if (v <= 0 || v > (1 << 15)) detail::schema_error(ptr + "/" + key, "must be in 1..32768");
        return static_cast<int>(v);
    };
    cam.width = positive_int("width");
    cam.height = positive_int("height");
    cam.fx = detail::number(detail::member(j, ptr, "fx"), ptr + "/fx");
    cam.fy = detail::number(detail::member(j, ptr, "fy"), ptr + "/fy");
    cam.cx = detail::number(detail::member(j, ptr, "cx"), ptr + "/cx");
    cam.cy = detail::number(detail::member(j, ptr, "cy"), ptr + "/cy");
    if (cam.fx <= 0) detail::schema_error(ptr + "/fx", "must be positive");
    if (cam.fy <= 0) detail::schema_error(ptr + "/fy", "must be positive");

    const json& pose = detail::member(j, ptr, "c2w");
    const std::string pose_ptr = ptr + "/c2w";
    if (!pose.is_array() || pose.size() != 16) detail::schema_error(pose_ptr, "expected 16 numbers (row-major 4x4)");
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            cam.c2w(r, c) = detail::number(pose[r * 4 + c], pose_ptr + "/" + std::to_string(r * 4 + c));
        }
    }
    check_pose(cam.c2w, pose_ptr);

    if (auto it = j.find("image"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) detail::schema_error(ptr + "/image", "expected string or null");
        std::filesystem::path p = it->get<std::string>();
        cam.image_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    return cam;
}

} // namespace

void Camera::validate() const {
    if (width <= 0 || height <= 0) detail::schema_error("", "camera size must be positive");
    if (!(fx > 0) || !(fy > 0)) detail::schema_error("", "focal lengths must be positive");
    check_pose(c2w, "/c2w");
}

CameraSet parse_cameras(std::string_view text, const std::filesystem::path& base_dir) {
    const json root = detail::parse_text(text);
    const json& list = detail::member(root, "", "cameras");
    if (!list.is_array()) detail::schema_error("/cameras", "expected array");
    CameraSet out;
    out.reserve(list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
        out.push_back(parse_camera(list[i], "/cameras/" + std::to_string(i), base_dir));
    }
    return out;
}

CameraSet read_cameras(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return parse_cameras(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                         path.parent_path());
}

std::string cameras_to_json(const CameraSet& cameras) {
    json list = json::array();
    for (const auto& c : cameras) {
        json pose = json::array();
        for (int r = 0; r < 4; ++r) {
            for (int k = 0; k < 4; ++k) pose.push_back(c.c2w(r, k));
        }
        list.push_back({{"width", c.width}, {"height", c.height}, {"fx", c.fx}, {"fy", c.fy},
                        {"cx", c.cx}, {"cy", c.cy}, {"c2w", pose},
                        {"image", c.image_path ? json(c.image_path->string()) : json(nullptr)}});
    }
    return json{{"cameras", list}}.dump(2);
}

} // namespace arapgs
