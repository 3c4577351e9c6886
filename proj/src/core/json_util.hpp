#pragma once

// Small helpers for schema checks that report the JSON pointer of the
// offending field. Internal to the core library.

#include "core/error.hpp"
#include "core/scene.hpp"

#include <json.hpp>

#include <string>

namespace arapgs::detail {

using json = nlohmann::json;

[[noreturn]] inline void schema_error(const std::string& pointer, const std::string& why) {
    throw Error(ErrorCode::Schema, (pointer.empty() ? std::string("/") : pointer) + ": " + why);
}

inline const json& member(const json& obj, const std::string& ptr, const char* key) {
    if (!obj.is_object()) schema_error(ptr, "expected object");
    auto it = obj.find(key);
    if (it == obj.end()) schema_error(ptr + "/" + key, "missing required field");
    return *it;
}

inline double number(const json& v, const std::string& ptr) {
    if (!v.is_number()) schema_error(ptr, "expected number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) schema_error(ptr, "expected finite number");
    return d;
}

inline long long integer(const json& v, const std::string& ptr) {
    if (!v.is_number_integer()) schema_error(ptr, "expected integer");
    return v.get<long long>();
}

inline Vec3d vec3(const json& v, const std::string& ptr) {
    if (!v.is_array() || v.size() != 3) schema_error(ptr, "expected array of 3 numbers");
    return Vec3d(number(v[0], ptr + "/0"), number(v[1], ptr + "/1"), number(v[2], ptr + "/2"));
}

inline json to_json(const Vec3d& v) { return json::array({v.x(), v.y(), v.z()}); }

inline json parse_text(std::string_view text) {
    try {
        return json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        throw Error(ErrorCode::Schema, std::string("invalid JSON: ") + e.what());
    }
}

} // namespace arapgs::detail
