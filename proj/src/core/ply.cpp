#include "core/ply.hpp"

#include "core/error.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>

namespace arapgs {

static_assert(std::endian::native == std::endian::little,
              "PLY payload is decoded with memcpy; big-endian hosts are not supported");

namespace {

constexpr std::size_t kMaxHeaderBytes = 1 << 16;

struct Property {
    std::string name;
    std::string type;
    std::size_t size = 0;
    std::size_t offset = 0;
};

struct Element {
    std::string name;
    std::uint64_t count = 0;
    std::vector<Property> properties;
    std::size_t stride = 0;
};

std::optional<std::size_t> scalar_size(const std::string& type) {
    static const std::map<std::string, std::size_t> sizes = {
        {"char", 1},  {"int8", 1},   {"uchar", 1},  {"uint8", 1},   {"short", 2},
        {"int16", 2}, {"ushort", 2}, {"uint16", 2}, {"int", 4},     {"int32", 4},
        {"uint", 4},  {"uint32", 4}, {"float", 4},  {"float32", 4}, {"double", 8},
        {"float64", 8},
    };
    auto it = sizes.find(type);
    if (it == sizes.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> split_words(const std::string& line) {
    std::vector<std::string> words;
    std::istringstream in(line);
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

[[noreturn]] void header_error(std::size_t line_no, const std::string& line, const std::string& why) {
    throw Error(ErrorCode::Format,
                "PLY header line " + std::to_string(line_no) + " ('" + line + "'): " + why);
}

struct ParsedHeader {
    std::vector<Element> elements;
    std::size_t payload_offset = 0;
};

ParsedHeader parse_header(std::span<const std::uint8_t> bytes) {
    ParsedHeader out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    bool saw_format = false;

    auto next_line = [&]() -> std::optional<std::string> {
        if (pos >= bytes.size() || pos >= kMaxHeaderBytes) return std::nullopt;
        std::size_t end = pos;
        while (end < bytes.size() && bytes[end] != '\n') ++end;
        if (end >= bytes.size()) return std::nullopt;
        std::string line(reinterpret_cast<const char*>(bytes.data() + pos), end - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos = end + 1;
        ++line_no;
        return line;
    };

    auto first = next_line();
    if (!first || *first != "ply") {
        header_error(1, first.value_or(""), "missing 'ply' magic");
    }

    while (true) {
        auto line = next_line();
        if (!line) {
            throw Error(ErrorCode::Format, "PLY header line " + std::to_string(line_no + 1) +
                                               ": header not terminated by end_header");
        }
        const auto words = split_words(*line);
        if (words.empty()) continue;
        const std::string& kw = words[0];
        if (kw == "end_header") {
            if (words.size() != 1) header_error(line_no, *line, "trailing tokens after end_header");
            break;
        }
        if (kw == "comment" || kw == "obj_info") continue;
        if (kw == "format") {
            if (words.size() != 3) header_error(line_no, *line, "malformed format line");
            if (words[1] != "binary_little_endian") {
                header_error(line_no, *line, "only binary_little_endian is supported");
            }
            if (words[2] != "1.0") header_error(line_no, *line, "unsupported PLY version");
            saw_format = true;
            continue;
        }
        if (kw == "element") {
            if (words.size() != 3) header_error(line_no, *line, "malformed element line");
            Element e;
            e.name = words[1];
            const auto& c = words[2];
            auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), e.count);
            if (ec != std::errc() || ptr != c.data() + c.size()) {
                header_error(line_no, *line, "element count is not a non-negative integer");
            }
            out.elements.push_back(std::move(e));
            continue;
        }
        if (kw == "property") {
            if (out.elements.empty()) header_error(line_no, *line, "property before any element");
            if (words.size() >= 2 && words[1] == "list") {
                header_error(line_no, *line, "list properties are not supported");
            }
            if (words.size() != 3) header_error(line_no, *line, "malformed property line");
            auto size = scalar_size(words[1]);
            if (!size) header_error(line_no, *line, "unknown property type '" + words[1] + "'");
            Element& e = out.elements.back();
            for (const auto& p : e.properties) {
                if (p.name == words[2]) header_error(line_no, *line, "duplicate property");
            }
            e.properties.push_back(Property{words[2], words[1], *size, e.stride});
            e.stride += *size;
            continue;
        }
        header_error(line_no, *line, "unknown keyword '" + kw + "'");
    }
    if (!saw_format) throw Error(ErrorCode::Format, "PLY header has no format line");
    out.payload_offset = pos;
    return out;
}

float load_float(const std::uint8_t* p) {
    float v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

void append_float(std::vector<std::uint8_t>& out, float v) {
    std::uint8_t b[4];
    std::memcpy(b, &v, 4);
    out.insert(out.end(), b, b + 4);
}

} // namespace

std::size_t ply_record_size(std::size_t rest_dim) { return (17 + rest_dim) * sizeof(float); }

std::string ply_header(std::size_t count, std::size_t rest_dim) {
    std::string h;
    h += "ply\nformat binary_little_endian 1.0\n";
    h += "element vertex " + std::to_string(count) + "\n";
    for (const char* n : {"x", "y", "z", "nx", "ny", "nz"}) h += std::string("property float ") + n + "\n";
    for (int i = 0; i < 3; ++i) h += "property float f_dc_" + std::to_string(i) + "\n";
    for (std::size_t i = 0; i < rest_dim; ++i) h += "property float f_rest_" + std::to_string(i) + "\n";
    h += "property float opacity\n";
    for (int i = 0; i < 3; ++i) h += "property float scale_" + std::to_string(i) + "\n";
    for (int i = 0; i < 4; ++i) h += "property float rot_" + std::to_string(i) + "\n";
    h += "end_header\n";
    return h;
}

GaussianScene parse_ply(std::span<const std::uint8_t> bytes) {
    const ParsedHeader header = parse_header(bytes);

    std::size_t offset = header.payload_offset;
    const Element* vertex = nullptr;
    for (const auto& e : header.elements) {
        if (e.name == "vertex") {
            vertex = &e;
            break;
        }
        // Elements ahead of the vertex block are skipped by size.
        if (e.stride != 0 && e.count > (std::numeric_limits<std::size_t>::max() - offset) / e.stride) {
            throw Error(ErrorCode::Format, "element '" + e.name + "' size overflows");
        }
        offset += static_cast<std::size_t>(e.count) * e.stride;
    }
    if (!vertex) throw Error(ErrorCode::Schema, "PLY has no 'vertex' element");

    auto find = [&](const std::string& name) -> const Property* {
        for (const auto& p : vertex->properties) {
            if (p.name == name) return &p;
        }
        return nullptr;
    };
    auto require = [&](const std::string& name) -> std::size_t {
        const Property* p = find(name);
        if (!p) throw Error(ErrorCode::Schema, "missing required property '" + name + "'");
        if (p->size != 4 || (p->type != "float" && p->type != "float32")) {
            throw Error(ErrorCode::Schema, "property '" + name + "' must be float, got " + p->type);
        }
        return p->offset;
    };

    const std::size_t ox = require("x"), oy = require("y"), oz = require("z");
    std::size_t odc[3], oscale[3], orot[4];
    for (int i = 0; i < 3; ++i) odc[i] = require("f_dc_" + std::to_string(i));
    const std::size_t oopacity = require("opacity");
    for (int i = 0; i < 3; ++i) oscale[i] = require("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) orot[i] = require("rot_" + std::to_string(i));

    std::size_t rest_dim = 0;
    for (const auto& p : vertex->properties) {
        if (p.name.rfind("f_rest_", 0) == 0) ++rest_dim;
    }
    if (rest_dim != 0 && rest_dim != 9 && rest_dim != 24 && rest_dim != 45) {
        throw Error(ErrorCode::Schema, "f_rest_* count " + std::to_string(rest_dim) +
                                           " does not match an SH degree of 1..3");
    }
    std::vector<std::size_t> orest(rest_dim);
    for (std::size_t k = 0; k < rest_dim; ++k) orest[k] = require("f_rest_" + std::to_string(k));

    const std::size_t stride = vertex->stride;
    if (vertex->count > (std::numeric_limits<std::size_t>::max() - offset) / std::max<std::size_t>(stride, 1)) {
        throw Error(ErrorCode::Format, "vertex element size overflows");
    }
    const std::size_t count = static_cast<std::size_t>(vertex->count);
    if (offset + count * stride > bytes.size()) {
        throw Error(ErrorCode::Format, "payload truncated: expected " + std::to_string(count * stride) +
                                           " vertex bytes at offset " + std::to_string(offset) +
                                           ", file has " + std::to_string(bytes.size()));
    }

    GaussianScene scene;
    scene.resize(count, rest_dim);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint8_t* rec = bytes.data() + offset + i * stride;
        scene.centers[i] = Vec3f(load_float(rec + ox), load_float(rec + oy), load_float(rec + oz));
        scene.sh_dc[i] = Vec3f(load_float(rec + odc[0]), load_float(rec + odc[1]), load_float(rec + odc[2]));
        scene.opacity_logits[i] = load_float(rec + oopacity);
        scene.log_scales[i] =
            Vec3f(load_float(rec + oscale[0]), load_float(rec + oscale[1]), load_float(rec + oscale[2]));
        scene.rotations[i] = Quat4f{load_float(rec + orot[0]), load_float(rec + orot[1]),
                                    load_float(rec + orot[2]), load_float(rec + orot[3])};
        for (std::size_t k = 0; k < rest_dim; ++k) {
            scene.sh_rest[i * rest_dim + k] = load_float(rec + orest[k]);
        }
    }
    scene.validate();
    return scene;
}

std::vector<std::uint8_t> encode_ply(const GaussianScene& scene) {
    scene.validate();
    const std::string header = ply_header(scene.size(), scene.rest_dim);
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(header.size() + scene.size() * ply_record_size(scene.rest_dim));
    for (std::size_t i = 0; i < scene.size(); ++i) {
        for (int a = 0; a < 3; ++a) append_float(out, scene.centers[i][a]);
        for (int a = 0; a < 3; ++a) append_float(out, 0.0f);
        for (int a = 0; a < 3; ++a) append_float(out, scene.sh_dc[i][a]);
        for (std::size_t k = 0; k < scene.rest_dim; ++k) append_float(out, scene.sh_rest[i * scene.rest_dim + k]);
        append_float(out, scene.opacity_logits[i]);
        for (int a = 0; a < 3; ++a) append_float(out, scene.log_scales[i][a]);
        const Quat4f& q = scene.rotations[i];
        for (float v : {q.w, q.x, q.y, q.z}) append_float(out, v);
    }
    return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::Io, "read failed on '" + path.string() + "'");
    return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failed on '" + path.string() + "'");
}

GaussianScene read_ply(const std::filesystem::path& path) { return parse_ply(read_file_bytes(path)); }

void write_ply(const GaussianScene& scene, const std::filesystem::path& path) {
    write_file_bytes(path, encode_ply(scene));
}

} // namespace arapgs
