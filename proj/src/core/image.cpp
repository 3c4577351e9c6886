#include "core/image.hpp"

#include "core/error.hpp"
#include "core/ply.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>
#include <numeric>

namespace arapgs {

std::size_t MaskBuffer::count() const {
    return static_cast<std::size_t>(std::count_if(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; }));
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& image) {
    if (image.channels != 1 && image.channels != 3) {
        throw Error(ErrorCode::ShapeMismatch, "PNG export supports 1 or 3 channels");
    }
    if (image.width <= 0 || image.height <= 0) throw Error(ErrorCode::ShapeMismatch, "empty image");
    std::vector<std::uint8_t> raw(image.pixels.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        raw[i] = static_cast<std::uint8_t>(quantize8(image.pixels[i]) * 255.0f + 0.5f);
    }

    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, raw.data(), 0, nullptr)) {
        throw Error(ErrorCode::Io, std::string("PNG encode failed: ") + png.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, raw.data(), 0, nullptr)) {
        throw Error(ErrorCode::Io, std::string("PNG encode failed: ") + png.message);
    }
    out.resize(size);
    return out;
}

ImageBuffer decode_png(std::span<const std::uint8_t> bytes) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        throw Error(ErrorCode::Format, std::string("PNG decode failed: ") + png.message);
    }
    png.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr)) {
        png_image_free(&png);
        throw Error(ErrorCode::Format, std::string("PNG decode failed: ") + png.message);
    }
    ImageBuffer img(static_cast<int>(png.width), static_cast<int>(png.height), 3);
    for (std::size_t i = 0; i < raw.size(); ++i) img.pixels[i] = static_cast<float>(raw[i]) / 255.0f;
    return img;
}

void write_png(const ImageBuffer& image, const std::filesystem::path& path) {
    write_file_bytes(path, encode_png(image));
}

ImageBuffer read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }

} // namespace arapgs
