#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace arapgs {

/// Row-major interleaved float image. Renders are RGB in [0, 1]; other
/// channel counts appear only in metric inputs.
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 3;
    std::vector<float> pixels;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, int c = 3, float fill = 0.0f)
        : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    float& at(int x, int y, int c = 0) { return pixels[index(x, y, c)]; }
    float at(int x, int y, int c = 0) const { return pixels[index(x, y, c)]; }

    bool same_shape(const ImageBuffer& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }

    friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

/// Binary mask, one byte per pixel (0 or 1).
struct MaskBuffer {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    MaskBuffer() = default;
    MaskBuffer(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill) {}

    std::uint8_t& at(int x, int y) { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
    std::size_t count() const;

    friend bool operator==(const MaskBuffer&, const MaskBuffer&) = default;
};

/// 8-bit PNG; values are scaled by 255 and rounded, with no transfer curve.
std::vector<std::uint8_t> encode_png(const ImageBuffer& image);
ImageBuffer decode_png(std::span<const std::uint8_t> bytes);
void write_png(const ImageBuffer& image, const std::filesystem::path& path);
ImageBuffer read_png(const std::filesystem::path& path);

/// Value after an 8-bit round trip.
inline float quantize8(float v) {
    const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
    return static_cast<float>(static_cast<int>(c * 255.0f + 0.5f)) / 255.0f;
}

} // namespace arapgs
