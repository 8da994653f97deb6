#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace disco {

/// RGB image with CHW float pixels in [-1, 1].
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> chw;  // 3 * height * width

    Image() = default;
    Image(std::size_t h, std::size_t w) : height(h), width(w), chw(3 * h * w, -1.0f) {}

    [[nodiscard]] float& at(std::size_t c, std::size_t y, std::size_t x) { return chw[(c * height + y) * width + x]; }
    [[nodiscard]] float at(std::size_t c, std::size_t y, std::size_t x) const { return chw[(c * height + y) * width + x]; }

    bool operator==(const Image&) const = default;
};

/// Linear byte <-> [-1, 1] mapping: v = b / 127.5 - 1.
float byte_to_unit(std::uint8_t b);
std::uint8_t unit_to_byte(float v);

/// Interleaved RGB8 conversions.
Image from_rgb8(std::span<const std::uint8_t> rgb, std::size_t height, std::size_t width);
std::vector<std::uint8_t> to_rgb8(const Image& img);

Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);

Image flip_horizontal(const Image& img);
/// Bilinear resize (used to bring folder images to the configured size).
Image resize(const Image& img, std::size_t height, std::size_t width);
/// Tiles images row-major into a grid with `columns` columns.
Image tile(std::span<const Image> images, std::size_t columns);

/// Packs images into an NCHW buffer.
template <typename T>
std::vector<T> stack_images(std::span<const Image> images);

}  // namespace disco
