#include "disco/image.hpp"

#include <algorithm>
#include <cmath>

#include <png.h>

#include "disco/errors.hpp"

namespace disco {

float byte_to_unit(std::uint8_t b) { return static_cast<float>(b) / 127.5f - 1.0f; }

std::uint8_t unit_to_byte(float v) {
    const float s = std::round((std::clamp(v, -1.0f, 1.0f) + 1.0f) * 127.5f);
    return static_cast<std::uint8_t>(std::clamp(s, 0.0f, 255.0f));
}

Image from_rgb8(std::span<const std::uint8_t> rgb, std::size_t height, std::size_t width) {
    require(rgb.size() == 3 * height * width, "from_rgb8: buffer size does not match geometry");
    Image img(height, width);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x)
            for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = byte_to_unit(rgb[(y * width + x) * 3 + c]);
    return img;
}

std::vector<std::uint8_t> to_rgb8(const Image& img) {
    std::vector<std::uint8_t> rgb(3 * img.height * img.width);
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x)
            for (std::size_t c = 0; c < 3; ++c) rgb[(y * img.width + x) * 3 + c] = unit_to_byte(img.at(c, y, x));
    return rgb;
}

Image read_png(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError(path.string() + ": not a decodable PNG (" + image.message + ")");
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw IoError(path.string() + ": PNG decode failed (" + msg + ")");
    }
    return from_rgb8(buf, image.height, image.width);
}

void write_png(const std::filesystem::path& path, const Image& img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto rgb = to_rgb8(img);
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr))
        throw IoError(path.string() + ": PNG write failed (" + image.message + ")");
}

Image flip_horizontal(const Image& img) {
    Image out(img.height, img.width);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
    return out;
}

Image resize(const Image& img, std::size_t height, std::size_t width) {
    if (img.height == height && img.width == width) return img;
    Image out(height, width);
    const double sy = static_cast<double>(img.height) / static_cast<double>(height);
    const double sx = static_cast<double>(img.width) / static_cast<double>(width);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - static_cast<double>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
                const double bot = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
                out.at(c, y, x) = static_cast<float>(top * (1 - wy) + bot * wy);
            }
        }
    }
    return out;
}

Image tile(std::span<const Image> images, std::size_t columns) {
    require(!images.empty() && columns > 0, "tile: need at least one image and one column");
    const std::size_t h = images[0].height, w = images[0].width;
    const std::size_t rows = (images.size() + columns - 1) / columns;
    Image out(rows * h, std::min(columns, images.size()) * w);
    for (std::size_t i = 0; i < images.size(); ++i) {
        require(images[i].height == h && images[i].width == w, "tile: images differ in size");
        const std::size_t oy = (i / columns) * h, ox = (i % columns) * w;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) out.at(c, oy + y, ox + x) = images[i].at(c, y, x);
    }
    return out;
}

template <typename T>
std::vector<T> stack_images(std::span<const Image> images) {
    std::vector<T> out;
    if (images.empty()) return out;
    out.reserve(images.size() * images[0].chw.size());
    for (const auto& img : images) {
        require(img.chw.size() == images[0].chw.size(), "stack_images: images differ in size");
        for (float v : img.chw) out.push_back(static_cast<T>(v));
    }
    return out;
}

template std::vector<float> stack_images(std::span<const Image>);
template std::vector<double> stack_images(std::span<const Image>);

}  // namespace disco
