#pragma once

// 8-bit RGB PNG boundary (libpng simplified API). Anything that is not
// 8-bit truecolor RGB without alpha is rejected.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wdrn/error.hpp"
#include "wdrn/tensor.hpp"

namespace wdrn {

struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;  ///< row-major, 3 bytes per pixel

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

inline RgbImage read_png_rgb8(const std::filesystem::path& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw DataError(path.string() + ": not a readable PNG (" + image.message + ")");
    }
    if (image.format != PNG_FORMAT_RGB) {
        png_image_free(&image);
        std::string why = "not 8-bit RGB";
        if (image.format & PNG_FORMAT_FLAG_LINEAR) why = "16-bit samples are not supported";
        else if (image.format & PNG_FORMAT_FLAG_ALPHA) why = "alpha channel is not supported";
        else if (image.format & PNG_FORMAT_FLAG_COLORMAP) why = "palette images are not supported";
        else if (!(image.format & PNG_FORMAT_FLAG_COLOR)) why = "grayscale images are not supported";
        throw DataError(path.string() + ": " + why);
    }
    RgbImage out{image.width, image.height, std::vector<std::uint8_t>(PNG_IMAGE_SIZE(image))};
    if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
        throw DataError(path.string() + ": decode failed (" + image.message + ")");
    }
    return out;
}

inline void write_png_rgb8(const std::filesystem::path& path, const RgbImage& img) {
    if (img.pixels.size() != img.width * img.height * 3) throw DataError("write_png: pixel buffer size mismatch");
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width);
    image.height = static_cast<png_uint_32>(img.height);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, img.pixels.data(), 0, nullptr)) {
        throw DataError(path.string() + ": write failed (" + image.message + ")");
    }
}

/// [1,H,W,3] tensor with values byte / 255.
inline Tensor<float> to_tensor(const RgbImage& img) {
    std::vector<float> v(img.pixels.size());
    std::transform(img.pixels.begin(), img.pixels.end(), v.begin(),
                   [](std::uint8_t b) { return static_cast<float>(b) / 255.0f; });
    return Tensor<float>(Shape{1, img.height, img.width, 3}, std::move(v));
}

/// Clamps to [0,1] and quantizes by round(v * 255). Uses batch item `n`.
template <std::floating_point T>
RgbImage to_rgb8(const Tensor<T>& t, std::size_t n = 0) {
    const Shape& s = t.shape();
    if (s.channels != 3 || n >= s.batch) throw ShapeError("to_rgb8: need an RGB batch item, got " + s.str());
    RgbImage img{s.width, s.height, std::vector<std::uint8_t>(s.height * s.width * 3)};
    const auto src = t.data().subspan(n * s.height * s.width * 3, img.pixels.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double v = std::clamp(static_cast<double>(src[i]), 0.0, 1.0);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return img;
}

}  // namespace wdrn
