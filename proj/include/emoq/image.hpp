#pragma once

#include "emoq/tensor.hpp"

#include <filesystem>
#include <vector>

namespace emoq {

/// RGB (or single-channel) image with values in [0, 1], row-major HWC.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 3;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
        : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

    double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
    double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }

    Tensor to_tensor() const { return Tensor({height, width, channels}, pixels); }
    bool operator==(const Image&) const = default;
};

/// 8-bit PNG I/O; values are quantized to round(v * 255) on write.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& image);
std::vector<unsigned char> encode_png(const Image& image);

}  // namespace emoq
