#include "emoq/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace emoq {

namespace {

png_uint_32 format_for(std::size_t channels) {
    switch (channels) {
        case 1: return PNG_FORMAT_GRAY;
        case 3: return PNG_FORMAT_RGB;
        default: throw std::invalid_argument("PNG: unsupported channel count " + std::to_string(channels));
    }
}

std::vector<unsigned char> quantize(const Image& image) {
    if (image.pixels.size() != image.height * image.width * image.channels) {
        throw std::invalid_argument("PNG: pixel buffer does not match image dimensions");
    }
    std::vector<unsigned char> bytes(image.pixels.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        const double v = std::clamp(image.pixels[i], 0.0, 1.0);
        bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    return bytes;
}

png_image describe(const Image& image) {
    png_image desc;
    std::memset(&desc, 0, sizeof(desc));
    desc.version = PNG_IMAGE_VERSION;
    desc.width = static_cast<png_uint_32>(image.width);
    desc.height = static_cast<png_uint_32>(image.height);
    desc.format = format_for(image.channels);
    return desc;
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
    png_image desc;
    std::memset(&desc, 0, sizeof(desc));
    desc.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&desc, path.c_str())) {
        throw std::runtime_error("cannot read PNG " + path.string() + ": " + desc.message);
    }
    const bool gray = (desc.format & PNG_FORMAT_FLAG_COLOR) == 0;
    desc.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    std::vector<unsigned char> bytes(PNG_IMAGE_SIZE(desc));
    if (!png_image_finish_read(&desc, nullptr, bytes.data(), 0, nullptr)) {
        png_image_free(&desc);
        throw std::runtime_error("invalid PNG " + path.string() + ": " + desc.message);
    }
    Image image(desc.height, desc.width, gray ? 1 : 3);
    for (std::size_t i = 0; i < bytes.size(); ++i) image.pixels[i] = bytes[i] / 255.0;
    return image;
}

void write_png(const std::filesystem::path& path, const Image& image) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    png_image desc = describe(image);
    const std::vector<unsigned char> bytes = quantize(image);
    if (!png_image_write_to_file(&desc, path.c_str(), 0, bytes.data(), 0, nullptr)) {
        throw std::runtime_error("failed writing PNG " + path.string() + ": " + desc.message);
    }
}

std::vector<unsigned char> encode_png(const Image& image) {
    png_image desc = describe(image);
    const std::vector<unsigned char> bytes = quantize(image);
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&desc, nullptr, &size, 0, bytes.data(), 0, nullptr)) {
        throw std::runtime_error(std::string("failed sizing PNG: ") + desc.message);
    }
    std::vector<unsigned char> out(size);
    if (!png_image_write_to_memory(&desc, out.data(), &size, 0, bytes.data(), 0, nullptr)) {
        throw std::runtime_error(std::string("failed encoding PNG: ") + desc.message);
    }
    out.resize(size);
    return out;
}

}  // namespace emoq
