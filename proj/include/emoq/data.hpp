#pragma once

#include "emoq/image.hpp"
#include "emoq/metrics.hpp"
#include "emoq/task.hpp"
#include "emoq/tensor.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace emoq {

struct Sample {
    std::string id;
    std::string media;  // image file, or frame directory when `video` is set
    bool video = false;
    std::string image_id;
    std::optional<Box> box;
    std::optional<std::string> description;
    std::vector<int> labels;  // multi-label 0/1 row
    std::size_t label = 0;    // single-label class index
    std::string split = "train";

    bool operator==(const Sample&) const = default;
};

/// Line-delimited JSON: a header record {"task", "num_classes",
/// "class_names"} followed by one record per sample.
struct Manifest {
    TaskKind task = TaskKind::multi_label;
    std::size_t num_classes = 0;
    std::vector<std::string> class_names;
    std::vector<Sample> samples;
    std::filesystem::path base_dir;  // media paths resolve against this

    std::filesystem::path media_path(const Sample& s) const;
    std::vector<Sample> split(const std::string& tag) const;
};

class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Empty file yields an empty manifest. Errors cite the 1-based line number.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Uniform-stride indices of `count` frames out of `available`; short clips
/// repeat their last frame.
std::vector<std::size_t> frame_indices(std::size_t available, std::size_t count);

/// Loads `count` frames from the sorted PNG files of `frame_dir`.
std::vector<Image> sample_frames(const std::filesystem::path& frame_dir, std::size_t count);

/// Sorted PNG file names of a frame directory.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& frame_dir);

/// Shuffled partition into batches of `batch_size`; the last batch may be short.
template <typename T>
std::vector<std::vector<T>> make_batches(const std::vector<T>& items, std::size_t batch_size, RngState& rng) {
    if (batch_size == 0) throw std::invalid_argument("make_batches: batch size must be positive");
    std::vector<T> order = items;
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    std::vector<std::vector<T>> out;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

/// Nearest-neighbour resize.
Image resize_nearest(const Image& image, std::size_t height, std::size_t width);

}  // namespace emoq
