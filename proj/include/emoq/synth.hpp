#pragma once

#include "emoq/data.hpp"
#include "emoq/image.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace emoq {

/// Single-label corpus whose class is (shape + keyword) mod C: each image shows
/// one coloured shape, each description holds one keyword among distractors.
struct SyntheticSpec {
    std::size_t num_samples = 1000;
    std::size_t image_size = 16;
    std::size_t num_classes = 5;
    std::uint64_t seed = 0;
    /// With probability rho/2 the shape equals the class (keyword 0), with
    /// probability rho/2 the keyword does (shape 0); otherwise the pair is drawn
    /// from a balanced grid where neither factor alone says anything.
    double modality_informativeness = 0.5;
    double noise = 0.08;
    std::size_t distractors = 4;

    void validate() const;
};

struct SynthItem {
    Image image;
    std::string description;
    std::size_t label = 0;
    std::size_t shape = 0;
    std::size_t keyword = 0;
};

constexpr std::size_t kMaxSynthClasses = 6;

const std::vector<std::string>& synth_keywords();
const std::vector<std::string>& synth_distractors();
std::vector<std::string> synth_class_names(std::size_t num_classes);

/// Deterministic in the spec; labels cycle so every class appears equally often.
std::vector<SynthItem> synth_generate(const SyntheticSpec& spec);

struct ModalityCeiling {
    double vision = 0.0;
    double text = 0.0;
    double chance = 0.0;
};

/// Bayes-optimal accuracy of a classifier seeing only the shape (vision) or
/// only the keyword (text), by enumeration over the (class, shape) grid.
ModalityCeiling single_modality_ceiling(const SyntheticSpec& spec);

/// Writes PNGs under `dir/images` and `dir/manifest.jsonl` with train/val
/// split tags; returns the manifest as written.
Manifest write_synthetic(const std::filesystem::path& dir, const std::vector<SynthItem>& train,
                         const std::vector<SynthItem>& val, std::size_t num_classes);

}  // namespace emoq
