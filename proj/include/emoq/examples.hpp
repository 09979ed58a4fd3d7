#pragma once

#include "emoq/data.hpp"
#include "emoq/synth.hpp"
#include "emoq/text.hpp"
#include "emoq/train.hpp"

namespace emoq {

struct ExampleOptions {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t frames = 1;  // sampled per video clip
    std::size_t text_len = 64;
    bool render_box = true;
    std::size_t stroke = 3;
};

/// Decodes media, overlays the subject box and tokenizes the description.
Example make_example(const Manifest& manifest, const Sample& sample, const Vocab& vocab, const ExampleOptions& opt);
std::vector<Example> make_examples(const Manifest& manifest, const std::vector<Sample>& samples, const Vocab& vocab,
                                   const ExampleOptions& opt);

std::vector<std::string> descriptions_of(const std::vector<Sample>& samples);

std::vector<Example> synth_examples(const std::vector<SynthItem>& items, const Vocab& vocab, std::size_t text_len);
std::vector<std::string> descriptions_of(const std::vector<SynthItem>& items);

enum class Modality { fused, vision_only, text_only };

/// Removes one modality: vision-only masks every text token, text-only blanks
/// every frame.
std::vector<Example> drop_modality(std::vector<Example> data, Modality keep);

}  // namespace emoq
