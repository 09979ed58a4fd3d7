#include "emoq/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

namespace emoq {

void SyntheticSpec::validate() const {
    if (num_classes < 2 || num_classes > kMaxSynthClasses) {
        throw ConfigError("synthetic: num_classes must be in [2, " + std::to_string(kMaxSynthClasses) + "]");
    }
    if (image_size < 8) throw ConfigError("synthetic: image_size must be at least 8");
    if (modality_informativeness < 0.0 || modality_informativeness > 1.0) {
        throw ConfigError("synthetic: modality_informativeness must be in [0, 1]");
    }
    if (noise < 0.0 || noise > 0.5) throw ConfigError("synthetic: noise must be in [0, 0.5]");
    if (distractors > synth_distractors().size()) throw ConfigError("synthetic: too many distractors");
}

const std::vector<std::string>& synth_keywords() {
    static const std::vector<std::string> words{"serene", "tense", "joyful", "gloomy", "restless", "weary"};
    return words;
}

const std::vector<std::string>& synth_distractors() {
    static const std::vector<std::string> words{"table", "window", "street", "crowd", "chair", "tree",
                                                "light", "wall",   "car",    "door",  "sky",   "floor"};
    return words;
}

std::vector<std::string> synth_class_names(std::size_t num_classes) {
    std::vector<std::string> names;
    for (std::size_t c = 0; c < num_classes; ++c) names.push_back("class" + std::to_string(c));
    return names;
}

namespace {

constexpr std::array<std::array<double, 3>, kMaxSynthClasses> kColors{{
    {0.9, 0.1, 0.1},
    {0.1, 0.8, 0.2},
    {0.15, 0.25, 0.95},
    {0.95, 0.85, 0.1},
    {0.85, 0.15, 0.85},
    {0.1, 0.85, 0.9},
}};

bool shape_covers(std::size_t shape, long u, long v, long m) {
    const long c = m / 2;
    switch (shape) {
        case 0: return true;
        case 1: return u < 2 || v < 2 || u >= m - 2 || v >= m - 2;
        case 2: return std::abs(2 * u - (m - 1)) <= 2 || std::abs(2 * v - (m - 1)) <= 2;
        case 3: return std::abs(u - v) <= 1 || std::abs(u + v - (m - 1)) <= 1;
        case 4: return u % 3 == 0;
        default: return (u - c) * (u - c) + (v - c) * (v - c) <= c * c;
    }
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

Image render_shape(std::size_t shape, const SyntheticSpec& spec, RngState& rng) {
    const std::size_t n = spec.image_size;
    Image img(n, n, 3);
    for (double& p : img.pixels) p = quantize(0.5 + spec.noise * (2.0 * rng.uniform() - 1.0));
    const long m = static_cast<long>(n / 2);
    const long span = static_cast<long>(n) - m - 1;
    const long oy = 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(span)));
    const long ox = 1 + static_cast<long>(rng.below(static_cast<std::uint64_t>(span)));
    const auto& color = kColors[shape];
    for (long u = 0; u < m; ++u) {
        for (long v = 0; v < m; ++v) {
            if (!shape_covers(shape, u, v, m)) continue;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                img.at(static_cast<std::size_t>(oy + u), static_cast<std::size_t>(ox + v), ch) =
                    quantize(color[ch] + spec.noise * (2.0 * rng.uniform() - 1.0));
            }
        }
    }
    return img;
}

std::string describe_keyword(std::size_t keyword, const SyntheticSpec& spec, RngState& rng) {
    std::vector<std::string> pool = synth_distractors();
    std::vector<std::string> words{synth_keywords()[keyword]};
    for (std::size_t i = 0; i < spec.distractors; ++i) {
        const std::size_t j = i + rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
        words.push_back(pool[i]);
    }
    for (std::size_t i = words.size(); i > 1; --i) std::swap(words[i - 1], words[rng.below(i)]);
    std::string text = "the scene shows";
    for (const auto& w : words) text += " " + w;
    return text + ".";
}

}  // namespace

std::vector<SynthItem> synth_generate(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t C = spec.num_classes;
    const double rho = spec.modality_informativeness;
    RngState rng{spec.seed, 0};
    std::vector<SynthItem> items(spec.num_samples);
    for (std::size_t i = 0; i < spec.num_samples; ++i) {
        SynthItem& it = items[i];
        it.label = i % C;
        it.shape = (i / C) % C;
        const double u = rng.uniform();
        if (u < rho / 2) {
            it.shape = it.label;
        } else if (u < rho) {
            it.shape = 0;
        }
        it.keyword = (it.label + C - it.shape) % C;
        it.image = render_shape(it.shape, spec, rng);
        it.description = describe_keyword(it.keyword, spec, rng);
    }
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
    return items;
}

ModalityCeiling single_modality_ceiling(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t C = spec.num_classes;
    const double rho = spec.modality_informativeness;
    // joint[y][s] = P(y) P(s | y); the keyword is always (y - s) mod C.
    std::vector<std::vector<double>> joint(C, std::vector<double>(C));
    for (std::size_t y = 0; y < C; ++y) {
        for (std::size_t s = 0; s < C; ++s) {
            double p = (1.0 - rho) / C;
            if (s == y) p += rho / 2;
            if (s == 0) p += rho / 2;
            joint[y][s] = p / C;
        }
    }
    ModalityCeiling out;
    out.chance = 1.0 / C;
    for (std::size_t s = 0; s < C; ++s) {
        double best = 0.0;
        for (std::size_t y = 0; y < C; ++y) best = std::max(best, joint[y][s]);
        out.vision += best;
    }
    for (std::size_t k = 0; k < C; ++k) {
        double best = 0.0;
        for (std::size_t y = 0; y < C; ++y) best = std::max(best, joint[y][(y + C - k) % C]);
        out.text += best;
    }
    return out;
}

Manifest write_synthetic(const std::filesystem::path& dir, const std::vector<SynthItem>& train,
                         const std::vector<SynthItem>& val, std::size_t num_classes) {
    Manifest m;
    m.task = TaskKind::single_label;
    m.num_classes = num_classes;
    m.class_names = synth_class_names(num_classes);
    m.base_dir = dir;
    auto emit = [&](const std::vector<SynthItem>& items, const std::string& split) {
        for (std::size_t i = 0; i < items.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "images/%s_%05zu.png", split.c_str(), i);
            write_png(dir / name, items[i].image);
            Sample s;
            s.id = split + "_" + std::to_string(i);
            s.media = name;
            s.image_id = s.id;
            s.description = items[i].description;
            s.label = items[i].label;
            s.split = split;
            m.samples.push_back(std::move(s));
        }
    };
    emit(train, "train");
    emit(val, "val");
    save_manifest(dir / "manifest.jsonl", m);
    return m;
}

}  // namespace emoq
