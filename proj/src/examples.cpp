#include "emoq/examples.hpp"

#include "emoq/describe.hpp"

namespace emoq {

namespace {

Image to_rgb(const Image& img) {
    if (img.channels == 3) return img;
    Image out(img.height, img.width, 3);
    for (std::size_t i = 0; i < img.height * img.width; ++i) {
        for (std::size_t c = 0; c < 3; ++c) out.pixels[i * 3 + c] = img.pixels[i];
    }
    return out;
}

}  // namespace

Example make_example(const Manifest& manifest, const Sample& sample, const Vocab& vocab, const ExampleOptions& opt) {
    const auto path = manifest.media_path(sample);
    std::vector<Image> frames = sample.video ? sample_frames(path, opt.frames) : std::vector<Image>{read_png(path)};
    Example ex;
    for (const Image& raw : frames) {
        Image f = to_rgb(raw);
        if (opt.render_box && sample.box) f = render_bbox(f, *sample.box, opt.stroke);
        ex.input.frames.push_back(resize_nearest(f, opt.height, opt.width).to_tensor());
    }
    ex.input.text = tokenize(sample.description.value_or(""), vocab, opt.text_len);
    if (manifest.task == TaskKind::multi_label) {
        ex.targets.assign(sample.labels.begin(), sample.labels.end());
    } else {
        ex.label = sample.label;
    }
    ex.sample_id = sample.id;
    ex.image_id = sample.image_id;
    ex.box = sample.box;
    return ex;
}

std::vector<Example> make_examples(const Manifest& manifest, const std::vector<Sample>& samples, const Vocab& vocab,
                                   const ExampleOptions& opt) {
    std::vector<Example> out;
    out.reserve(samples.size());
    for (const auto& s : samples) {
        try {
            out.push_back(make_example(manifest, s, vocab, opt));
        } catch (const std::exception& e) {
            throw std::runtime_error("sample " + s.id + ": " + e.what());
        }
    }
    return out;
}

std::vector<std::string> descriptions_of(const std::vector<Sample>& samples) {
    std::vector<std::string> out;
    for (const auto& s : samples) out.push_back(s.description.value_or(""));
    return out;
}

std::vector<Example> synth_examples(const std::vector<SynthItem>& items, const Vocab& vocab, std::size_t text_len) {
    std::vector<Example> out;
    out.reserve(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        Example ex;
        ex.input.frames.push_back(items[i].image.to_tensor());
        ex.input.text = tokenize(items[i].description, vocab, text_len);
        ex.label = items[i].label;
        ex.sample_id = std::to_string(i);
        ex.image_id = ex.sample_id;
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<std::string> descriptions_of(const std::vector<SynthItem>& items) {
    std::vector<std::string> out;
    for (const auto& it : items) out.push_back(it.description);
    return out;
}

std::vector<Example> drop_modality(std::vector<Example> data, Modality keep) {
    for (Example& ex : data) {
        if (keep == Modality::vision_only) {
            std::fill(ex.input.text.ids.begin(), ex.input.text.ids.end(), Vocab::kPad);
            std::fill(ex.input.text.mask.begin(), ex.input.text.mask.end(), false);
        } else if (keep == Modality::text_only) {
            for (Tensor& f : ex.input.frames) f = Tensor::zeros(f.shape());
        }
    }
    return data;
}

}  // namespace emoq
