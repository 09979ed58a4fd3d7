#include "emoq/vision.hpp"

namespace emoq {

void VisionConfig::validate() const {
    if (patch == 0 || height == 0 || width == 0 || channels == 0) {
        throw ConfigError("vision: image size, channels and patch size must be positive");
    }
    if (height % patch != 0 || width % patch != 0) {
        throw ConfigError("vision: image " + std::to_string(height) + "x" + std::to_string(width) +
                          " is not divisible into " + std::to_string(patch) + "px patches");
    }
    if (heads == 0 || dim % heads != 0) {
        throw ConfigError("vision: dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                          " heads");
    }
    if (attn_dropout < 0.0 || attn_dropout > 1.0) throw ConfigError("vision: attn_dropout outside [0, 1]");
}

void to_json(nlohmann::json& j, const VisionConfig& c) {
    j = {{"height", c.height}, {"width", c.width},   {"channels", c.channels},
         {"patch", c.patch},   {"dim", c.dim},       {"depth", c.depth},
         {"heads", c.heads},   {"attn_dropout", c.attn_dropout}};
}

void from_json(const nlohmann::json& j, VisionConfig& c) {
    j.at("height").get_to(c.height);
    j.at("width").get_to(c.width);
    j.at("channels").get_to(c.channels);
    j.at("patch").get_to(c.patch);
    j.at("dim").get_to(c.dim);
    j.at("depth").get_to(c.depth);
    j.at("heads").get_to(c.heads);
    j.at("attn_dropout").get_to(c.attn_dropout);
}

Tensor patchify(const Tensor& image, std::size_t patch) {
    if (image.rank() != 3) throw DimensionError("patchify: expected [H,W,C], got " + shape_str(image.shape()));
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    if (patch == 0 || h % patch != 0 || w % patch != 0) {
        throw ConfigError("patchify: image " + shape_str(image.shape()) + " not divisible by patch " +
                          std::to_string(patch));
    }
    const std::size_t rows = h / patch, cols = w / patch, len = patch * patch * c;
    std::vector<double> out(rows * cols * len);
    auto px = image.data();
    std::size_t o = 0;
    for (std::size_t pr = 0; pr < rows; ++pr) {
        for (std::size_t pc = 0; pc < cols; ++pc) {
            for (std::size_t y = 0; y < patch; ++y) {
                for (std::size_t x = 0; x < patch; ++x) {
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        out[o++] = px[((pr * patch + y) * w + pc * patch + x) * c + ch];
                    }
                }
            }
        }
    }
    return Tensor({rows * cols, len}, std::move(out));
}

VisualTokens temporal_pool(const std::vector<VisualTokens>& frames) {
    if (frames.empty()) throw std::invalid_argument("temporal_pool: no frames");
    std::vector<Tensor> parts;
    parts.reserve(frames.size());
    for (const auto& f : frames) parts.push_back(f.tokens);
    return VisualTokens{order_free_mean(parts)};
}

VisionEncoder::VisionEncoder(const VisionConfig& config, ParameterStore& store, RngState& rng) : config_(config) {
    config_.validate();
    const std::size_t d = config_.dim;
    patch_embed_ = LinearParams::create(store, "vision.patch_embed", config_.patch_len(), d, rng);
    cls_token_ = store.add("vision.cls_token", Tensor::randn({1, d}, rng, 0.02));
    position_ = store.add("vision.position", Tensor::randn({config_.num_tokens(), d}, rng, 0.02));
    for (std::size_t i = 0; i < config_.depth; ++i) {
        const std::string prefix = "vision.block" + std::to_string(i);
        Block b;
        b.norm1 = NormParams::create(store, prefix + ".norm1", d);
        b.attn = AttentionParams::create(store, prefix + ".attn", d, d, config_.heads, rng);
        b.norm2 = NormParams::create(store, prefix + ".norm2", d);
        b.mlp = MlpParams::create(store, prefix + ".mlp", d, 4 * d, rng);
        blocks_.push_back(std::move(b));
    }
    final_norm_ = NormParams::create(store, "vision.final_norm", d);
}

VisualTokens VisionEncoder::encode(const Tensor& image, ForwardContext& ctx) const {
    const Shape expected{config_.height, config_.width, config_.channels};
    if (image.shape() != expected) {
        throw DimensionError("encode_image: expected image " + shape_str(expected) + ", got " +
                             shape_str(image.shape()));
    }
    Tensor patches = patchify(image, config_.patch);
    Tensor x = concat_rows({cls_token_, patch_embed_(patches)});
    x = add(x, position_);
    for (const Block& b : blocks_) {
        Tensor h = b.norm1(x);
        x = add(x, multi_head_attention(h, h, b.attn, nullptr, config_.attn_dropout, ctx));
        x = add(x, b.mlp(b.norm2(x)));
    }
    return VisualTokens{final_norm_(x)};
}

VisualTokens VisionEncoder::encode_video(const std::vector<Tensor>& frames, ForwardContext& ctx) const {
    if (frames.empty()) throw std::invalid_argument("encode_video: no frames");
    if (frames.size() == 1) return encode(frames[0], ctx);
    std::vector<VisualTokens> encoded;
    encoded.reserve(frames.size());
    for (const Tensor& f : frames) encoded.push_back(encode(f, ctx));
    return temporal_pool(encoded);
}

}  // namespace emoq
