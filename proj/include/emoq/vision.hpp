#pragma once

#include "emoq/layers.hpp"

#include <nlohmann/json.hpp>

namespace emoq {

struct VisionConfig {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t channels = 3;
    std::size_t patch = 8;
    std::size_t dim = 64;
    std::size_t depth = 2;
    std::size_t heads = 4;
    double attn_dropout = 0.3;

    void validate() const;
    std::size_t num_patches() const { return (height / patch) * (width / patch); }
    std::size_t num_tokens() const { return num_patches() + 1; }
    std::size_t patch_len() const { return patch * patch * channels; }
};

void to_json(nlohmann::json& j, const VisionConfig& c);
void from_json(const nlohmann::json& j, VisionConfig& c);

/// Final hidden state of the encoder: [num_patches + 1, D], class token first.
struct VisualTokens {
    Tensor tokens;
};

/// Splits an [H, W, C] image into non-overlapping P x P patches, top-left to
/// bottom-right, each flattened in (row, col, channel) order.
Tensor patchify(const Tensor& image, std::size_t patch);

/// Elementwise mean over frames, independent of frame order.
VisualTokens temporal_pool(const std::vector<VisualTokens>& frames);

/// ViT-style encoder: linear patch embedding, prepended class token, learned
/// position embeddings, pre-norm transformer blocks and a closing LayerNorm.
class VisionEncoder {
public:
    VisionEncoder(const VisionConfig& config, ParameterStore& store, RngState& rng);

    const VisionConfig& config() const { return config_; }
    VisualTokens encode(const Tensor& image, ForwardContext& ctx) const;
    /// Encodes each frame and pools along time.
    VisualTokens encode_video(const std::vector<Tensor>& frames, ForwardContext& ctx) const;

private:
    struct Block {
        NormParams norm1;
        AttentionParams attn;
        NormParams norm2;
        MlpParams mlp;
    };

    VisionConfig config_;
    LinearParams patch_embed_;
    Tensor cls_token_;
    Tensor position_;
    std::vector<Block> blocks_;
    NormParams final_norm_;
};

}  // namespace emoq
