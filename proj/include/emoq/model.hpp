#pragma once

#include "emoq/params.hpp"
#include "emoq/qformer.hpp"
#include "emoq/text.hpp"
#include "emoq/vision.hpp"

#include <nlohmann/json.hpp>

#include <memory>

namespace emoq {

struct ModelConfig {
    VisionConfig vision;
    QFormerConfig qformer;
    std::size_t vocab_size = 2;
    std::size_t text_len = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// One model input: a single frame for images, T frames for video, plus the
/// tokenized description.
struct ModelInput {
    std::vector<Tensor> frames;
    TokenizedText text;
};

enum class ParamGroupKind { classifier, backbone, vision };

/// Vision encoder + text embedding + Q-Former + linear classifier.
class EmotionModel {
public:
    explicit EmotionModel(const ModelConfig& config);

    const ModelConfig& config() const { return config_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }
    const VisionEncoder& vision() const { return *vision_; }
    const TextEncoder& text() const { return *text_; }
    const QFormer& qformer() const { return *qformer_; }
    const Tensor& classifier_weight() const { return cls_weight_; }
    const Tensor& classifier_bias() const { return cls_bias_; }

    /// Pre-activation class scores [C].
    Tensor logits(const ModelInput& input, ForwardContext& ctx) const;
    /// Eval-mode probabilities [C] (sigmoid or softmax per task).
    Tensor predict(const ModelInput& input) const;

    /// Which learning-rate group a parameter name belongs to.
    static ParamGroupKind group_of(const std::string& name);

    Checkpoint to_checkpoint() const;
    static std::unique_ptr<EmotionModel> from_checkpoint(const Checkpoint& ckpt);

private:
    ModelConfig config_;
    ParameterStore store_;
    std::unique_ptr<VisionEncoder> vision_;
    std::unique_ptr<TextEncoder> text_;
    std::unique_ptr<QFormer> qformer_;
    Tensor cls_weight_;
    Tensor cls_bias_;
};

}  // namespace emoq
