#include "emoq/model.hpp"

namespace emoq {

void ModelConfig::validate() const {
    vision.validate();
    qformer.validate();
    if (vocab_size < 2) throw ConfigError("model: vocabulary needs at least PAD and UNK");
    if (text_len == 0) throw ConfigError("model: text_len must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"vision", c.vision},
         {"qformer", c.qformer},
         {"vocab_size", c.vocab_size},
         {"text_len", c.text_len},
         {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    j.at("vision").get_to(c.vision);
    j.at("qformer").get_to(c.qformer);
    j.at("vocab_size").get_to(c.vocab_size);
    j.at("text_len").get_to(c.text_len);
    j.at("seed").get_to(c.seed);
}

EmotionModel::EmotionModel(const ModelConfig& config) : config_(config) {
    config_.validate();
    RngState rng{config_.seed, 0};
    RngState vision_rng = rng.fork();
    RngState text_rng = rng.fork();
    RngState qformer_rng = rng.fork();
    RngState cls_rng = rng.fork();
    vision_ = std::make_unique<VisionEncoder>(config_.vision, store_, vision_rng);
    text_ = std::make_unique<TextEncoder>(config_.vocab_size, config_.text_len, config_.qformer.dim, store_, text_rng);
    qformer_ = std::make_unique<QFormer>(config_.qformer, config_.vision.dim, store_, qformer_rng);
    const std::size_t d = config_.qformer.dim, c = config_.qformer.num_classes;
    cls_weight_ = store_.add("classifier.weight", Tensor::randn({d, c}, cls_rng, 0.02));
    cls_bias_ = store_.add("classifier.bias", Tensor::zeros({c}));
}

Tensor EmotionModel::logits(const ModelInput& input, ForwardContext& ctx) const {
    VisualTokens visual = vision_->encode_video(input.frames, ctx);
    Tensor text = text_->embed(input.text);
    QFormerOutput fused = qformer_->forward(text, input.text.mask, visual, ctx);
    return classifier_logits(fused.queries, cls_weight_, cls_bias_);
}

Tensor EmotionModel::predict(const ModelInput& input) const {
    NoGradGuard no_grad;
    ForwardContext ctx;
    return apply_activation(logits(input, ctx), config_.qformer.task);
}

ParamGroupKind EmotionModel::group_of(const std::string& name) {
    if (name.starts_with("classifier.")) return ParamGroupKind::classifier;
    if (name.starts_with("vision.")) return ParamGroupKind::vision;
    if (name.starts_with("qformer.") || name.starts_with("text.")) return ParamGroupKind::backbone;
    throw std::invalid_argument("parameter '" + name + "' belongs to no learning-rate group");
}

Checkpoint EmotionModel::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.manifest["model"] = config_;
    ckpt.tensors = store_.snapshot();
    return ckpt;
}

std::unique_ptr<EmotionModel> EmotionModel::from_checkpoint(const Checkpoint& ckpt) {
    auto model = std::make_unique<EmotionModel>(ckpt.manifest.at("model").get<ModelConfig>());
    model->store_.assign_from(ckpt.tensors);
    return model;
}

}  // namespace emoq
