#pragma once

#include "emoq/layers.hpp"
#include "emoq/task.hpp"
#include "emoq/vision.hpp"

#include <nlohmann/json.hpp>

namespace emoq {

struct QFormerConfig {
    std::size_t num_queries = 8;
    std::size_t dim = 64;
    std::size_t layers = 4;  // self-attention blocks; half of them also cross-attend
    std::size_t heads = 4;
    std::size_t ffn_dim = 0;  // 0 means 4 * dim
    double attn_dropout = 0.4;
    std::size_t num_classes = 26;
    TaskKind task = TaskKind::multi_label;
    std::size_t cross_attention_parity = 1;  // blocks with index % 2 == parity cross-attend

    void validate() const;
    std::size_t head_dim() const { return dim / heads; }
    std::size_t hidden_dim() const { return ffn_dim == 0 ? 4 * dim : ffn_dim; }
    bool has_cross_attention(std::size_t block) const { return block % 2 == cross_attention_parity; }
};

void to_json(nlohmann::json& j, const QFormerConfig& c);
void from_json(const nlohmann::json& j, QFormerConfig& c);

/// [Q; X_t]: query rows first, then text rows.
Tensor concat_sequence(const Tensor& queries, const Tensor& text);

/// Multi-head self-attention over `z`; masked positions cannot be attended to.
Tensor msa(const Tensor& z, const AttentionParams& p, const std::vector<bool>& key_mask, double dropout_p,
           ForwardContext& ctx, AttentionTrace* trace = nullptr);

/// Multi-head cross-attention: `queries` attend over the visual tokens. The
/// key/value projections map the visual width D onto the query width d.
Tensor mca(const Tensor& queries, const VisualTokens& visual, const AttentionParams& p, double dropout_p,
           ForwardContext& ctx, AttentionTrace* trace = nullptr);

struct QFormerOutput {
    Tensor queries;  // [N, d]
    std::size_t cross_attention_calls = 0;
};

/// Learnable queries fused with description tokens (self-attention) and
/// visual tokens (cross-attention every other block).
///
/// Each block: pre-norm self-attention over [Q; X_t] with residual; on
/// cross-attention blocks the query rows additionally attend to the visual
/// tokens; then separate pre-norm feed-forward networks update the query and
/// text rows. Text rows only see visual information through later
/// self-attention.
class QFormer {
public:
    QFormer(const QFormerConfig& config, std::size_t visual_dim, ParameterStore& store, RngState& rng);

    const QFormerConfig& config() const { return config_; }
    const Tensor& queries() const { return queries_; }

    QFormerOutput forward(const Tensor& text, const std::vector<bool>& text_mask, const VisualTokens& visual,
                          ForwardContext& ctx) const;

private:
    struct Block {
        NormParams self_norm;
        AttentionParams self_attn;
        bool cross = false;
        NormParams cross_norm;
        AttentionParams cross_attn;
        NormParams query_ffn_norm;
        MlpParams query_ffn;
        NormParams text_ffn_norm;
        MlpParams text_ffn;
    };

    QFormerConfig config_;
    Tensor queries_;
    std::vector<Block> blocks_;
};

/// Mean-pools the query rows and applies the classification layer.
Tensor classifier_logits(const Tensor& attended_queries, const Tensor& weight, const Tensor& bias);

/// Output activation: sigmoid per class (multi-label) or softmax (single-label).
Tensor apply_activation(const Tensor& logits, TaskKind task);

/// Pooled linear classification followed by the task activation.
Tensor classify(const Tensor& attended_queries, const Tensor& weight, const Tensor& bias, TaskKind task);

}  // namespace emoq
