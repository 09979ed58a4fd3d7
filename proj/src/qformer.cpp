#include "emoq/qformer.hpp"

namespace emoq {

void QFormerConfig::validate() const {
    if (num_queries == 0) throw ConfigError("qformer: need at least one query");
    if (layers == 0 || layers % 2 != 0) {
        throw ConfigError("qformer: layer count must be even and positive, got " + std::to_string(layers));
    }
    if (heads == 0 || dim % heads != 0) {
        throw ConfigError("qformer: dim " + std::to_string(dim) + " not divisible by " + std::to_string(heads) +
                          " heads");
    }
    if (cross_attention_parity > 1) throw ConfigError("qformer: cross_attention_parity must be 0 or 1");
    if (num_classes == 0) throw ConfigError("qformer: num_classes must be positive");
    if (attn_dropout < 0.0 || attn_dropout > 1.0) throw ConfigError("qformer: attn_dropout outside [0, 1]");
}

void to_json(nlohmann::json& j, const QFormerConfig& c) {
    j = {{"num_queries", c.num_queries},
         {"dim", c.dim},
         {"layers", c.layers},
         {"heads", c.heads},
         {"ffn_dim", c.ffn_dim},
         {"attn_dropout", c.attn_dropout},
         {"num_classes", c.num_classes},
         {"task", std::string(to_string(c.task))},
         {"cross_attention_parity", c.cross_attention_parity}};
}

void from_json(const nlohmann::json& j, QFormerConfig& c) {
    j.at("num_queries").get_to(c.num_queries);
    j.at("dim").get_to(c.dim);
    j.at("layers").get_to(c.layers);
    j.at("heads").get_to(c.heads);
    j.at("ffn_dim").get_to(c.ffn_dim);
    j.at("attn_dropout").get_to(c.attn_dropout);
    j.at("num_classes").get_to(c.num_classes);
    c.task = parse_task_kind(j.at("task").get<std::string>());
    j.at("cross_attention_parity").get_to(c.cross_attention_parity);
}

Tensor concat_sequence(const Tensor& queries, const Tensor& text) {
    if (queries.rank() != 2 || text.rank() != 2 || queries.dim(1) != text.dim(1)) {
        throw DimensionError("concat_sequence: queries " + shape_str(queries.shape()) + " and text " +
                             shape_str(text.shape()) + " differ in width");
    }
    if (text.dim(0) == 0) return queries;
    return concat_rows({queries, text});
}

Tensor msa(const Tensor& z, const AttentionParams& p, const std::vector<bool>& key_mask, double dropout_p,
           ForwardContext& ctx, AttentionTrace* trace) {
    if (z.rank() != 2 || z.dim(0) == 0) throw DimensionError("msa: expected a non-empty [S, d] sequence");
    return multi_head_attention(z, z, p, &key_mask, dropout_p, ctx, trace);
}

Tensor mca(const Tensor& queries, const VisualTokens& visual, const AttentionParams& p, double dropout_p,
           ForwardContext& ctx, AttentionTrace* trace) {
    if (visual.tokens.rank() != 2 || visual.tokens.dim(0) == 0) {
        throw DimensionError("mca: no visual tokens");
    }
    if (visual.tokens.dim(1) != p.key.in_dim()) {
        throw DimensionError("mca: visual tokens " + shape_str(visual.tokens.shape()) +
                             " do not match key projection input " + std::to_string(p.key.in_dim()));
    }
    return multi_head_attention(queries, visual.tokens, p, nullptr, dropout_p, ctx, trace);
}

QFormer::QFormer(const QFormerConfig& config, std::size_t visual_dim, ParameterStore& store, RngState& rng)
    : config_(config) {
    config_.validate();
    const std::size_t d = config_.dim;
    queries_ = store.add("qformer.queries", Tensor::randn({config_.num_queries, d}, rng, 0.02));
    for (std::size_t i = 0; i < config_.layers; ++i) {
        const std::string prefix = "qformer.block" + std::to_string(i);
        Block b;
        b.self_norm = NormParams::create(store, prefix + ".self_norm", d);
        b.self_attn = AttentionParams::create(store, prefix + ".self_attn", d, d, config_.heads, rng);
        b.cross = config_.has_cross_attention(i);
        if (b.cross) {
            b.cross_norm = NormParams::create(store, prefix + ".cross_norm", d);
            b.cross_attn = AttentionParams::create(store, prefix + ".cross_attn", d, visual_dim, config_.heads, rng);
        }
        b.query_ffn_norm = NormParams::create(store, prefix + ".query_ffn_norm", d);
        b.query_ffn = MlpParams::create(store, prefix + ".query_ffn", d, config_.hidden_dim(), rng);
        b.text_ffn_norm = NormParams::create(store, prefix + ".text_ffn_norm", d);
        b.text_ffn = MlpParams::create(store, prefix + ".text_ffn", d, config_.hidden_dim(), rng);
        blocks_.push_back(std::move(b));
    }
}

QFormerOutput QFormer::forward(const Tensor& text, const std::vector<bool>& text_mask, const VisualTokens& visual,
                               ForwardContext& ctx) const {
    const std::size_t n = config_.num_queries;
    const std::size_t len = text.rank() == 2 ? text.dim(0) : 0;
    if (text_mask.size() != len) {
        throw DimensionError("qformer: mask length " + std::to_string(text_mask.size()) + " vs " +
                             std::to_string(len) + " text tokens");
    }
    std::vector<bool> key_mask(n, true);
    key_mask.insert(key_mask.end(), text_mask.begin(), text_mask.end());

    QFormerOutput out;
    Tensor z = concat_sequence(queries_, text);
    for (const Block& b : blocks_) {
        z = add(z, msa(b.self_norm(z), b.self_attn, key_mask, config_.attn_dropout, ctx));
        Tensor q = len == 0 ? z : slice_rows(z, 0, n);
        if (b.cross) {
            q = add(q, mca(b.cross_norm(q), visual, b.cross_attn, config_.attn_dropout, ctx));
            ++out.cross_attention_calls;
        }
        q = add(q, b.query_ffn(b.query_ffn_norm(q)));
        if (len == 0) {
            z = q;
            continue;
        }
        Tensor t = slice_rows(z, n, len);
        t = add(t, b.text_ffn(b.text_ffn_norm(t)));
        z = concat_rows({q, t});
    }
    out.queries = len == 0 ? z : slice_rows(z, 0, n);
    return out;
}

Tensor classifier_logits(const Tensor& attended_queries, const Tensor& weight, const Tensor& bias) {
    return linear(mean_rows(attended_queries), weight, bias);
}

Tensor apply_activation(const Tensor& logits, TaskKind task) {
    return task == TaskKind::multi_label ? sigmoid(logits) : softmax(logits, -1);
}

Tensor classify(const Tensor& attended_queries, const Tensor& weight, const Tensor& bias, TaskKind task) {
    return apply_activation(classifier_logits(attended_queries, weight, bias), task);
}

}  // namespace emoq
