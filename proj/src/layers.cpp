#include "emoq/layers.hpp"

#include <algorithm>
#include <cmath>

namespace emoq {

LinearParams LinearParams::create(ParameterStore& store, const std::string& prefix, std::size_t in,
                                  std::size_t out, RngState& rng, bool bias) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(in + out));
    LinearParams p;
    p.w = store.add(prefix + ".weight", Tensor::randn({in, out}, rng, stddev));
    p.has_bias = bias;
    if (bias) p.b = store.add(prefix + ".bias", Tensor::zeros({out}));
    return p;
}

NormParams NormParams::create(ParameterStore& store, const std::string& prefix, std::size_t dim) {
    NormParams p;
    p.gamma = store.add(prefix + ".gamma", Tensor::full({dim}, 1.0));
    p.beta = store.add(prefix + ".beta", Tensor::zeros({dim}));
    return p;
}

MlpParams MlpParams::create(ParameterStore& store, const std::string& prefix, std::size_t dim,
                            std::size_t hidden, RngState& rng) {
    MlpParams p;
    p.fc1 = LinearParams::create(store, prefix + ".fc1", dim, hidden, rng);
    p.fc2 = LinearParams::create(store, prefix + ".fc2", hidden, dim, rng);
    return p;
}

AttentionParams AttentionParams::create(ParameterStore& store, const std::string& prefix, std::size_t dim,
                                        std::size_t key_dim, std::size_t heads, RngState& rng) {
    if (heads == 0 || dim % heads != 0) {
        throw ConfigError("attention width " + std::to_string(dim) + " is not divisible by " +
                          std::to_string(heads) + " heads");
    }
    AttentionParams p;
    p.query = LinearParams::create(store, prefix + ".query", dim, dim, rng);
    p.key = LinearParams::create(store, prefix + ".key", key_dim, dim, rng, false);
    p.value = LinearParams::create(store, prefix + ".value", key_dim, dim, rng);
    p.out = LinearParams::create(store, prefix + ".out", dim, dim, rng);
    p.heads = heads;
    return p;
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& context, const AttentionParams& p,
                            const std::vector<bool>* key_mask, double dropout_p, ForwardContext& ctx,
                            AttentionTrace* trace) {
    if (queries.rank() != 2 || context.rank() != 2) {
        throw DimensionError("attention: expected 2-D inputs, got " + shape_str(queries.shape()) + " and " +
                             shape_str(context.shape()));
    }
    if (queries.dim(0) == 0) throw DimensionError("attention: no query rows");
    if (context.dim(0) == 0) throw DimensionError("attention: empty key/value set");
    if (key_mask && std::none_of(key_mask->begin(), key_mask->end(), [](bool b) { return b; })) {
        throw std::domain_error("attention: every key is masked");
    }
    const std::size_t dim = p.dim();
    const std::size_t head_dim = dim / p.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Tensor q = p.query(queries);
    Tensor k = p.key(context);
    Tensor v = p.value(context);
    std::vector<Tensor> heads;
    heads.reserve(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h) {
        Tensor qh = slice_cols(q, h * head_dim, head_dim);
        Tensor kh = slice_cols(k, h * head_dim, head_dim);
        Tensor vh = slice_cols(v, h * head_dim, head_dim);
        Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
        if (key_mask) scores = mask_keys(scores, *key_mask);
        Tensor probs = softmax(scores, -1);
        if (trace) trace->probs.push_back(probs);
        probs = dropout(probs, dropout_p, ctx.training(), ctx.rng);
        heads.push_back(matmul(probs, vh));
    }
    Tensor merged = p.heads == 1 ? heads[0] : concat_cols(heads);
    return p.out(merged);
}

}  // namespace emoq
