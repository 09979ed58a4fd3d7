#pragma once

#include "emoq/params.hpp"
#include "emoq/tensor.hpp"

#include <string>
#include <vector>

namespace emoq {

enum class Mode { train, eval };

/// Per-forward context: dropout randomness and train/eval switch.
struct ForwardContext {
    Mode mode = Mode::eval;
    RngState rng{};
    bool training() const { return mode == Mode::train; }
};

struct LinearParams {
    Tensor w;
    Tensor b;

    bool has_bias = true;

    static LinearParams create(ParameterStore& store, const std::string& prefix, std::size_t in,
                               std::size_t out, RngState& rng, bool bias = true);
    Tensor operator()(const Tensor& x) const { return has_bias ? linear(x, w, b) : matmul(x, w); }
    std::size_t in_dim() const { return w.dim(0); }
    std::size_t out_dim() const { return w.dim(1); }
};

struct NormParams {
    Tensor gamma;
    Tensor beta;
    double eps = 1e-6;

    static NormParams create(ParameterStore& store, const std::string& prefix, std::size_t dim);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
};

/// Two-layer perceptron d -> hidden -> d with GELU in between.
struct MlpParams {
    LinearParams fc1;
    LinearParams fc2;

    static MlpParams create(ParameterStore& store, const std::string& prefix, std::size_t dim,
                            std::size_t hidden, RngState& rng);
    Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
};

/// Query/key/value/output projections of one multi-head attention layer.
/// Keys and values may come from a space of a different width (key_dim).
/// The key projection has no bias: softmax ignores a per-row shift, so its
/// gradient would be identically zero.
struct AttentionParams {
    LinearParams query;
    LinearParams key;
    LinearParams value;
    LinearParams out;
    std::size_t heads = 1;

    static AttentionParams create(ParameterStore& store, const std::string& prefix, std::size_t dim,
                                  std::size_t key_dim, std::size_t heads, RngState& rng);
    std::size_t dim() const { return query.out_dim(); }
};

/// Optional capture of post-softmax attention probabilities, one per head.
struct AttentionTrace {
    std::vector<Tensor> probs;
};

/// Scaled dot-product attention of `queries` [Sq, d] over `context` [Sk, dk].
/// Keys whose mask entry is false get -inf scores before the softmax.
Tensor multi_head_attention(const Tensor& queries, const Tensor& context, const AttentionParams& p,
                            const std::vector<bool>* key_mask, double dropout_p, ForwardContext& ctx,
                            AttentionTrace* trace = nullptr);

}  // namespace emoq
