#include "emoq/gradsuite.hpp"

#include "emoq/model.hpp"
#include "emoq/qformer.hpp"
#include "emoq/train.hpp"

#include <cstdio>

namespace emoq {

bool GradSuiteReport::passed() const { return failures().empty(); }

std::vector<std::string> GradSuiteReport::failures() const {
    std::vector<std::string> out;
    for (const auto& e : entries) {
        if (!e.passed) out.push_back(e.name);
    }
    return out;
}

std::string GradSuiteReport::to_text() const {
    std::string out;
    char line[256];
    for (const auto& e : entries) {
        std::snprintf(line, sizeof(line), "%-22s %s max_rel_error=%.3e checked=%zu\n", e.name.c_str(),
                      e.passed ? "ok  " : "FAIL", e.result.max_rel_error, e.result.checked);
        out += line;
    }
    return out;
}

namespace {

/// Scalar probe sum(out * R) with fixed random R so every output entry matters.
Tensor probe(const Tensor& out, std::uint64_t seed) {
    RngState rng{seed, 99};
    return sum(mul(out, Tensor::randn(out.shape(), rng, 1.0)));
}

std::vector<Tensor> store_tensors(const ParameterStore& store) {
    std::vector<Tensor> out;
    for (const auto& [name, t] : store) out.push_back(t);
    return out;
}

}  // namespace

GradSuiteReport run_gradient_suite(std::uint64_t seed, double tolerance) {
    GradSuiteReport report;
    report.tolerance = tolerance;
    auto record = [&](const std::string& name, const std::function<Tensor()>& f, const std::vector<Tensor>& params) {
        GradSuiteEntry e{name, finite_difference_check(f, params), false};
        e.passed = e.result.max_rel_error < tolerance;
        report.entries.push_back(e);
    };
    RngState rng{seed, 0};

    {
        Tensor x = Tensor::randn({3, 5}, rng, 1.0);
        Tensor w = Tensor::randn({5, 4}, rng, 0.5);
        Tensor b = Tensor::randn({4}, rng, 0.5);
        record("linear", [=] { return probe(linear(x, w, b), seed); }, {x, w, b});
    }
    {
        Tensor x = Tensor::randn({3, 6}, rng, 1.0);
        Tensor g = Tensor::randn({6}, rng, 1.0);
        Tensor b = Tensor::randn({6}, rng, 1.0);
        record("layer_norm", [=] { return probe(layer_norm(x, g, b, 1e-6), seed); }, {x, g, b});
    }
    {
        Tensor x = Tensor::randn({3, 5}, rng, 1.0);
        record("softmax", [=] { return probe(softmax(x), seed); }, {x});
    }
    {
        Tensor x = Tensor::randn({4, 5}, rng, 1.5);
        record("gelu", [=] { return probe(gelu(x), seed); }, {x});
    }
    {
        Tensor x = Tensor::randn({4, 5}, rng, 1.0);
        record("dropout", [=] {
            RngState r{seed, 5};
            return probe(dropout(x, 0.3, true, r), seed);
        }, {x});
    }
    {
        ParameterStore store;
        AttentionParams p = AttentionParams::create(store, "attn", 6, 5, 1, rng);
        Tensor q = Tensor::randn({3, 6}, rng, 1.0);
        Tensor c = Tensor::randn({4, 5}, rng, 1.0);
        const std::vector<bool> mask{true, false, true, true};
        auto params = store_tensors(store);
        params.push_back(q);
        params.push_back(c);
        record("softmax_attention", [=] {
            ForwardContext ctx;
            return probe(multi_head_attention(q, c, p, &mask, 0.0, ctx), seed);
        }, params);
    }
    {
        ParameterStore store;
        AttentionParams p = AttentionParams::create(store, "msa", 8, 8, 2, rng);
        Tensor z = Tensor::randn({6, 8}, rng, 1.0);
        const std::vector<bool> mask{true, true, true, true, false, false};
        auto params = store_tensors(store);
        params.push_back(z);
        record("msa", [=] {
            ForwardContext ctx;
            return probe(msa(z, p, mask, 0.0, ctx), seed);
        }, params);
    }
    {
        ParameterStore store;
        AttentionParams p = AttentionParams::create(store, "mca", 8, 6, 2, rng);
        Tensor q = Tensor::randn({4, 8}, rng, 1.0);
        Tensor v = Tensor::randn({5, 6}, rng, 1.0);
        auto params = store_tensors(store);
        params.push_back(q);
        params.push_back(v);
        record("mca", [=] {
            ForwardContext ctx;
            return probe(mca(q, VisualTokens{v}, p, 0.0, ctx), seed);
        }, params);
    }
    {
        ParameterStore store;
        MlpParams p = MlpParams::create(store, "ffn", 6, 12, rng);
        Tensor x = Tensor::randn({3, 6}, rng, 1.0);
        auto params = store_tensors(store);
        params.push_back(x);
        record("ffn", [=] { return probe(p(x), seed); }, params);
    }
    {
        Tensor q = Tensor::randn({4, 6}, rng, 1.0);
        Tensor w = Tensor::randn({6, 3}, rng, 0.5);
        Tensor b = Tensor::randn({3}, rng, 0.5);
        record("classifier", [=] { return probe(classifier_logits(q, w, b), seed); }, {q, w, b});
    }
    {
        std::vector<Tensor> frames;
        for (int i = 0; i < 3; ++i) frames.push_back(Tensor::randn({5, 4}, rng, 1.0));
        record("temporal_pool", [=] { return probe(order_free_mean(frames), seed); }, frames);
    }
    {
        Tensor z = Tensor::randn({2, 5}, rng, 1.5);
        Tensor t({2, 5}, {1, 0, 0, 1, 1, 0, 1, 0, 0, 0});
        record("bce_with_logits", [=] { return bce_with_logits(z, t); }, {z});
    }
    {
        Tensor z = Tensor::randn({3, 5}, rng, 1.5);
        const std::vector<std::size_t> labels{4, 0, 2};
        record("cross_entropy", [=] { return cross_entropy(z, labels); }, {z});
    }
    for (TaskKind task : {TaskKind::multi_label, TaskKind::single_label}) {
        ModelConfig cfg;
        cfg.vision = VisionConfig{8, 8, 3, 4, 8, 1, 2, 0.0};
        cfg.qformer.num_queries = 4;
        cfg.qformer.dim = 8;
        cfg.qformer.layers = 2;
        cfg.qformer.heads = 2;
        cfg.qformer.attn_dropout = 0.0;
        cfg.qformer.num_classes = 3;
        cfg.qformer.task = task;
        cfg.vocab_size = 12;
        cfg.text_len = 8;
        cfg.seed = seed;
        auto model = std::make_shared<EmotionModel>(cfg);
        // Break the zero initialisation of biases and norms so no gradient is trivially symmetric.
        RngState jitter{seed, 11};
        for (const auto& [name, t] : model->params()) {
            for (double& v : Tensor(t).mutable_data()) v += 0.1 * jitter.normal();
        }
        ModelInput in;
        in.frames = {Tensor::randn({8, 8, 3}, rng, 0.5)};
        in.text.ids = {3, 7, 2, 9, 4, 1, 0, 0};
        in.text.mask = {true, true, true, true, true, true, false, false};
        LabelBatch labels;
        if (task == TaskKind::multi_label) {
            labels.targets = {{1.0, 0.0, 1.0}};
        } else {
            labels.classes = {2};
        }
        record(task == TaskKind::multi_label ? "end_to_end_multi" : "end_to_end_single", [=] {
            ForwardContext ctx;
            Tensor z = model->logits(in, ctx);
            return compute_loss(reshape(z, {1, z.numel()}), labels, task);
        }, store_tensors(model->params()));
    }
    return report;
}

}  // namespace emoq
