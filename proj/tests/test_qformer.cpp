#include "emoq/model.hpp"
#include "emoq/qformer.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace emoq;

namespace {

QFormerConfig small_qformer(std::size_t layers = 2) {
    QFormerConfig c;
    c.num_queries = 3;
    c.dim = 8;
    c.layers = layers;
    c.heads = 2;
    c.attn_dropout = 0.0;
    c.num_classes = 4;
    return c;
}

}  // namespace

TEST(QFormerConfig, RejectsOddLayers) {
    QFormerConfig c = small_qformer(3);
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ConcatSequence, LengthIsQueriesPlusText) {
    Tensor q = Tensor::zeros({3, 8});
    EXPECT_EQ(concat_sequence(q, Tensor::zeros({5, 8})).shape(), (Shape{8, 8}));
    EXPECT_EQ(concat_sequence(q, Tensor::zeros({0, 8})).shape(), (Shape{3, 8}));
    EXPECT_THROW(concat_sequence(q, Tensor::zeros({5, 7})), DimensionError);
}

TEST(QFormer, OutputIsQueriesByDim) {
    ParameterStore store;
    RngState rng{1, 0};
    QFormer qf(small_qformer(4), 6, store, rng);
    RngState data{2, 0};
    ForwardContext ctx;
    QFormerOutput out = qf.forward(Tensor::randn({5, 8}, data, 1.0), {true, true, true, false, false},
                                   VisualTokens{Tensor::randn({7, 6}, data, 1.0)}, ctx);
    EXPECT_EQ(out.queries.shape(), (Shape{3, 8}));
    EXPECT_EQ(out.cross_attention_calls, 2u);
}

TEST(QFormer, HandlesEmptyText) {
    ParameterStore store;
    RngState rng{1, 0};
    QFormer qf(small_qformer(), 6, store, rng);
    RngState data{2, 0};
    ForwardContext ctx;
    QFormerOutput out = qf.forward(Tensor::zeros({0, 8}), {}, VisualTokens{Tensor::randn({4, 6}, data, 1.0)}, ctx);
    EXPECT_EQ(out.queries.shape(), (Shape{3, 8}));
}

TEST(QFormer, RejectsMismatchedVisualWidth) {
    ParameterStore store;
    RngState rng{1, 0};
    QFormer qf(small_qformer(), 6, store, rng);
    ForwardContext ctx;
    EXPECT_THROW(qf.forward(Tensor::zeros({2, 8}), {true, true}, VisualTokens{Tensor::zeros({4, 5})}, ctx),
                 DimensionError);
}

TEST(QFormer, PaddingPositionsAreInvisible) {
    ParameterStore store;
    RngState rng{1, 0};
    QFormer qf(small_qformer(4), 6, store, rng);
    RngState data{2, 0};
    Tensor text = Tensor::randn({6, 8}, data, 1.0);
    VisualTokens vis{Tensor::randn({4, 6}, data, 1.0)};
    const std::vector<bool> mask{true, true, true, false, false, false};
    ForwardContext ctx;
    Tensor a = qf.forward(text, mask, vis, ctx).queries;
    Tensor text2 = text.clone();
    for (std::size_t i = 3 * 8; i < text2.numel(); ++i) text2.mutable_data()[i] += 100.0 * (1 + i % 3);
    Tensor b = qf.forward(text2, mask, vis, ctx).queries;
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.at(i), b.at(i));
}

TEST(Classifier, ActivationsPerTask) {
    Tensor q({2, 2}, {1, 0, 0, 1});
    Tensor w({2, 3}, {1, 0, -1, 0, 1, 2});
    Tensor b = Tensor::zeros({3});
    Tensor z = classifier_logits(q, w, b);
    EXPECT_EQ(z.shape(), (Shape{3}));
    EXPECT_DOUBLE_EQ(z.at(0), 0.5);
    EXPECT_DOUBLE_EQ(z.at(2), 0.5);
    Tensor s = classify(q, w, b, TaskKind::single_label);
    EXPECT_NEAR(s.at(0) + s.at(1) + s.at(2), 1.0, 1e-12);
    Tensor m = classify(q, w, b, TaskKind::multi_label);
    EXPECT_DOUBLE_EQ(m.at(0), 1.0 / (1.0 + std::exp(-0.5)));
}

TEST(EmotionModel, GroupsCoverEveryParameter) {
    ModelConfig c;
    c.vision = VisionConfig{8, 8, 3, 4, 8, 1, 2, 0.0};
    c.qformer = small_qformer();
    c.vocab_size = 10;
    c.text_len = 4;
    EmotionModel m(c);
    std::size_t classifier = 0;
    for (const auto& [name, t] : m.params()) {
        const ParamGroupKind g = EmotionModel::group_of(name);
        if (g == ParamGroupKind::classifier) ++classifier;
    }
    EXPECT_EQ(classifier, 2u);
    EXPECT_EQ(EmotionModel::group_of("text.embed"), ParamGroupKind::backbone);
    EXPECT_THROW(EmotionModel::group_of("other.w"), std::invalid_argument);
}

TEST(EmotionModel, CheckpointRestoresPredictions) {
    ModelConfig c;
    c.vision = VisionConfig{8, 8, 3, 4, 8, 1, 2, 0.0};
    c.qformer = small_qformer();
    c.vocab_size = 10;
    c.text_len = 4;
    c.seed = 3;
    EmotionModel m(c);
    ModelInput in;
    RngState data{4, 0};
    in.frames = {Tensor::randn({8, 8, 3}, data, 0.5)};
    in.text = TokenizedText{{2, 3, 0, 0}, {true, true, false, false}};
    auto restored = EmotionModel::from_checkpoint(decode_checkpoint(encode_checkpoint(m.to_checkpoint())));
    Tensor a = m.predict(in), b = restored->predict(in);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.at(i), b.at(i));
}
