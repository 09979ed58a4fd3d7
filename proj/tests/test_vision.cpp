#include "emoq/vision.hpp"

#include <gtest/gtest.h>

using namespace emoq;

namespace {

VisionConfig small_config() { return VisionConfig{8, 12, 3, 4, 8, 1, 2, 0.0}; }

}  // namespace

TEST(Patchify, OrderMatchesIndexOracle) {
    const std::size_t H = 8, W = 12, C = 3, P = 4;
    std::vector<double> px(H * W * C);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(i);
    Tensor img({H, W, C}, px);
    Tensor p = patchify(img, P);
    ASSERT_EQ(p.shape(), (Shape{(H / P) * (W / P), P * P * C}));
    // Patch (row 1, col 2), pixel (y 3, x 1), channel 2.
    const std::size_t patch = 1 * (W / P) + 2, inner = (3 * P + 1) * C + 2;
    EXPECT_EQ(p.at(patch * P * P * C + inner), static_cast<double>(((1 * P + 3) * W + 2 * P + 1) * C + 2));
}

TEST(Patchify, RejectsIndivisibleImage) {
    EXPECT_THROW(patchify(Tensor::zeros({10, 8, 3}), 4), ConfigError);
    EXPECT_THROW(patchify(Tensor::zeros({8, 8}), 4), DimensionError);
}

TEST(VisionConfig, ValidationNamesProblem) {
    VisionConfig c = small_config();
    c.height = 9;
    EXPECT_THROW(c.validate(), ConfigError);
    c = small_config();
    c.heads = 3;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(VisionEncoder, TokenCountIncludesClassToken) {
    ParameterStore store;
    RngState rng{1, 0};
    VisionEncoder enc(small_config(), store, rng);
    ForwardContext ctx;
    VisualTokens t = enc.encode(Tensor::zeros({8, 12, 3}), ctx);
    EXPECT_EQ(t.tokens.shape(), (Shape{(8 / 4) * (12 / 4) + 1, 8}));
    EXPECT_THROW(enc.encode(Tensor::zeros({8, 8, 3}), ctx), DimensionError);
}

TEST(VisionEncoder, SingleFrameVideoEqualsImage) {
    ParameterStore store;
    RngState rng{2, 0};
    VisionEncoder enc(small_config(), store, rng);
    RngState data{3, 0};
    Tensor img = Tensor::randn({8, 12, 3}, data, 1.0);
    ForwardContext ctx;
    VisualTokens a = enc.encode(img, ctx);
    VisualTokens b = enc.encode_video({img}, ctx);
    for (std::size_t i = 0; i < a.tokens.numel(); ++i) EXPECT_EQ(a.tokens.at(i), b.tokens.at(i));
}

TEST(TemporalPool, TwoFrameMeanIsExact) {
    Tensor a({1, 3}, {1.0, 0.5, -3.0});
    Tensor b({1, 3}, {3.0, 0.25, 5.0});
    VisualTokens m = temporal_pool({VisualTokens{a}, VisualTokens{b}});
    EXPECT_EQ(m.tokens.at(0), 2.0);
    EXPECT_EQ(m.tokens.at(1), 0.375);
    EXPECT_EQ(m.tokens.at(2), 1.0);
}

TEST(TemporalPool, IdenticalFramesAreIdempotent) {
    RngState rng{5, 0};
    Tensor a = Tensor::randn({4, 3}, rng, 1.0);
    VisualTokens m = temporal_pool(std::vector<VisualTokens>(8, VisualTokens{a}));
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(m.tokens.at(i), a.at(i));
}

TEST(TemporalPool, EmptyIsError) { EXPECT_THROW(temporal_pool({}), std::invalid_argument); }

TEST(VisionEncoder, DropoutOnlyInTraining) {
    VisionConfig c = small_config();
    c.attn_dropout = 0.5;
    ParameterStore store;
    RngState rng{2, 0};
    VisionEncoder enc(c, store, rng);
    RngState data{3, 0};
    Tensor img = Tensor::randn({8, 12, 3}, data, 1.0);
    ForwardContext e1, e2;
    EXPECT_EQ(enc.encode(img, e1).tokens.at(5), enc.encode(img, e2).tokens.at(5));
    ForwardContext t1{Mode::train, RngState{1, 0}}, t2{Mode::train, RngState{2, 0}};
    const Tensor a = enc.encode(img, t1).tokens, b = enc.encode(img, t2).tokens;
    bool differs = false;
    for (std::size_t i = 0; i < a.numel(); ++i) differs = differs || a.at(i) != b.at(i);
    EXPECT_TRUE(differs);
}
