#include "emoq/gradcheck.hpp"
#include "emoq/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace emoq;

namespace {

Tensor probe(const Tensor& out, std::uint64_t seed = 3) {
    RngState rng{seed, 1};
    return sum(mul(out, Tensor::randn(out.shape(), rng, 1.0)));
}

}  // namespace

TEST(Rng, SameSeedSameStream) {
    RngState a{42, 0}, b{42, 0};
    for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
    RngState c{43, 0};
    EXPECT_NE(RngState({42, 0}).next_u64(), c.next_u64());
}

TEST(Rng, UniformRangeAndBelow) {
    RngState r{1, 0};
    for (int i = 0; i < 1000; ++i) {
        const double u = r.uniform();
        EXPECT_GE(u, 0.0);
        EXPECT_LT(u, 1.0);
        EXPECT_LT(r.below(7), 7u);
    }
}

TEST(Rng, DerivedStreamsDoNotOverlap) {
    RngState a = derive_rng(5, 0);
    RngState b = derive_rng(5, 1);
    std::vector<std::uint64_t> xs, ys;
    for (int i = 0; i < 64; ++i) {
        xs.push_back(a.next_u64());
        ys.push_back(b.next_u64());
    }
    for (auto x : xs) EXPECT_EQ(std::find(ys.begin(), ys.end(), x), ys.end());
}

TEST(Tensor, CopiesShareStorageCloneDoesNot) {
    Tensor a({2}, {1, 2});
    Tensor b = a;
    Tensor c = a.clone();
    b.mutable_data()[0] = 9;
    EXPECT_EQ(a.at(0), 9);
    EXPECT_EQ(c.at(0), 1);
}

TEST(Tensor, ConstructorRejectsWrongSize) {
    EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Ops, MatmulHandCase) {
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 2}, {5, 6, 7, 8});
    Tensor c = matmul(a, b);
    EXPECT_EQ(std::vector<double>(c.data().begin(), c.data().end()), (std::vector<double>{19, 22, 43, 50}));
    EXPECT_THROW(matmul(a, Tensor::zeros({3, 2})), DimensionError);
}

TEST(Ops, SoftmaxRowsSumToOneForLargeInputs) {
    RngState rng{9, 0};
    Tensor x = Tensor::randn({20, 7}, rng, 400.0);
    for (double& v : x.mutable_data()) v = std::clamp(v, -1e3, 1e3);
    Tensor y = softmax(x);
    for (std::size_t r = 0; r < 20; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 7; ++c) s += y.at(r * 7 + c);
        EXPECT_NEAR(s, 1.0, 1e-9);
    }
}

TEST(Ops, LayerNormNormalizesRows) {
    Tensor x({1, 4}, {1, 2, 3, 4});
    Tensor y = layer_norm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}), 1e-12);
    const double sd = std::sqrt(1.25);
    EXPECT_NEAR(y.at(0), -1.5 / sd, 1e-10);
    EXPECT_NEAR(y.at(3), 1.5 / sd, 1e-10);
}

TEST(Ops, DropoutModes) {
    RngState rng{1, 0};
    Tensor x = Tensor::full({3, 3}, 2.0);
    Tensor e = dropout(x, 0.5, false, rng);
    EXPECT_EQ(std::vector<double>(e.data().begin(), e.data().end()), std::vector<double>(9, 2.0));
    Tensor z = dropout(x, 1.0, true, rng);
    for (double v : z.data()) EXPECT_EQ(v, 0.0);
    Tensor h = dropout(Tensor::full({1000}, 1.0), 0.25, true, rng);
    for (double v : h.data()) EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-12);
}

TEST(Ops, GeluMatchesErfForm) {
    Tensor x({3}, {-1.0, 0.0, 2.0});
    Tensor y = gelu(x);
    for (std::size_t i = 0; i < 3; ++i) {
        const double v = x.at(i);
        EXPECT_NEAR(y.at(i), 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))), 1e-15);
    }
}

TEST(Ops, MaskKeysZeroesSoftmaxWeight) {
    Tensor s({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor p = softmax(mask_keys(s, {true, false, true}));
    EXPECT_EQ(p.at(1), 0.0);
    EXPECT_EQ(p.at(4), 0.0);
}

TEST(Ops, EmbeddingRejectsBadId) {
    Tensor table = Tensor::zeros({4, 2});
    EXPECT_THROW(embedding({0, 4}, table), std::out_of_range);
}

TEST(Ops, OrderFreeMeanIsPermutationInvariant) {
    RngState rng{4, 0};
    std::vector<Tensor> parts;
    for (int i = 0; i < 5; ++i) parts.push_back(Tensor::randn({3, 4}, rng, 1.0));
    Tensor a = order_free_mean(parts);
    std::reverse(parts.begin(), parts.end());
    std::swap(parts[0], parts[2]);
    Tensor b = order_free_mean(parts);
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a.at(i), b.at(i));
}

TEST(Ops, CrossEntropyHandCase) {
    Tensor z({1, 2}, {0.0, 0.0});
    EXPECT_NEAR(cross_entropy(z, {1}).item(), std::log(2.0), 1e-15);
}

TEST(Ops, BceHandCase) {
    Tensor z({1, 2}, {0.0, 0.0});
    Tensor t({1, 2}, {1.0, 0.0});
    EXPECT_NEAR(bce_with_logits(z, t).item(), std::log(2.0), 1e-15);
}

TEST(Autograd, NoGradGuardStopsRecording) {
    Tensor w = Tensor::full({2}, 1.0, true);
    NoGradGuard guard;
    Tensor y = sum(w);
    EXPECT_FALSE(y.requires_grad());
}

TEST(GradCheck, SquareAtThree) {
    Tensor x({1}, {3.0});
    GradCheckResult r = finite_difference_check([&] { return sum(mul(x, x)); }, {x});
    EXPECT_NEAR(r.worst_analytic, 6.0, 1e-12);
    EXPECT_NEAR(r.worst_numeric, 6.0, 1e-6);
}

TEST(GradCheck, ConstantHasZeroGradient) {
    Tensor x({3}, {1, 2, 3});
    GradCheckResult r = finite_difference_check([&] { return Tensor::scalar(5.0); }, {x});
    EXPECT_EQ(r.max_rel_error, 0.0);
    EXPECT_EQ(r.worst_analytic, 0.0);
    EXPECT_EQ(r.worst_numeric, 0.0);
}

TEST(GradCheck, LinearSoftmaxCrossEntropyComposite) {
    RngState rng{21, 0};
    Tensor x = Tensor::randn({4, 6}, rng, 1.0);
    Tensor w = Tensor::randn({6, 5}, rng, 0.5);
    Tensor b = Tensor::randn({5}, rng, 0.5);
    auto f = [&] { return cross_entropy(linear(x, w, b), {0, 3, 4, 1}); };
    EXPECT_LT(finite_difference_check(f, {x, w, b}).max_rel_error, 1e-4);
}

TEST(GradCheck, NonFiniteFunctionIsOracleError) {
    Tensor x({1}, {1.0});
    EXPECT_THROW(finite_difference_check([&] { return Tensor::scalar(std::nan("")); }, {x}), OracleError);
}

TEST(GradCheck, EveryOpPasses) {
    RngState rng{33, 0};
    Tensor a = Tensor::randn({3, 4}, rng, 1.0);
    Tensor b = Tensor::randn({3, 4}, rng, 1.0);
    Tensor c = Tensor::randn({4, 2}, rng, 1.0);
    const std::vector<std::pair<const char*, std::function<Tensor()>>> cases{
        {"matmul", [&] { return probe(matmul(a, c)); }},
        {"transpose", [&] { return probe(transpose(a)); }},
        {"add", [&] { return probe(add(a, b)); }},
        {"sub", [&] { return probe(sub(a, b)); }},
        {"mul", [&] { return probe(mul(a, b)); }},
        {"scale", [&] { return probe(scale(a, -1.7)); }},
        {"sigmoid", [&] { return probe(sigmoid(a)); }},
        {"softmax_axis0", [&] { return probe(softmax(a, 0)); }},
        {"concat_rows", [&] { return probe(concat_rows({a, b})); }},
        {"concat_cols", [&] { return probe(concat_cols({a, b})); }},
        {"slice_rows", [&] { return probe(slice_rows(a, 1, 2)); }},
        {"slice_cols", [&] { return probe(slice_cols(a, 1, 2)); }},
        {"mean_rows", [&] { return probe(mean_rows(a)); }},
        {"reshape", [&] { return probe(reshape(a, {2, 6})); }},
    };
    for (const auto& [name, f] : cases) {
        EXPECT_LT(finite_difference_check(f, {a, b, c}).max_rel_error, 1e-4) << name;
    }
    Tensor table = Tensor::randn({5, 3}, rng, 1.0);
    EXPECT_LT(finite_difference_check([&] { return probe(embedding({4, 1, 4}, table)); }, {table}).max_rel_error,
              1e-4);
}

TEST(GradCheck, InjectedFaultIsDetected) {
    RngState rng{2, 0};
    Tensor x = Tensor::randn({2, 3}, rng, 1.0);
    Tensor g = Tensor::randn({3}, rng, 1.0);
    Tensor bt = Tensor::randn({3}, rng, 1.0);
    auto f = [&] { return probe(layer_norm(x, g, bt)); };
    emoq::testing::inject_backward_fault("layer_norm", 1.01);
    const double broken = finite_difference_check(f, {x, g, bt}).max_rel_error;
    emoq::testing::clear_backward_fault();
    EXPECT_GT(broken, 1e-4);
    EXPECT_LT(finite_difference_check(f, {x, g, bt}).max_rel_error, 1e-4);
}
