#include "emoq/params.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace emoq;

TEST(ParameterStore, AddMarksTrainableAndRejectsDuplicates) {
    ParameterStore s;
    Tensor w = s.add("a.weight", Tensor::zeros({2, 2}));
    EXPECT_TRUE(w.requires_grad());
    EXPECT_THROW(s.add("a.weight", Tensor::zeros({1})), std::invalid_argument);
    EXPECT_EQ(s.total_elements(), 4u);
}

TEST(ParameterStore, SnapshotIsDeep) {
    ParameterStore s;
    Tensor w = s.add("w", Tensor::full({2}, 1.0));
    auto snap = s.snapshot();
    w.mutable_data()[0] = 5;
    EXPECT_EQ(snap.at("w").at(0), 1.0);
    s.assign_from(snap);
    EXPECT_EQ(w.at(0), 1.0);
}

TEST(ParameterStore, AssignRejectsShapeMismatch) {
    ParameterStore s;
    s.add("w", Tensor::zeros({2}));
    EXPECT_THROW(s.assign_from({{"w", Tensor::zeros({3})}}), std::exception);
}

TEST(Checkpoint, RoundTripIsExact) {
    Checkpoint c;
    c.manifest["model"] = {{"dim", 4}};
    c.tensors["a"] = Tensor({2, 3}, {1, -2, 3.5, 1e-300, -0.0, 7});
    c.tensors["b"] = Tensor::scalar(3.25);
    const std::string bytes = encode_checkpoint(c);
    EXPECT_EQ(bytes.substr(0, 8), "EMOQCKPT");
    Checkpoint d = decode_checkpoint(bytes);
    EXPECT_EQ(d.manifest, c.manifest);
    ASSERT_EQ(d.tensors.size(), 2u);
    EXPECT_EQ(d.tensors.at("a").shape(), (Shape{2, 3}));
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(d.tensors.at("a").at(i), c.tensors.at("a").at(i));
    EXPECT_EQ(encode_checkpoint(d), bytes);
}

TEST(Checkpoint, RejectsCorruptBytes) {
    EXPECT_THROW(decode_checkpoint("NOTACKPT"), std::runtime_error);
    Checkpoint c;
    c.tensors["a"] = Tensor::zeros({4});
    std::string bytes = encode_checkpoint(c);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), std::runtime_error);
}

TEST(Checkpoint, FileRoundTrip) {
    const auto path = std::filesystem::path(EMOQ_TEST_TMP) / "params" / "c.ckpt";
    Checkpoint c;
    c.tensors["x"] = Tensor({1}, {0.1});
    save_checkpoint(path, c);
    EXPECT_EQ(load_checkpoint(path).tensors.at("x").at(0), 0.1);
}
