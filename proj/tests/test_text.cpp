#include "emoq/text.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace emoq;

TEST(SplitWords, LowercasesAndSeparatesPunctuation) {
    EXPECT_EQ(split_words("The person's face, clearly HAPPY!"),
              (std::vector<std::string>{"the", "person's", "face", ",", "clearly", "happy", "!"}));
    EXPECT_TRUE(split_words("   ").empty());
}

TEST(Vocab, ReservedIdsAndFrequencyOrder) {
    Vocab v = build_vocab({"b a a", "c b a"});
    EXPECT_EQ(v.token(Vocab::kPad), "<pad>");
    EXPECT_EQ(v.token(Vocab::kUnk), "<unk>");
    EXPECT_EQ(v.tokens(), (std::vector<std::string>{"<pad>", "<unk>", "a", "b", "c"}));
    EXPECT_EQ(v.id("zzz"), Vocab::kUnk);
}

TEST(Vocab, MinFrequencyAndEmptyCorpus) {
    Vocab v = build_vocab({"x y y"}, 2);
    EXPECT_EQ(v.size(), 3u);
    EXPECT_THROW(build_vocab({}), std::invalid_argument);
}

TEST(Vocab, FileRoundTrip) {
    const auto path = std::filesystem::path(EMOQ_TEST_TMP) / "text" / "vocab.txt";
    std::filesystem::create_directories(path.parent_path());
    Vocab v = build_vocab({"joy and calm"});
    v.save(path);
    EXPECT_EQ(Vocab::load(path), v);
}

TEST(Tokenize, PadsAndTruncates) {
    Vocab v = build_vocab({"a b c"});
    TokenizedText t = tokenize("a b", v, 4);
    EXPECT_EQ(t.ids.size(), 4u);
    EXPECT_EQ(t.mask, (std::vector<bool>{true, true, false, false}));
    EXPECT_EQ(t.ids[2], Vocab::kPad);
    TokenizedText u = tokenize("a b c a b", v, 3);
    EXPECT_EQ(u.mask, (std::vector<bool>{true, true, true}));
    TokenizedText e = tokenize("", v, 2);
    EXPECT_EQ(e.mask, (std::vector<bool>{false, false}));
}

TEST(EmbedTokens, BatchShape) {
    Vocab v = build_vocab({"a b c"});
    TextBatch b = tokenize_batch({"a", "b c"}, v, 5);
    Tensor table = Tensor::zeros({v.size(), 3});
    EXPECT_EQ(embed_tokens(b, table).shape(), (Shape{2, 5, 3}));
}

TEST(TextEncoder, AddsPositions) {
    ParameterStore store;
    RngState rng{1, 0};
    TextEncoder enc(6, 4, 3, store, rng);
    TokenizedText t{{2, 2, 0, 0}, {true, true, false, false}};
    Tensor e = enc.embed(t);
    ASSERT_EQ(e.shape(), (Shape{4, 3}));
    bool differs = false;
    for (std::size_t c = 0; c < 3; ++c) differs = differs || e.at(c) != e.at(3 + c);
    EXPECT_TRUE(differs);
    EXPECT_THROW(enc.embed(TokenizedText{{1, 1, 1, 1, 1}, std::vector<bool>(5, true)}), DimensionError);
}
