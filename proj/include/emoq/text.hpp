#pragma once

#include "emoq/layers.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace emoq {

/// Word-level vocabulary. Ids are dense; PAD is 0 and UNK is 1.
class Vocab {
public:
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kUnk = 1;
    static constexpr std::string_view kPadToken = "<pad>";
    static constexpr std::string_view kUnkToken = "<unk>";

    Vocab();
    /// Tokens in id order; the first two must be the PAD and UNK markers.
    explicit Vocab(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    std::size_t id(const std::string& token) const;
    const std::string& token(std::size_t id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

    /// Newline-delimited tokens in id order.
    void save(const std::filesystem::path& path) const;
    static Vocab load(const std::filesystem::path& path);

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Lowercases ASCII letters and splits into runs of word characters (ASCII
/// alphanumerics, apostrophes inside words, and any non-ASCII byte); every
/// other non-space character becomes its own token.
std::vector<std::string> split_words(std::string_view text);

/// Keeps words seen at least `min_freq` times, ordered by (count desc, word asc).
Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq = 1);

struct TokenizedText {
    std::vector<std::size_t> ids;
    std::vector<bool> mask;  // true = real token
};

/// Truncates to `length` tokens and right-pads with PAD.
TokenizedText tokenize(std::string_view text, const Vocab& vocab, std::size_t length);

struct TextBatch {
    std::vector<TokenizedText> rows;
    std::size_t length() const { return rows.empty() ? 0 : rows[0].ids.size(); }
};

TextBatch tokenize_batch(const std::vector<std::string>& texts, const Vocab& vocab, std::size_t length);

/// Row lookup into `table` [|V|, d] for every id: returns [B, L, d].
Tensor embed_tokens(const TextBatch& batch, const Tensor& table);

/// Token embedding plus learned position embedding.
class TextEncoder {
public:
    TextEncoder(std::size_t vocab_size, std::size_t max_len, std::size_t dim, ParameterStore& store, RngState& rng);

    /// [L, d] embeddings for one tokenized description.
    Tensor embed(const TokenizedText& text) const;
    std::size_t max_len() const { return position_.dim(0); }
    std::size_t vocab_size() const { return table_.dim(0); }
    const Tensor& table() const { return table_; }

private:
    Tensor table_;
    Tensor position_;
};

}  // namespace emoq
