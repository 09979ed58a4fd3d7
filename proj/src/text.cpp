#include "emoq/text.hpp"

#include <algorithm>
#include <fstream>
#include <map>

namespace emoq {

namespace {

bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

Vocab::Vocab() : Vocab(std::vector<std::string>{std::string(kPadToken), std::string(kUnkToken)}) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 2 || tokens_[kPad] != kPadToken || tokens_[kUnk] != kUnkToken) {
        throw std::invalid_argument("vocab must start with <pad> and <unk>");
    }
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (!index_.emplace(tokens_[i], i).second) {
            throw std::invalid_argument("vocab: duplicate token '" + tokens_[i] + "'");
        }
    }
}

std::size_t Vocab::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write vocab " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read vocab " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    return Vocab(std::move(tokens));
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) words.push_back(std::move(cur));
        cur.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (is_word_byte(c)) {
            cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
        } else if (c == '\'' && !cur.empty() && i + 1 < text.size() &&
                   is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
            cur.push_back('\'');
        } else {
            flush();
            if (!is_space(c)) words.emplace_back(1, static_cast<char>(c));
        }
    }
    flush();
    return words;
}

Vocab build_vocab(const std::vector<std::string>& corpus, std::size_t min_freq) {
    if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& doc : corpus) {
        for (auto& w : split_words(doc)) ++counts[std::move(w)];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [w, n] : counts) {
        if (n >= min_freq && w != Vocab::kPadToken && w != Vocab::kUnkToken) kept.emplace_back(w, n);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> tokens{std::string(Vocab::kPadToken), std::string(Vocab::kUnkToken)};
    for (auto& [w, _] : kept) tokens.push_back(w);
    return Vocab(std::move(tokens));
}

TokenizedText tokenize(std::string_view text, const Vocab& vocab, std::size_t length) {
    if (length == 0) throw std::invalid_argument("tokenize: length must be at least 1");
    TokenizedText out{std::vector<std::size_t>(length, Vocab::kPad), std::vector<bool>(length, false)};
    const auto words = split_words(text);
    const std::size_t n = std::min(words.size(), length);
    for (std::size_t i = 0; i < n; ++i) {
        out.ids[i] = vocab.id(words[i]);
        out.mask[i] = true;
    }
    return out;
}

TextBatch tokenize_batch(const std::vector<std::string>& texts, const Vocab& vocab, std::size_t length) {
    TextBatch batch;
    batch.rows.reserve(texts.size());
    for (const auto& t : texts) batch.rows.push_back(tokenize(t, vocab, length));
    return batch;
}

Tensor embed_tokens(const TextBatch& batch, const Tensor& table) {
    if (table.rank() != 2) throw DimensionError("embed_tokens: table must be [|V|, d]");
    std::vector<std::size_t> flat;
    for (const auto& row : batch.rows) flat.insert(flat.end(), row.ids.begin(), row.ids.end());
    Tensor rows = embedding(flat, table);
    return reshape(rows, {batch.rows.size(), batch.length(), table.dim(1)});
}

TextEncoder::TextEncoder(std::size_t vocab_size, std::size_t max_len, std::size_t dim, ParameterStore& store,
                         RngState& rng) {
    if (vocab_size < 2 || max_len == 0 || dim == 0) throw ConfigError("text encoder: degenerate sizes");
    table_ = store.add("text.embed", Tensor::randn({vocab_size, dim}, rng, 0.02));
    position_ = store.add("text.position", Tensor::randn({max_len, dim}, rng, 0.02));
}

Tensor TextEncoder::embed(const TokenizedText& text) const {
    if (text.ids.size() > max_len()) {
        throw DimensionError("text encoder: " + std::to_string(text.ids.size()) + " tokens exceed max length " +
                             std::to_string(max_len()));
    }
    Tensor tokens = embedding(text.ids, table_);
    Tensor pos = text.ids.size() == max_len() ? position_ : slice_rows(position_, 0, text.ids.size());
    return add(tokens, pos);
}

}  // namespace emoq
