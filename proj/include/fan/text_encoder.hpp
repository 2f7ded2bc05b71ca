#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "fan/nn.hpp"
#include "fan/tensor.hpp"

namespace fan {

// Closed vocabulary with reserved control tokens at fixed ids. Persisted as a
// plain-text file, one token per line, line number = id.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kSos = 2;
    static constexpr int kEos = 3;

    // Builds [PAD]/[UNK]/[SOS]/[EOS] followed by the given words.
    static Vocabulary from_words(const std::vector<std::string>& words);
    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    int id_of(const std::string& token) const;  // kUnk when absent
    bool contains(const std::string& token) const { return index_.count(token) > 0; }
    const std::string& token(int id) const;
    int size() const { return static_cast<int>(tokens_.size()); }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

// Fixed-length token buffer: [SOS] content... [EOS] [PAD]...
struct TokenSequence {
    std::vector<int> ids;
    int true_length = 0;

    int max_len() const { return static_cast<int>(ids.size()); }
    int eos_position() const { return true_length - 1; }
    // True at PAD positions.
    std::vector<bool> padding_mask() const;
    void validate(int vocab_size) const;
};

// Lowercased whitespace tokenization with truncation to max_len - 2 words;
// unknown words map to [UNK]. Empty text yields [SOS][EOS] + padding.
TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_len);

// Word embeddings, sentence embedding (the [EOS] hidden state), and the
// padding mask for one encoded expression.
struct TextFeatures {
    Tensor f_w;  // [max_len x C_t]
    Tensor f_s;  // [1 x C_t]
    std::vector<bool> padding_mask;
};

// Small transformer encoder over token embeddings plus fixed sinusoidal
// positions. The sentence embedding is the final hidden state at [EOS].
class TextEncoder {
public:
    TextEncoder() = default;
    TextEncoder(int vocab_size, int max_len, int dim, int layers, int heads, int ffn_hidden,
                ParamStore& ps, Rng& rng);

    TextFeatures forward(const TokenSequence& tokens, ForwardTrace* trace = nullptr) const;

    int dim() const { return dim_; }

private:
    int vocab_size_ = 0;
    int max_len_ = 0;
    int dim_ = 0;
    Tensor embed_;  // [vocab x dim]
    Tensor pos_;    // fixed [max_len x dim], not trained
    std::vector<EncoderLayer> layers_;
    LayerNormLayer final_ln_;
};

}  // namespace fan
