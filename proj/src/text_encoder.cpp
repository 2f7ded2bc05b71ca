#include "fan/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "fan/error.hpp"

namespace fan {

namespace {
const char* kReserved[] = {"[PAD]", "[UNK]", "[SOS]", "[EOS]"};
}

Vocabulary Vocabulary::from_words(const std::vector<std::string>& words) {
    Vocabulary v;
    for (const char* r : kReserved) {
        v.index_[r] = static_cast<int>(v.tokens_.size());
        v.tokens_.emplace_back(r);
    }
    for (const auto& w : words) {
        if (v.index_.count(w)) continue;
        v.index_[w] = static_cast<int>(v.tokens_.size());
        v.tokens_.push_back(w);
    }
    return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open vocabulary file: " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (v.index_.count(line)) throw DataError("duplicate vocabulary token: " + line);
        v.index_[line] = static_cast<int>(v.tokens_.size());
        v.tokens_.push_back(line);
    }
    if (v.tokens_.size() < 4) {
        throw DataError("vocabulary file " + path + " is missing reserved tokens");
    }
    for (int i = 0; i < 4; ++i) {
        if (v.tokens_[static_cast<size_t>(i)] != kReserved[i]) {
            throw DataError("vocabulary file " + path + ": id " + std::to_string(i) +
                            " must be " + kReserved[i] + ", found '" +
                            v.tokens_[static_cast<size_t>(i)] + "'");
        }
    }
    return v;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write vocabulary file: " + path);
    for (const auto& t : tokens_) out << t << "\n";
}

int Vocabulary::id_of(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw DataError("token id out of range: " + std::to_string(id));
    return tokens_[static_cast<size_t>(id)];
}

std::vector<bool> TokenSequence::padding_mask() const {
    std::vector<bool> mask(ids.size(), false);
    for (size_t i = static_cast<size_t>(true_length); i < ids.size(); ++i) mask[i] = true;
    return mask;
}

void TokenSequence::validate(int vocab_size) const {
    if (true_length < 2 || true_length > max_len()) {
        throw DataError("token sequence true_length " + std::to_string(true_length) +
                        " invalid for max_len " + std::to_string(max_len()));
    }
    if (ids[0] != Vocabulary::kSos) throw DataError("token sequence must start with [SOS]");
    if (ids[static_cast<size_t>(true_length - 1)] != Vocabulary::kEos) {
        throw DataError("token sequence must end with [EOS] at true_length-1");
    }
    for (int i = true_length; i < max_len(); ++i) {
        if (ids[static_cast<size_t>(i)] != Vocabulary::kPad) {
            throw DataError("positions past true_length must be [PAD]");
        }
    }
    for (int id : ids) {
        if (id < 0 || id >= vocab_size) {
            throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(vocab_size));
        }
    }
}

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, int max_len) {
    if (max_len < 3) {
        throw ConfigError("tokenize: max_len must be at least 3, got " + std::to_string(max_len));
    }
    std::string lowered(text);
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::istringstream ss(lowered);
    std::vector<std::string> words;
    std::string w;
    while (ss >> w) words.push_back(w);
    if (static_cast<int>(words.size()) > max_len - 2) {
        words.resize(static_cast<size_t>(max_len - 2));
    }

    TokenSequence seq;
    seq.ids.assign(static_cast<size_t>(max_len), Vocabulary::kPad);
    seq.ids[0] = Vocabulary::kSos;
    for (size_t i = 0; i < words.size(); ++i) seq.ids[i + 1] = vocab.id_of(words[i]);
    seq.ids[words.size() + 1] = Vocabulary::kEos;
    seq.true_length = static_cast<int>(words.size()) + 2;
    return seq;
}

TextEncoder::TextEncoder(int vocab_size, int max_len, int dim, int layers, int heads,
                         int ffn_hidden, ParamStore& ps, Rng& rng)
    : vocab_size_(vocab_size), max_len_(max_len), dim_(dim) {
    if (vocab_size < 4) throw ConfigError("text encoder: vocabulary too small");
    Tensor embed = Tensor::zeros({vocab_size, dim});
    for (auto& v : embed.vec()) v = rng.normal(0.0, 0.5);
    embed_ = ps.add("text.embed", embed);
    pos_ = positional_embedding_1d(max_len, dim);
    for (int i = 0; i < layers; ++i) {
        layers_.emplace_back(dim, heads, ffn_hidden, "text.layer" + std::to_string(i), ps, rng);
    }
    final_ln_ = LayerNormLayer(dim, "text.final_ln", ps);
}

TextFeatures TextEncoder::forward(const TokenSequence& tokens, ForwardTrace* trace) const {
    if (tokens.max_len() != max_len_) {
        throw ShapeError("text encoder expects " + std::to_string(max_len_) + " tokens, got " +
                         std::to_string(tokens.max_len()));
    }
    tokens.validate(vocab_size_);

    Tensor x = add(embedding(tokens.ids, embed_), pos_);
    const std::vector<bool> mask = tokens.padding_mask();
    for (size_t i = 0; i < layers_.size(); ++i) {
        x = layers_[i].forward(x, &mask,
                               trace_probe(trace, "text.layer" + std::to_string(i) + ".self"));
    }
    x = final_ln_.forward(x);

    TextFeatures out;
    out.f_w = x;
    out.f_s = slice_rows(x, tokens.eos_position(), tokens.eos_position() + 1);
    out.padding_mask = mask;
    return out;
}

}  // namespace fan
