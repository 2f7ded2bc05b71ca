#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "fan/error.hpp"
#include "fan/gradcheck.hpp"
#include "fan/text_encoder.hpp"
#include "oracles.hpp"

using namespace fan;

namespace {

Vocabulary test_vocab() {
    return Vocabulary::from_words({"the", "red", "green", "blue", "yellow", "circle", "square",
                                   "triangle", "left", "right", "above", "below", "of"});
}

}  // namespace

TEST_CASE("tokenize: basic construction") {
    Vocabulary v = test_vocab();
    TokenSequence seq = tokenize("red circle", v, 6);
    CHECK(seq.ids == std::vector<int>{Vocabulary::kSos, v.id_of("red"), v.id_of("circle"),
                                      Vocabulary::kEos, Vocabulary::kPad, Vocabulary::kPad});
    CHECK(seq.true_length == 4);
    seq.validate(v.size());
}

TEST_CASE("tokenize: empty text") {
    Vocabulary v = test_vocab();
    TokenSequence seq = tokenize("", v, 4);
    CHECK(seq.ids == std::vector<int>{Vocabulary::kSos, Vocabulary::kEos, Vocabulary::kPad,
                                      Vocabulary::kPad});
    CHECK(seq.true_length == 2);
}

TEST_CASE("tokenize: truncation keeps 15 words at max_len 17") {
    Vocabulary v = test_vocab();
    std::string text;
    for (int i = 0; i < 30; ++i) text += "red ";
    TokenSequence seq = tokenize(text, v, 17);
    CHECK(seq.ids.size() == 17);
    CHECK(seq.true_length == 17);
    CHECK(seq.ids[0] == Vocabulary::kSos);
    CHECK(seq.ids[16] == Vocabulary::kEos);
    for (int i = 1; i <= 15; ++i) CHECK(seq.ids[static_cast<size_t>(i)] == v.id_of("red"));
}

TEST_CASE("tokenize: unknown words, case folding, max_len bound") {
    Vocabulary v = test_vocab();
    TokenSequence seq = tokenize("RED zebra", v, 6);
    CHECK(seq.ids[1] == v.id_of("red"));
    CHECK(seq.ids[2] == Vocabulary::kUnk);
    CHECK_THROWS_AS(tokenize("red", v, 2), ConfigError);
}

TEST_CASE("vocabulary: save/load round trip and validation") {
    namespace fs = std::filesystem;
    Vocabulary v = test_vocab();
    const std::string path = (fs::temp_directory_path() / "fan_vocab_test.txt").string();
    v.save(path);
    Vocabulary loaded = Vocabulary::load(path);
    CHECK(loaded.size() == v.size());
    for (int i = 0; i < v.size(); ++i) CHECK(loaded.token(i) == v.token(i));

    // a file missing the reserved prefix is rejected
    {
        FILE* f = std::fopen(path.c_str(), "w");
        std::fputs("the\nred\n[SOS]\n[EOS]\n", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(Vocabulary::load(path), DataError);
    fs::remove(path);
}

TEST_CASE("encode_text: shape contract and f_s is the EOS row") {
    Vocabulary v = test_vocab();
    ParamStore ps;
    Rng rng(5);
    TextEncoder enc(v.size(), 8, 16, 2, 2, 32, ps, rng);
    TokenSequence seq = tokenize("blue square", v, 8);
    TextFeatures feats = enc.forward(seq);
    CHECK(feats.f_w.shape() == Shape{8, 16});
    CHECK(feats.f_s.shape() == Shape{1, 16});
    CHECK(feats.padding_mask == seq.padding_mask());

    const int eos = seq.eos_position();
    for (int j = 0; j < 16; ++j) {
        CHECK(feats.f_s.vec()[static_cast<size_t>(j)] ==
              feats.f_w.vec()[static_cast<size_t>(eos) * 16 + j]);
    }
}

TEST_CASE("encode_text: padding content never leaks into non-pad outputs") {
    Vocabulary v = test_vocab();
    ParamStore ps;
    Rng rng(6);
    TextEncoder enc(v.size(), 8, 16, 2, 2, 32, ps, rng);
    TokenSequence seq = tokenize("red circle", v, 8);

    TextFeatures before = enc.forward(seq);

    // Altering what PAD positions embed to must leave non-pad rows and f_s
    // untouched; the attention mask is the only thing standing in the way.
    Tensor embed = ps.get("text.embed");
    for (int j = 0; j < 16; ++j) embed.vec()[static_cast<size_t>(Vocabulary::kPad) * 16 + j] += 13.7;
    TextFeatures after = enc.forward(seq);

    for (int i = 0; i < seq.true_length; ++i)
        for (int j = 0; j < 16; ++j) {
            const size_t idx = static_cast<size_t>(i) * 16 + j;
            CHECK(std::fabs(before.f_w.vec()[idx] - after.f_w.vec()[idx]) < 1e-10);
        }
    for (int j = 0; j < 16; ++j)
        CHECK(std::fabs(before.f_s.vec()[static_cast<size_t>(j)] -
                        after.f_s.vec()[static_cast<size_t>(j)]) < 1e-10);
}

TEST_CASE("encode_text: word order changes the sentence embedding") {
    Vocabulary v = test_vocab();
    ParamStore ps;
    Rng rng(7);
    TextEncoder enc(v.size(), 8, 16, 2, 2, 32, ps, rng);
    TextFeatures a = enc.forward(tokenize("red circle", v, 8));
    TextFeatures b = enc.forward(tokenize("circle red", v, 8));
    double max_diff = 0.0;
    for (size_t j = 0; j < a.f_s.vec().size(); ++j)
        max_diff = std::max(max_diff, std::fabs(a.f_s.vec()[j] - b.f_s.vec()[j]));
    CHECK(max_diff > 1e-6);
}

TEST_CASE("encode_text: deterministic") {
    Vocabulary v = test_vocab();
    ParamStore ps;
    Rng rng(8);
    TextEncoder enc(v.size(), 8, 16, 2, 2, 32, ps, rng);
    TokenSequence seq = tokenize("yellow triangle above the blue square", v, 8);
    TextFeatures a = enc.forward(seq);
    TextFeatures b = enc.forward(seq);
    CHECK(a.f_w.vec() == b.f_w.vec());
    CHECK(a.f_s.vec() == b.f_s.vec());
}

TEST_CASE("encode_text: out-of-range token id is a data error") {
    Vocabulary v = test_vocab();
    ParamStore ps;
    Rng rng(9);
    TextEncoder enc(v.size(), 6, 16, 1, 2, 32, ps, rng);
    TokenSequence seq = tokenize("red", v, 6);
    seq.ids[1] = v.size() + 5;
    CHECK_THROWS_AS(enc.forward(seq), DataError);
}

TEST_CASE("encode_text: gradients pass finite differences") {
    Vocabulary v = test_vocab();
    ParamStore ps;
    Rng rng(10);
    TextEncoder enc(v.size(), 6, 8, 1, 2, 16, ps, rng);
    TokenSequence seq = tokenize("green triangle", v, 6);

    Rng wrng(11);
    Tensor weights = oracles::random_tensor({1, 8}, wrng);
    auto f = [&] { return sum(mul(enc.forward(seq).f_s, weights)); };

    std::vector<std::pair<std::string, Tensor>> params;
    for (const auto& e : ps.entries()) params.emplace_back(e.name, e.tensor);

    GradCheckReport rep = grad_check(f, params, {});
    CHECK(rep.max_rel_err() < 1e-4);
    CHECK(rep.checked_coords > 0);
}
