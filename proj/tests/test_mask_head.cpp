#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "fan/error.hpp"
#include "fan/mask_head.hpp"
#include "fan/metrics.hpp"
#include "fan/ops.hpp"
#include "oracles.hpp"

using namespace fan;

namespace {

double logit_of(double p) { return std::log(p / (1.0 - p)); }

BinaryMask mask_from(const std::vector<uint8_t>& v, int h, int w) {
    BinaryMask m;
    m.h = h;
    m.w = w;
    m.values = v;
    return m;
}

}  // namespace

TEST_CASE("similarity: zero sentence gives constant logits equal to the bias") {
    ParamStore ps;
    MaskHead head(ps);
    ps.get("mask_head.bias").vec()[0] = 0.37;
    Rng rng(1);
    Tensor visual = oracles::random_tensor({3, 4, 8}, rng);
    Tensor sentence = Tensor::zeros({1, 8});
    Tensor logits = head.similarity_logits(visual, sentence);
    CHECK(logits.shape() == Shape{3, 4});
    for (double v : logits.vec()) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("similarity: aligned pixel scores above anti-aligned pixel") {
    ParamStore ps;
    MaskHead head(ps);
    Rng rng(2);
    Tensor sentence = oracles::random_tensor({1, 8}, rng);
    Tensor visual = Tensor::zeros({1, 2, 8});
    for (int j = 0; j < 8; ++j) {
        visual.vec()[static_cast<size_t>(j)] = sentence.vec()[static_cast<size_t>(j)];
        visual.vec()[static_cast<size_t>(8 + j)] = -sentence.vec()[static_cast<size_t>(j)];
    }
    Tensor logits = head.similarity_logits(visual, sentence);
    CHECK(logits.vec()[0] > logits.vec()[1]);
}

TEST_CASE("similarity: matches the per-pixel dot-product oracle") {
    ParamStore ps;
    MaskHead head(ps);
    ps.get("mask_head.bias").vec()[0] = -0.2;
    Rng rng(3);
    const int h = 4, w = 5, d = 16;
    Tensor visual = oracles::random_tensor({h, w, d}, rng);
    Tensor sentence = oracles::random_tensor({1, d}, rng);
    Tensor logits = head.similarity_logits(visual, sentence);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double dot = 0.0;
            for (int c = 0; c < d; ++c)
                dot += visual.vec()[(static_cast<size_t>(y) * w + x) * d + c] *
                       sentence.vec()[static_cast<size_t>(c)];
            const double expect = dot / std::sqrt(static_cast<double>(d)) - 0.2;
            CHECK(std::fabs(logits.vec()[static_cast<size_t>(y) * w + x] - expect) < 1e-12);
        }
}

TEST_CASE("similarity: pixel ranking is invariant to positive sentence scaling") {
    ParamStore ps;
    MaskHead head(ps);
    ps.get("mask_head.bias").vec()[0] = 0.4;
    Rng rng(4);
    Tensor visual = oracles::random_tensor({4, 4, 8}, rng);
    Tensor sentence = oracles::random_tensor({1, 8}, rng);
    Tensor base = head.similarity_logits(visual, sentence);
    Tensor scaled_sentence = scale(sentence, 3.7);
    Tensor scaled = head.similarity_logits(visual, scaled_sentence);

    std::vector<int> order_a(16), order_b(16);
    std::iota(order_a.begin(), order_a.end(), 0);
    order_b = order_a;
    std::sort(order_a.begin(), order_a.end(), [&](int a, int b) {
        return base.vec()[static_cast<size_t>(a)] < base.vec()[static_cast<size_t>(b)];
    });
    std::sort(order_b.begin(), order_b.end(), [&](int a, int b) {
        return scaled.vec()[static_cast<size_t>(a)] < scaled.vec()[static_cast<size_t>(b)];
    });
    CHECK(order_a == order_b);
}

TEST_CASE("similarity: dimension mismatch is a shape error") {
    ParamStore ps;
    MaskHead head(ps);
    CHECK_THROWS_AS(head.similarity_logits(Tensor::zeros({2, 2, 8}), Tensor::zeros({1, 6})),
                    ShapeError);
}

TEST_CASE("upsample_logits: constants, oracle, monotone ramps") {
    Tensor constant = Tensor::full({2, 2}, 1.3);
    Tensor up = upsample_logits(constant, 8, 8);
    for (double v : up.vec()) CHECK(v == doctest::Approx(1.3).epsilon(1e-15));

    Tensor logits = Tensor::from_data({2, 2}, {0.0, 1.0, 2.0, 3.0});
    Tensor up2 = upsample_logits(logits, 8, 8);
    for (int oy = 0; oy < 8; ++oy)
        for (int ox = 0; ox < 8; ++ox) {
            const double expect = oracles::bilinear_at(logits.vec(), 2, 2, 1, 8, 8, oy, ox, 0);
            CHECK(up2.vec()[static_cast<size_t>(oy) * 8 + ox] ==
                  doctest::Approx(expect).epsilon(1e-14));
        }

    // monotone ramp along x stays monotone along x
    Tensor ramp = Tensor::from_data({1, 4}, {0.0, 1.0, 2.0, 3.0});
    Tensor up3 = upsample_logits(ramp, 4, 16);
    for (int y = 0; y < 4; ++y)
        for (int x = 1; x < 16; ++x)
            CHECK(up3.vec()[static_cast<size_t>(y) * 16 + x] >=
                  up3.vec()[static_cast<size_t>(y) * 16 + x - 1]);

    CHECK_THROWS_AS(upsample_logits(logits, 7, 8), ShapeError);
    CHECK_THROWS_AS(upsample_logits(logits, 16, 16), ShapeError);
}

TEST_CASE("binarize: threshold semantics") {
    Tensor low = Tensor::full({2, 2}, -10.0);
    CHECK(binarize(low, 0.35).count() == 0);

    // probability exactly at the threshold is foreground (>= convention)
    Tensor zero = Tensor::zeros({1, 1});
    CHECK(binarize(zero, 0.5).at(0, 0) == 1);

    Tensor probs = Tensor::from_data(
        {1, 4}, {logit_of(0.2), logit_of(0.34), logit_of(0.36), logit_of(0.9)});
    BinaryMask m = binarize(probs, 0.35);
    CHECK(m.at(0, 0) == 0);
    CHECK(m.at(0, 1) == 0);
    CHECK(m.at(0, 2) == 1);
    CHECK(m.at(0, 3) == 1);

    CHECK_THROWS_AS(binarize(zero, 0.0), ConfigError);
    CHECK_THROWS_AS(binarize(zero, 1.0), ConfigError);
    CHECK_THROWS_AS(binarize(zero, -3.0), ConfigError);
}

TEST_CASE("dice: exact predictions give zero loss") {
    Tensor target = Tensor::from_data({2, 3}, {1, 0, 1, 0, 0, 1});
    Tensor logits = Tensor::zeros({2, 3});
    for (size_t i = 0; i < 6; ++i) logits.vec()[i] = target.vec()[i] > 0.5 ? 40.0 : -40.0;
    CHECK(std::fabs(dice_loss_with_logits(logits, target, 1.0).item()) < 1e-12);
}

TEST_CASE("dice: all-wrong closed form 1 - 1/(N+1)") {
    const int n = 12;
    Tensor logits = Tensor::full({3, 4}, 40.0);
    Tensor target = Tensor::zeros({3, 4});
    const double expect = 1.0 - 1.0 / (n + 1.0);
    CHECK(dice_loss_with_logits(logits, target, 1.0).item() ==
          doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("dice: random case matches the direct formula oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor logits = oracles::random_tensor({4, 4}, rng, 2.0);
        Tensor target = Tensor::zeros({4, 4});
        for (auto& v : target.vec()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
        const double got = dice_loss_with_logits(logits, target, 1.0).item();

        long double inter = 0.0L, sp = 0.0L, sy = 0.0L;
        for (size_t i = 0; i < 16; ++i) {
            const long double p = 1.0L / (1.0L + expl(-static_cast<long double>(logits.vec()[i])));
            inter += p * static_cast<long double>(target.vec()[i]);
            sp += p;
            sy += static_cast<long double>(target.vec()[i]);
        }
        const double expect = static_cast<double>(1.0L - (2.0L * inter + 1.0L) / (sp + sy + 1.0L));
        CHECK(std::fabs(got - expect) < 1e-10);

        // bounds
        CHECK(got >= 0.0);
        CHECK(got <= 1.0 + 1e-12);
    }
}

TEST_CASE("dice: bad targets are a data error") {
    Tensor logits = Tensor::zeros({2, 2});
    Tensor target = Tensor::full({2, 2}, 0.5);
    CHECK_THROWS_AS(dice_loss_with_logits(logits, target, 1.0), DataError);
}

TEST_CASE("downsample_mask_nearest: center sampling at factor 4") {
    // 8x8 mask with the left half set; stride-4 target samples at (2,2),(2,6)...
    BinaryMask m;
    m.h = 8;
    m.w = 8;
    m.values.assign(64, 0);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 4; ++x) m.values[static_cast<size_t>(y) * 8 + x] = 1;
    Tensor t = downsample_mask_nearest(m, 4);
    CHECK(t.shape() == Shape{2, 2});
    CHECK(t.vec()[0] == 1.0);  // samples (2,2)
    CHECK(t.vec()[1] == 0.0);  // samples (2,6)
    CHECK_THROWS_AS(downsample_mask_nearest(m, 3), ShapeError);
}

TEST_CASE("iou: trivial and counted cases") {
    BinaryMask a = mask_from({1, 1, 0, 0}, 2, 2);
    CHECK(iou(a, a) == 1.0);

    BinaryMask b = mask_from({0, 0, 1, 1}, 2, 2);
    CHECK(iou(a, b) == 0.0);

    BinaryMask empty1 = mask_from({0, 0, 0, 0}, 2, 2);
    CHECK(iou(empty1, empty1) == 1.0);

    // 3 overlapping of 5 union pixels -> 0.6
    std::vector<uint8_t> pa(16, 0), pb(16, 0);
    pa[0] = pa[1] = pa[2] = pa[3] = 1;
    pb[0] = pb[1] = pb[2] = 1;
    pb[4] = 1;
    BinaryMask ma = mask_from(pa, 4, 4), mb = mask_from(pb, 4, 4);
    CHECK(iou(ma, mb) == doctest::Approx(0.6).epsilon(1e-15));

    BinaryMask wrong = mask_from({0, 0}, 1, 2);
    CHECK_THROWS_AS(iou(a, wrong), ShapeError);
}

TEST_CASE("iou: symmetry and self-identity over random masks") {
    Rng rng(6);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<uint8_t> va(36), vb(36);
        for (auto& v : va) v = rng.uniform() < 0.5 ? 1 : 0;
        for (auto& v : vb) v = rng.uniform() < 0.5 ? 1 : 0;
        BinaryMask a = mask_from(va, 6, 6), b = mask_from(vb, 6, 6);
        CHECK(iou(a, b) == iou(b, a));
        if (!a.empty_mask()) CHECK(iou(a, a) == 1.0);
        CHECK(iou(a, b) >= 0.0);
        CHECK(iou(a, b) <= 1.0);
    }
}

TEST_CASE("precision_at: counted cases and oracle") {
    CHECK(precision_at({0.6, 0.4}, 0.5) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(precision_at({0.9, 0.8, 0.7}, 0.5) == 1.0);

    Rng rng(7);
    std::vector<double> ious(100);
    for (auto& v : ious) v = rng.uniform();
    for (double x : {0.5, 0.7, 0.9}) {
        int hits = 0;
        for (double v : ious) hits += v >= x ? 1 : 0;
        CHECK(precision_at(ious, x) == static_cast<double>(hits) / 100.0);
    }

    CHECK_THROWS_AS(precision_at({}, 0.5), ContractError);
    CHECK_THROWS_AS(precision_at({0.5}, 0.0), ConfigError);
    CHECK_THROWS_AS(precision_at({0.5}, 1.0), ConfigError);
}

TEST_CASE("bce and dice are non-negative over random inputs") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor logits = oracles::random_tensor({3, 3}, rng, 3.0);
        Tensor target = Tensor::zeros({3, 3});
        for (auto& v : target.vec()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
        CHECK(bce_with_logits_mean(logits, target).item() >= 0.0);
        CHECK(dice_loss_with_logits(logits, target, 1.0).item() >= 0.0);
    }
}
