#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fan/error.hpp"
#include "fan/gradcheck.hpp"
#include "fan/vision_encoder.hpp"
#include "oracles.hpp"

using namespace fan;

TEST_CASE("vision encoder: 64x64 pyramid strides") {
    ParamStore ps;
    Rng rng(1);
    VisionEncoder enc({32, 64, 128, 256}, ps, rng);
    Tensor image = Tensor::full({64, 64, 3}, 0.5);
    PyramidFeatures p = enc.forward(image);
    CHECK(p.level(2).shape() == Shape{16, 16, 32});
    CHECK(p.level(3).shape() == Shape{8, 8, 64});
    CHECK(p.level(4).shape() == Shape{4, 4, 128});
    CHECK(p.level(5).shape() == Shape{2, 2, 256});
}

TEST_CASE("vision encoder: 416x416 pyramid strides") {
    ParamStore ps;
    Rng rng(2);
    VisionEncoder enc({8, 8, 8, 8}, ps, rng);
    Tensor image = Tensor::full({416, 416, 3}, 0.3);
    PyramidFeatures p = enc.forward(image);
    CHECK(p.level(2).shape() == Shape{104, 104, 8});
    CHECK(p.level(3).shape() == Shape{52, 52, 8});
    CHECK(p.level(4).shape() == Shape{26, 26, 8});
    CHECK(p.level(5).shape() == Shape{13, 13, 8});
}

TEST_CASE("vision encoder: zero image with zero biases stays zero and finite") {
    ParamStore ps;
    Rng rng(3);
    VisionEncoder enc({8, 12, 16, 24}, ps, rng);
    Tensor image = Tensor::zeros({64, 64, 3});
    PyramidFeatures p = enc.forward(image);
    for (int level = 2; level <= 5; ++level) {
        CHECK(p.level(level).all_finite());
        for (double v : p.level(level).vec()) CHECK(v == 0.0);
    }
}

TEST_CASE("vision encoder: non-divisible dims name the required divisor") {
    ParamStore ps;
    Rng rng(4);
    VisionEncoder enc({8, 12, 16, 24}, ps, rng);
    try {
        enc.forward(Tensor::zeros({60, 64, 3}));
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        CHECK(std::string(e.what()).find("32") != std::string::npos);
    }
}

TEST_CASE("vision encoder: parameters are tagged as backbone") {
    ParamStore ps;
    Rng rng(5);
    VisionEncoder enc({8, 12, 16, 24}, ps, rng);
    CHECK(!ps.entries().empty());
    for (const auto& e : ps.entries()) CHECK(e.backbone);
}

TEST_CASE("vision encoder: shifting the input by 32px shifts level 5 by one cell") {
    ParamStore ps;
    Rng rng(6);
    VisionEncoder enc({4, 6, 8, 12}, ps, rng);

    const int n = 192;
    Rng img_rng(7);
    Tensor a = Tensor::zeros({n, n, 3});
    for (auto& v : a.vec()) v = img_rng.uniform();
    Tensor b = Tensor::zeros({n, n, 3});
    for (int y = 32; y < n; ++y)
        for (int x = 0; x < n; ++x)
            for (int c = 0; c < 3; ++c)
                b.vec()[(static_cast<size_t>(y) * n + x) * 3 + c] =
                    a.vec()[(static_cast<size_t>(y - 32) * n + x) * 3 + c];

    PyramidFeatures pa = enc.forward(a);
    PyramidFeatures pb = enc.forward(b);
    const Tensor& fa = pa.level(5);
    const Tensor& fb = pb.level(5);
    const int cells = n / 32;
    const int ch = fa.dim(2);
    // interior cells only: receptive fields must avoid both image borders and
    // the seam left by the shift
    for (int i = 2; i < cells - 1; ++i)
        for (int j = 1; j < cells - 1; ++j)
            for (int c = 0; c < ch; ++c) {
                const double shifted =
                    fb.vec()[(static_cast<size_t>(i) * cells + j) * ch + c];
                const double original =
                    fa.vec()[(static_cast<size_t>(i - 1) * cells + j) * ch + c];
                CHECK(std::fabs(shifted - original) < 1e-12);
            }
}

TEST_CASE("vision encoder: gradients pass finite differences") {
    ParamStore ps;
    Rng rng(8);
    VisionEncoder enc({3, 4, 5, 6}, ps, rng);
    Rng irng(9);
    Tensor image = Tensor::zeros({32, 32, 3});
    for (auto& v : image.vec()) v = irng.uniform();

    Rng wrng(10);
    Tensor weights;
    {
        NoGradGuard ng;
        weights = oracles::random_tensor(enc.forward(image).level(5).shape(), wrng);
    }
    auto f = [&] { return sum(mul(enc.forward(image).level(5), weights)); };

    std::vector<std::pair<std::string, Tensor>> params;
    for (const auto& e : ps.entries()) params.emplace_back(e.name, e.tensor);

    GradCheckOptions opts;
    opts.max_coords_per_param = 4;
    GradCheckReport rep = grad_check(f, params, opts);
    CHECK(rep.max_rel_err() < 1e-4);
    CHECK(rep.checked_coords > 0);
}
