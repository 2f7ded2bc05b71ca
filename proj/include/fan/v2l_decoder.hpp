#pragma once

#include <array>
#include <string>
#include <vector>

#include "fan/activation_module.hpp"
#include "fan/nn.hpp"

namespace fan {

// Stride-4 multi-modal visual map, the output of the V2L decoder.
struct AlignedVisualMap {
    Tensor features;  // [H/4 x W/4 x D]
};

enum class VpmMode { None, SingleScale, MultiScale };

VpmMode vpm_mode_from_string(const std::string& s);
std::string vpm_mode_to_string(VpmMode m);

// Vision Projection Module: flattened vision tokens with fixed 2D positions
// are concatenated with word tokens for multi-modal self-attention; the
// vision tokens are then re-selected and attend to the words, followed by an
// FFN. All sublayers are pre-norm with residuals. The self-attention stage
// can be ablated, leaving cross-attention fusion only.
class VisionProjectionModule {
public:
    VisionProjectionModule() = default;
    VisionProjectionModule(int dim, int heads, int ffn_hidden, bool self_attention,
                           const std::string& name, ParamStore& ps, Rng& rng);

    // f_c: [h x w x D]; words_proj: [l x D]; word_mask: true at padded words
    Tensor forward(const Tensor& f_c, const Tensor& words_proj,
                   const std::vector<bool>& word_mask, ForwardTrace* trace = nullptr,
                   const std::string& site = "vpm") const;

private:
    bool self_attention_ = true;
    int dim_ = 0;
    LayerNormLayer ln_self_, ln_cross_, ln_ffn_;
    MhaLayer self_attn_, cross_attn_;
    FfnLayer ffn_;
};

// 3x3 stride-1 convolution with bias, used to smooth each top-down addition.
struct SmoothConv {
    Tensor kernel;  // [3 x 3 x D x D]
    Tensor bias;    // [D]
    SmoothConv() = default;
    SmoothConv(int dim, const std::string& name, ParamStore& ps, Rng& rng);
    Tensor forward(const Tensor& x) const;
};

// Vision-to-Language decoder: per-level VPMs inject word guidance, then
// FPN-style top-down fusion from level 5 to level 2 produces the stride-4
// aligned map.
class V2LDecoder {
public:
    V2LDecoder() = default;
    V2LDecoder(int text_dim, int fusion_dim, int heads, int ffn_hidden, VpmMode mode,
               bool vpm_self_attention, ParamStore& ps, Rng& rng);

    AlignedVisualMap forward(const ActivatedPyramid& pyramid, const Tensor& f_w,
                             const std::vector<bool>& word_mask,
                             ForwardTrace* trace = nullptr) const;

    // Top-down upsample-add-smooth chain over levels 2..5, exposed for tests.
    Tensor fuse(const std::array<Tensor, 4>& levels) const;

private:
    VpmMode mode_ = VpmMode::MultiScale;
    LinearLayer word_proj_;
    std::vector<VisionProjectionModule> vpms_;  // per level (multi) or level 5 only (single)
    std::array<SmoothConv, 3> smooth_;          // applied at levels 4, 3, 2
};

}  // namespace fan
