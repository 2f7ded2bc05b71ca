#pragma once

#include <array>
#include <string>
#include <vector>

#include "fan/nn.hpp"
#include "fan/vision_encoder.hpp"

namespace fan {

// The four pyramid levels after cross-modal activation, all at the shared
// fusion dimension D with unchanged spatial layout.
struct ActivatedPyramid {
    std::array<Tensor, 4> levels;

    const Tensor& level(int i) const { return levels[static_cast<size_t>(i - 2)]; }
    Tensor& level(int i) { return levels[static_cast<size_t>(i - 2)]; }
};

// Per-scale cross-attention from visual queries to word keys/values, with a
// residual from the projected visual tokens. With the module ablated, each
// level is only projected to D so downstream shapes are unchanged.
class ActivationModule {
public:
    ActivationModule() = default;
    ActivationModule(const std::vector<int>& vision_channels, int text_dim, int fusion_dim,
                     int heads, bool enabled, ParamStore& ps, Rng& rng);

    bool enabled() const { return enabled_; }

    // words: [l x C_t]; word_mask: true at padded words
    ActivatedPyramid forward(const PyramidFeatures& pyramid, const Tensor& words,
                             const std::vector<bool>& word_mask,
                             ForwardTrace* trace = nullptr) const;

    // One scale: f_v [h x w x C_v] -> [h x w x D]
    Tensor activate_scale(int level, const Tensor& f_v, const Tensor& words,
                          const std::vector<bool>& word_mask,
                          AttentionProbe* probe = nullptr) const;

private:
    struct PerLevel {
        LinearLayer vproj;  // 1x1 conv as a per-position linear map
        LinearLayer wproj;
        MhaLayer attn;
    };
    std::vector<PerLevel> levels_;
    bool enabled_ = true;
};

}  // namespace fan
