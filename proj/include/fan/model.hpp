#pragma once

#include "fan/activation_module.hpp"
#include "fan/config.hpp"
#include "fan/l2v_decoder.hpp"
#include "fan/mask_head.hpp"
#include "fan/text_encoder.hpp"
#include "fan/v2l_decoder.hpp"
#include "fan/vision_encoder.hpp"

namespace fan {

// Everything one forward pass produces, intermediates included.
struct ForwardOutput {
    TextFeatures text;
    PyramidFeatures pyramid;
    ActivatedPyramid activated;
    AlignedVisualMap aligned;
    Tensor sentence_query;  // [1 x D]
    Tensor logits_s4;       // [H/4 x W/4]
};

// The full network: encoders, activation, both decoders, similarity head.
// Parameter creation order is fixed, so a given config and seed always
// produce the same initialization.
class Model {
public:
    Model(const ModelConfig& cfg, uint64_t init_seed);

    ForwardOutput forward(const Tensor& image, const TokenSequence& tokens,
                          ForwardTrace* trace = nullptr) const;
    Tensor forward_logits(const Tensor& image, const TokenSequence& tokens,
                          ForwardTrace* trace = nullptr) const;

    // Inference path: stride-4 logits -> bilinear upsample -> sigmoid ->
    // threshold, at full image resolution.
    BinaryMask predict(const Tensor& image, const TokenSequence& tokens) const;

    // Weighted BCE + dice on stride-4 logits against a stride-4 target.
    Tensor loss(const Tensor& logits_s4, const Tensor& target_s4) const;

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

private:
    ModelConfig cfg_;
    ParamStore params_;
    TextEncoder text_encoder_;
    VisionEncoder vision_encoder_;
    ActivationModule activation_;
    V2LDecoder v2l_;
    L2VDecoder l2v_;
    MaskHead mask_head_;
};

}  // namespace fan
