#pragma once

#include <vector>

#include "fan/nn.hpp"

namespace fan {

// Language-to-Vision decoder: the coarse sentence embedding, projected into
// the fusion space, is refined against visual memory by a stack of
// transformer decoder layers. Optional encoder layers over the memory are
// available for the structural ablation and off by default. When the decoder
// is ablated the sentence embedding is only projected and normalized.
class L2VDecoder {
public:
    L2VDecoder() = default;
    L2VDecoder(int text_dim, int fusion_dim, int heads, int ffn_hidden, int layers,
               int encoder_layers, bool enabled, ParamStore& ps, Rng& rng);

    // f_s: [1 x C_t]; memory: [M x D]. Returns [1 x D].
    Tensor forward(const Tensor& f_s, const Tensor& memory, ForwardTrace* trace = nullptr) const;

    bool enabled() const { return enabled_; }

private:
    bool enabled_ = true;
    LinearLayer sentence_proj_;
    std::vector<EncoderLayer> memory_layers_;
    std::vector<DecoderLayer> layers_;
    LayerNormLayer final_ln_;
};

}  // namespace fan
