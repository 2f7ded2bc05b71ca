#include "fan/l2v_decoder.hpp"

#include "fan/error.hpp"
#include "fan/ops.hpp"

namespace fan {

L2VDecoder::L2VDecoder(int text_dim, int fusion_dim, int heads, int ffn_hidden, int layers,
                       int encoder_layers, bool enabled, ParamStore& ps, Rng& rng)
    : enabled_(enabled) {
    sentence_proj_ = LinearLayer(text_dim, fusion_dim, "l2v.sentence_proj", ps, rng);
    if (enabled_) {
        if (layers < 1) throw ConfigError("l2v decoder needs at least 1 layer");
        for (int i = 0; i < encoder_layers; ++i) {
            memory_layers_.emplace_back(fusion_dim, heads, ffn_hidden,
                                        "l2v.encoder" + std::to_string(i), ps, rng);
        }
        for (int i = 0; i < layers; ++i) {
            layers_.emplace_back(fusion_dim, heads, ffn_hidden, "l2v.layer" + std::to_string(i),
                                 ps, rng);
        }
    }
    final_ln_ = LayerNormLayer(fusion_dim, "l2v.final_ln", ps);
}

Tensor L2VDecoder::forward(const Tensor& f_s, const Tensor& memory, ForwardTrace* trace) const {
    if (f_s.rank() != 2 || f_s.dim(0) != 1) {
        throw ShapeError("l2v decoder expects [1 x C_t] sentence embedding, got " +
                         shape_str(f_s.shape()));
    }
    Tensor q = sentence_proj_.forward(f_s);
    if (enabled_) {
        if (!memory.defined() || memory.rank() != 2 || memory.dim(0) < 1) {
            throw ContractError("l2v decoder requires non-empty visual memory");
        }
        Tensor mem = memory;
        for (size_t i = 0; i < memory_layers_.size(); ++i) {
            mem = memory_layers_[i].forward(
                mem, nullptr, trace_probe(trace, "l2v.encoder" + std::to_string(i) + ".self"));
        }
        for (size_t i = 0; i < layers_.size(); ++i) {
            const std::string site = "l2v.layer" + std::to_string(i);
            q = layers_[i].forward(q, mem, trace_probe(trace, site + ".self"),
                                   trace_probe(trace, site + ".cross"));
        }
    }
    return final_ln_.forward(q);
}

}  // namespace fan
