#include "fan/activation_module.hpp"

#include "fan/error.hpp"
#include "fan/ops.hpp"

namespace fan {

ActivationModule::ActivationModule(const std::vector<int>& vision_channels, int text_dim,
                                   int fusion_dim, int heads, bool enabled, ParamStore& ps,
                                   Rng& rng)
    : enabled_(enabled) {
    for (int i = 0; i < 4; ++i) {
        const std::string name = "activation.level" + std::to_string(i + 2);
        PerLevel lvl;
        lvl.vproj = LinearLayer(vision_channels[static_cast<size_t>(i)], fusion_dim,
                                name + ".vproj", ps, rng);
        if (enabled_) {
            lvl.wproj = LinearLayer(text_dim, fusion_dim, name + ".wproj", ps, rng);
            lvl.attn = MhaLayer(fusion_dim, heads, name + ".attn", ps, rng);
        }
        levels_.push_back(std::move(lvl));
    }
}

Tensor ActivationModule::activate_scale(int level, const Tensor& f_v, const Tensor& words,
                                        const std::vector<bool>& word_mask,
                                        AttentionProbe* probe) const {
    if (level < 2 || level > 5) throw ContractError("pyramid level must be in [2,5]");
    const PerLevel& lvl = levels_[static_cast<size_t>(level - 2)];
    const int h = f_v.dim(0), w = f_v.dim(1), c = f_v.dim(2);
    Tensor tokens = lvl.vproj.forward(reshape(f_v, {h * w, c}));
    if (enabled_) {
        Tensor word_kv = lvl.wproj.forward(words);
        Tensor attended = lvl.attn.forward(tokens, word_kv, word_kv, &word_mask, probe);
        tokens = add(tokens, attended);
    }
    return reshape(tokens, {h, w, tokens.dim(1)});
}

ActivatedPyramid ActivationModule::forward(const PyramidFeatures& pyramid, const Tensor& words,
                                           const std::vector<bool>& word_mask,
                                           ForwardTrace* trace) const {
    ActivatedPyramid out;
    for (int level = 2; level <= 5; ++level) {
        AttentionProbe* probe =
            enabled_ ? trace_probe(trace, "activation.level" + std::to_string(level)) : nullptr;
        out.level(level) = activate_scale(level, pyramid.level(level), words, word_mask, probe);
    }
    return out;
}

}  // namespace fan
