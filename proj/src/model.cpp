#include "fan/model.hpp"

#include "fan/error.hpp"
#include "fan/ops.hpp"

namespace fan {

Model::Model(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    cfg_.validate();
    if (cfg_.vocab_size < 4) {
        throw ConfigError("model requires vocab_size to be set from the dataset vocabulary");
    }
    Rng rng = Rng(init_seed).stream("init");
    text_encoder_ = TextEncoder(cfg_.vocab_size, cfg_.max_len, cfg_.text_dim, cfg_.text_layers,
                                cfg_.text_heads, cfg_.text_ffn_hidden, params_, rng);
    vision_encoder_ = VisionEncoder(cfg_.vision_channels, params_, rng);
    activation_ = ActivationModule(cfg_.vision_channels, cfg_.text_dim, cfg_.fusion_dim,
                                   cfg_.attn_heads, cfg_.use_activation, params_, rng);
    v2l_ = V2LDecoder(cfg_.text_dim, cfg_.fusion_dim, cfg_.attn_heads, cfg_.vpm_ffn_hidden,
                      vpm_mode_from_string(cfg_.vpm_mode), cfg_.vpm_self_attention, params_, rng);
    l2v_ = L2VDecoder(cfg_.text_dim, cfg_.fusion_dim, cfg_.l2v_heads, cfg_.l2v_ffn_hidden,
                      cfg_.l2v_layers, cfg_.l2v_encoder_layers, cfg_.use_l2v, params_, rng);
    mask_head_ = MaskHead(params_);
}

ForwardOutput Model::forward(const Tensor& image, const TokenSequence& tokens,
                             ForwardTrace* trace) const {
    ForwardOutput out;
    out.text = text_encoder_.forward(tokens, trace);
    out.pyramid = vision_encoder_.forward(image);

    // Fine-grained guidance is the word sequence; under the sentence-only
    // ablation every cross-modal site sees the single sentence token instead.
    Tensor words = cfg_.sentence_only ? out.text.f_s : out.text.f_w;
    std::vector<bool> word_mask =
        cfg_.sentence_only ? std::vector<bool>{false} : out.text.padding_mask;

    out.activated = activation_.forward(out.pyramid, words, word_mask, trace);
    out.aligned = v2l_.forward(out.activated, words, word_mask, trace);

    const Tensor& top = out.activated.level(5);
    Tensor memory = reshape(top, {top.dim(0) * top.dim(1), top.dim(2)});
    out.sentence_query = l2v_.forward(out.text.f_s, memory, trace);

    out.logits_s4 = mask_head_.similarity_logits(out.aligned.features, out.sentence_query);
    return out;
}

Tensor Model::forward_logits(const Tensor& image, const TokenSequence& tokens,
                             ForwardTrace* trace) const {
    return forward(image, tokens, trace).logits_s4;
}

BinaryMask Model::predict(const Tensor& image, const TokenSequence& tokens) const {
    NoGradGuard ng;
    Tensor logits = forward_logits(image, tokens);
    Tensor full = upsample_logits(logits, image.dim(0), image.dim(1));
    return binarize(full, cfg_.mask_threshold);
}

Tensor Model::loss(const Tensor& logits_s4, const Tensor& target_s4) const {
    Tensor bce = bce_with_logits_mean(logits_s4, target_s4);
    Tensor dice = dice_loss_with_logits(logits_s4, target_s4, 1.0);
    return add(scale(bce, cfg_.bce_weight), scale(dice, cfg_.dice_weight));
}

}  // namespace fan
