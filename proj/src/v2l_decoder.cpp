#include "fan/v2l_decoder.hpp"

#include "fan/error.hpp"
#include "fan/ops.hpp"

namespace fan {

VpmMode vpm_mode_from_string(const std::string& s) {
    if (s == "none") return VpmMode::None;
    if (s == "single") return VpmMode::SingleScale;
    if (s == "multi") return VpmMode::MultiScale;
    throw ConfigError("vpm_mode must be one of none|single|multi, got '" + s + "'");
}

std::string vpm_mode_to_string(VpmMode m) {
    switch (m) {
        case VpmMode::None: return "none";
        case VpmMode::SingleScale: return "single";
        case VpmMode::MultiScale: return "multi";
    }
    return "multi";
}

VisionProjectionModule::VisionProjectionModule(int dim, int heads, int ffn_hidden,
                                               bool self_attention, const std::string& name,
                                               ParamStore& ps, Rng& rng)
    : self_attention_(self_attention), dim_(dim) {
    if (self_attention_) {
        ln_self_ = LayerNormLayer(dim, name + ".ln_self", ps);
        self_attn_ = MhaLayer(dim, heads, name + ".self_attn", ps, rng);
    }
    ln_cross_ = LayerNormLayer(dim, name + ".ln_cross", ps);
    cross_attn_ = MhaLayer(dim, heads, name + ".cross_attn", ps, rng);
    ln_ffn_ = LayerNormLayer(dim, name + ".ln_ffn", ps);
    ffn_ = FfnLayer(dim, ffn_hidden, name + ".ffn", ps, rng);
}

Tensor VisionProjectionModule::forward(const Tensor& f_c, const Tensor& words_proj,
                                       const std::vector<bool>& word_mask, ForwardTrace* trace,
                                       const std::string& site) const {
    const int h = f_c.dim(0), w = f_c.dim(1), d = f_c.dim(2);
    if (d != dim_) {
        throw ShapeError("vision projection: channel dim " + std::to_string(d) +
                         " does not match configured " + std::to_string(dim_));
    }
    const int l = words_proj.dim(0);
    Tensor vision = add(reshape(f_c, {h * w, d}), positional_embedding_2d(h, w, d));

    if (self_attention_) {
        // vision tokens never masked; word mask appended behind them
        Tensor tokens = concat_rows(vision, words_proj);
        std::vector<bool> token_mask(static_cast<size_t>(h * w), false);
        token_mask.insert(token_mask.end(), word_mask.begin(), word_mask.end());
        Tensor n = ln_self_.forward(tokens);
        tokens = add(tokens, self_attn_.forward(n, n, n, &token_mask,
                                                trace_probe(trace, site + ".self")));
        vision = slice_rows(tokens, 0, h * w);
    }

    Tensor q = ln_cross_.forward(vision);
    vision = add(vision, cross_attn_.forward(q, words_proj, words_proj, &word_mask,
                                             trace_probe(trace, site + ".cross")));
    vision = add(vision, ffn_.forward(ln_ffn_.forward(vision)));
    (void)l;
    return reshape(vision, {h, w, d});
}

SmoothConv::SmoothConv(int dim, const std::string& name, ParamStore& ps, Rng& rng) {
    kernel = ps.add(name + ".kernel", init_scaled({3, 3, dim, dim}, 9 * dim, rng));
    bias = ps.add(name + ".bias", Tensor::zeros({dim}));
}

Tensor SmoothConv::forward(const Tensor& x) const {
    Tensor y = conv2d(x, kernel, 1, 1);
    const int h = y.dim(0), w = y.dim(1), c = y.dim(2);
    return reshape(add_rowvec(reshape(y, {h * w, c}), bias), {h, w, c});
}

V2LDecoder::V2LDecoder(int text_dim, int fusion_dim, int heads, int ffn_hidden, VpmMode mode,
                       bool vpm_self_attention, ParamStore& ps, Rng& rng)
    : mode_(mode) {
    if (mode_ != VpmMode::None) {
        word_proj_ = LinearLayer(text_dim, fusion_dim, "v2l.word_proj", ps, rng);
        if (mode_ == VpmMode::MultiScale) {
            for (int level = 2; level <= 5; ++level) {
                vpms_.emplace_back(fusion_dim, heads, ffn_hidden, vpm_self_attention,
                                   "v2l.vpm.level" + std::to_string(level), ps, rng);
            }
        } else {
            vpms_.emplace_back(fusion_dim, heads, ffn_hidden, vpm_self_attention,
                               "v2l.vpm.level5", ps, rng);
        }
    }
    for (int i = 0; i < 3; ++i) {
        // smoothing after the additions at levels 4, 3, 2
        smooth_[static_cast<size_t>(i)] =
            SmoothConv(fusion_dim, "v2l.fpn.smooth" + std::to_string(4 - i), ps, rng);
    }
}

Tensor V2LDecoder::fuse(const std::array<Tensor, 4>& levels) const {
    // levels[0..3] hold pyramid levels 2..5
    Tensor top = levels[3];
    for (int i = 2; i >= 0; --i) {
        const Tensor& lower = levels[static_cast<size_t>(i)];
        if (lower.dim(0) != 2 * top.dim(0) || lower.dim(1) != 2 * top.dim(1) ||
            lower.dim(2) != top.dim(2)) {
            throw ShapeError("fpn fuse: level " + std::to_string(i + 2) + " shape " +
                             shape_str(lower.shape()) + " does not extend " +
                             shape_str(top.shape()));
        }
        Tensor up = bilinear_upsample(top, lower.dim(0), lower.dim(1));
        top = smooth_[static_cast<size_t>(2 - i)].forward(add(lower, up));
    }
    return top;
}

AlignedVisualMap V2LDecoder::forward(const ActivatedPyramid& pyramid, const Tensor& f_w,
                                     const std::vector<bool>& word_mask,
                                     ForwardTrace* trace) const {
    std::array<Tensor, 4> levels;
    if (mode_ == VpmMode::None) {
        levels = pyramid.levels;
    } else {
        Tensor words = word_proj_.forward(f_w);
        if (mode_ == VpmMode::MultiScale) {
            for (int level = 2; level <= 5; ++level) {
                levels[static_cast<size_t>(level - 2)] =
                    vpms_[static_cast<size_t>(level - 2)].forward(
                        pyramid.level(level), words, word_mask, trace,
                        "v2l.vpm.level" + std::to_string(level));
            }
        } else {
            levels = pyramid.levels;
            levels[3] = vpms_[0].forward(pyramid.level(5), words, word_mask, trace,
                                         "v2l.vpm.level5");
        }
    }
    return AlignedVisualMap{fuse(levels)};
}

}  // namespace fan
