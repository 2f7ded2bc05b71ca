#include "fan/mask_head.hpp"

#include <cmath>

#include "fan/error.hpp"
#include "fan/ops.hpp"

namespace fan {

MaskHead::MaskHead(ParamStore& ps) { bias_ = ps.add("mask_head.bias", Tensor::zeros({1})); }

Tensor MaskHead::similarity_logits(const Tensor& visual, const Tensor& sentence) const {
    if (visual.rank() != 3) {
        throw ShapeError("similarity head expects [h x w x D] visual map, got " +
                         shape_str(visual.shape()));
    }
    if (sentence.rank() != 2 || sentence.dim(0) != 1 || sentence.dim(1) != visual.dim(2)) {
        throw ShapeError("similarity head: sentence " + shape_str(sentence.shape()) +
                         " does not match visual map " + shape_str(visual.shape()));
    }
    const int h = visual.dim(0), w = visual.dim(1), d = visual.dim(2);
    Tensor flat = reshape(visual, {h * w, d});
    Tensor scores = scale(matmul(flat, transpose2d(sentence)), 1.0 / std::sqrt(double(d)));
    return reshape(add_broadcast_scalar(scores, bias_), {h, w});
}

Tensor upsample_logits(const Tensor& logits, int out_h, int out_w) {
    if (logits.rank() != 2) {
        throw ShapeError("upsample_logits expects [h x w], got " + shape_str(logits.shape()));
    }
    if (out_h != 4 * logits.dim(0) || out_w != 4 * logits.dim(1)) {
        throw ShapeError("upsample_logits: target " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " must be 4x the logit dims " +
                         shape_str(logits.shape()));
    }
    return bilinear_upsample(logits, out_h, out_w);
}

BinaryMask binarize(const Tensor& logits, double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0) {
        throw ConfigError("binarize threshold must lie in (0,1), got " +
                          std::to_string(threshold));
    }
    if (logits.rank() != 2) {
        throw ShapeError("binarize expects [H x W] logits, got " + shape_str(logits.shape()));
    }
    BinaryMask mask;
    mask.h = logits.dim(0);
    mask.w = logits.dim(1);
    mask.values.resize(logits.vec().size());
    for (size_t i = 0; i < mask.values.size(); ++i) {
        const double z = logits.vec()[i];
        const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
        mask.values[i] = p >= threshold ? 1 : 0;
    }
    return mask;
}

Tensor dice_loss_with_logits(const Tensor& logits, const Tensor& target, double smooth) {
    if (logits.shape() != target.shape()) {
        throw ShapeError("dice loss: shape mismatch " + shape_str(logits.shape()) + " vs " +
                         shape_str(target.shape()));
    }
    for (double t : target.vec()) {
        if (t != 0.0 && t != 1.0) {
            throw DataError("dice loss: target values must be exactly 0 or 1, got " +
                            std::to_string(t));
        }
    }
    Tensor p = sigmoid(logits);
    Tensor intersection = sum(mul(p, target));
    Tensor numer = add_const(scale(intersection, 2.0), smooth);
    Tensor denom = add_const(add(sum(p), sum(target)), smooth);
    return add_const(neg(div(numer, denom)), 1.0);
}

Tensor downsample_mask_nearest(const BinaryMask& mask, int factor) {
    if (factor <= 0 || mask.h % factor != 0 || mask.w % factor != 0) {
        throw ShapeError("mask dims " + std::to_string(mask.h) + "x" + std::to_string(mask.w) +
                         " not divisible by factor " + std::to_string(factor));
    }
    const int oh = mask.h / factor, ow = mask.w / factor;
    std::vector<double> out(static_cast<size_t>(oh) * ow);
    const int off = factor / 2;
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            out[static_cast<size_t>(y) * ow + x] =
                mask.at(y * factor + off, x * factor + off) ? 1.0 : 0.0;
        }
    }
    return Tensor::from_data({oh, ow}, std::move(out));
}

}  // namespace fan
