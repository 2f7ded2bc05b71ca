#pragma once

#include "fan/image_io.hpp"
#include "fan/nn.hpp"
#include "fan/v2l_decoder.hpp"

namespace fan {

// Similarity head: the mask logits are the scaled dot product between every
// position of the aligned visual map and the updated sentence embedding,
// plus a learned scalar bias. One matrix multiplication, nothing else.
class MaskHead {
public:
    MaskHead() = default;
    explicit MaskHead(ParamStore& ps);

    // visual: [h x w x D], sentence: [1 x D] -> logits [h x w]
    Tensor similarity_logits(const Tensor& visual, const Tensor& sentence) const;

private:
    Tensor bias_;  // [1]
};

// Bilinear upsampling of stride-4 logits to the full image size; the target
// must be exactly 4x the logit dims. Thresholding happens after this.
Tensor upsample_logits(const Tensor& logits, int out_h, int out_w);

// Foreground iff sigmoid(logit) >= threshold; threshold lives in (0,1).
BinaryMask binarize(const Tensor& logits, double threshold = 0.35);

// 1 - (2*sum(p*y) + smooth) / (sum(p) + sum(y) + smooth) with p = sigmoid(z).
Tensor dice_loss_with_logits(const Tensor& logits, const Tensor& target, double smooth = 1.0);

// Center-sampled nearest-neighbor downsample by an integer factor, used to
// build the stride-4 training target from a full-resolution mask.
Tensor downsample_mask_nearest(const BinaryMask& mask, int factor);

}  // namespace fan
