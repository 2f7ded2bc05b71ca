#include "fan/vision_encoder.hpp"

#include "fan/error.hpp"
#include "fan/ops.hpp"

namespace fan {

ConvBlock::ConvBlock(int kh, int kw, int c_in, int c_out, int stride_, int padding_,
                     const std::string& name, ParamStore& ps, Rng& rng, bool backbone)
    : stride(stride_), padding(padding_) {
    kernel = ps.add(name + ".kernel", init_kaiming({kh, kw, c_in, c_out}, kh * kw * c_in, rng),
                    backbone);
    bias = ps.add(name + ".bias", Tensor::zeros({c_out}), backbone);
    ln = LayerNormLayer(c_out, name + ".ln", ps, backbone);
}

Tensor ConvBlock::forward(const Tensor& x) const {
    Tensor y = conv2d(x, kernel, stride, padding);
    const int h = y.dim(0), w = y.dim(1), c = y.dim(2);
    Tensor flat = add_rowvec(reshape(y, {h * w, c}), bias);
    flat = relu(ln.forward(flat));
    return reshape(flat, {h, w, c});
}

VisionEncoder::VisionEncoder(const std::vector<int>& channels, ParamStore& ps, Rng& rng) {
    if (channels.size() != 4) {
        throw ConfigError("vision encoder needs 4 channel dims, got " +
                          std::to_string(channels.size()));
    }
    stem_patch_ = ConvBlock(4, 4, 3, channels[0], 4, 0, "vision.stem.patch", ps, rng, true);
    stem_refine_ = ConvBlock(3, 3, channels[0], channels[0], 1, 1, "vision.stem.refine", ps, rng,
                             true);
    stage3_ = ConvBlock(3, 3, channels[0], channels[1], 2, 1, "vision.stage3", ps, rng, true);
    stage4_ = ConvBlock(3, 3, channels[1], channels[2], 2, 1, "vision.stage4", ps, rng, true);
    stage5_ = ConvBlock(3, 3, channels[2], channels[3], 2, 1, "vision.stage5", ps, rng, true);
}

PyramidFeatures VisionEncoder::forward(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(2) != 3) {
        throw ShapeError("vision encoder expects [H x W x 3], got " + shape_str(image.shape()));
    }
    if (image.dim(0) % 32 != 0 || image.dim(1) % 32 != 0) {
        throw ShapeError("image dims must be divisible by 32, got " + shape_str(image.shape()));
    }
    PyramidFeatures out;
    Tensor x = stem_refine_.forward(stem_patch_.forward(image));
    out.level(2) = x;
    x = stage3_.forward(x);
    out.level(3) = x;
    x = stage4_.forward(x);
    out.level(4) = x;
    x = stage5_.forward(x);
    out.level(5) = x;
    return out;
}

}  // namespace fan
