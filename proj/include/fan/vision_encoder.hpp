#pragma once

#include <array>
#include <vector>

#include "fan/nn.hpp"
#include "fan/tensor.hpp"

namespace fan {

// Hierarchical visual features at strides 4/8/16/32 of the input image.
struct PyramidFeatures {
    std::array<Tensor, 4> levels;  // index i-2 holds the stride-2^i map

    const Tensor& level(int i) const { return levels[static_cast<size_t>(i - 2)]; }
    Tensor& level(int i) { return levels[static_cast<size_t>(i - 2)]; }
};

// conv -> per-position layer norm over channels -> ReLU
struct ConvBlock {
    Tensor kernel;  // [kh x kw x c_in x c_out]
    Tensor bias;    // [c_out]
    LayerNormLayer ln;
    int stride = 1;
    int padding = 0;

    ConvBlock() = default;
    ConvBlock(int kh, int kw, int c_in, int c_out, int stride, int padding,
              const std::string& name, ParamStore& ps, Rng& rng, bool backbone = false);
    Tensor forward(const Tensor& x) const;
};

// Strided convolutional pyramid: a stride-4 stem block followed by three
// stride-2 stages, one output per stage. All parameters are tagged as
// backbone so the optimizer can scale their learning rate.
class VisionEncoder {
public:
    VisionEncoder() = default;
    // channels: output dims for levels 2..5
    VisionEncoder(const std::vector<int>& channels, ParamStore& ps, Rng& rng);

    PyramidFeatures forward(const Tensor& image) const;

private:
    ConvBlock stem_patch_, stem_refine_;
    ConvBlock stage3_, stage4_, stage5_;
};

}  // namespace fan
