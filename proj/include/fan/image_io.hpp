#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fan/tensor.hpp"

namespace fan {

// Boolean pixel grid, same dims as the image it belongs to.
struct BinaryMask {
    int h = 0;
    int w = 0;
    std::vector<uint8_t> values;  // 0 = background, 1 = foreground

    int64_t count() const {
        int64_t n = 0;
        for (uint8_t v : values) n += v;
        return n;
    }
    bool empty_mask() const { return count() == 0; }
    uint8_t at(int y, int x) const { return values[static_cast<size_t>(y) * w + x]; }
};

// Binary PPM (P6), 8-bit, values scaled to [0,1]. Returns [H x W x 3].
Tensor read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Tensor& image);

// Binary PGM (P5): 0 = background, 255 = foreground.
BinaryMask read_pgm(const std::string& path);
void write_pgm(const std::string& path, const BinaryMask& mask);

}  // namespace fan
