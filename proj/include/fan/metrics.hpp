#pragma once

#include <vector>

#include "fan/image_io.hpp"

namespace fan {

// |intersection| / |union|; 1.0 when both masks are empty.
double iou(const BinaryMask& pred, const BinaryMask& gt);

// Fraction of samples with IoU >= x; x must lie in (0,1).
double precision_at(const std::vector<double>& ious, double x);

}  // namespace fan
