#include "fan/metrics.hpp"

#include "fan/error.hpp"

namespace fan {

double iou(const BinaryMask& pred, const BinaryMask& gt) {
    if (pred.h != gt.h || pred.w != gt.w) {
        throw ShapeError("iou: mask dims differ, " + std::to_string(pred.h) + "x" +
                         std::to_string(pred.w) + " vs " + std::to_string(gt.h) + "x" +
                         std::to_string(gt.w));
    }
    int64_t inter = 0, uni = 0;
    for (size_t i = 0; i < pred.values.size(); ++i) {
        const bool a = pred.values[i] != 0;
        const bool b = gt.values[i] != 0;
        inter += (a && b) ? 1 : 0;
        uni += (a || b) ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double precision_at(const std::vector<double>& ious, double x) {
    if (x <= 0.0 || x >= 1.0) {
        throw ConfigError("precision_at threshold must lie in (0,1), got " + std::to_string(x));
    }
    if (ious.empty()) throw ContractError("precision_at: empty IoU list");
    int64_t hits = 0;
    for (double v : ious) hits += v >= x ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(ious.size());
}

}  // namespace fan
