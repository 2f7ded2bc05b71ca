#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fan/tensor.hpp"

namespace fan {

struct GradCheckOptions {
    double eps = 1e-5;
    // Coordinates checked per parameter; larger tensors are subsampled.
    int max_coords_per_param = 8;
    uint64_t seed = 0;
    // Relative-error denominator floor; below it the comparison is absolute.
    double denom_floor = 1e-3;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> per_param;
    // Coordinates whose +/-eps evaluations landed in different ReLU linear
    // regions; their finite differences are meaningless and were skipped.
    int skipped_coords = 0;
    int checked_coords = 0;

    double max_rel_err() const;
};

// Central-difference check of reverse-mode gradients. `f` rebuilds the graph
// from the current parameter values and returns the scalar loss; `params` are
// the leaves to perturb. The analytic gradient comes from one backward pass,
// the numeric one from (f(x+eps) - f(x-eps)) / (2 eps) per sampled coordinate.
// Coordinates whose perturbation crosses a ReLU kink are detected via
// activation sign signatures and excluded.
GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           const GradCheckOptions& opts = {});

}  // namespace fan
