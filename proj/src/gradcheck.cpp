#include "fan/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "fan/error.hpp"
#include "fan/ops.hpp"
#include "fan/rng.hpp"

namespace fan {

double GradCheckReport::max_rel_err() const {
    double worst = 0.0;
    for (const auto& e : per_param) worst = std::max(worst, e.max_rel_err);
    return worst;
}

GradCheckReport grad_check(const std::function<Tensor()>& f,
                           const std::vector<std::pair<std::string, Tensor>>& params,
                           const GradCheckOptions& opts) {
    GradCheckReport report;
    Rng rng = Rng(opts.seed).stream("gradcheck");

    for (const auto& [name, t] : params) {
        if (!t.requires_grad()) {
            throw ContractError("grad_check: parameter '" + name + "' does not require grad");
        }
        const_cast<Tensor&>(t).zero_grad();
    }

    Tensor loss = f();
    if (loss.numel() != 1) {
        throw ContractError("grad_check: f must return a scalar, got " +
                            shape_str(loss.shape()));
    }
    loss.backward();

    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const auto& [name, t] : params) {
        analytic.push_back(const_cast<Tensor&>(t).grad());
    }

    for (size_t pi = 0; pi < params.size(); ++pi) {
        const auto& name = params[pi].first;
        Tensor t = params[pi].second;
        const int64_t n = t.numel();

        std::vector<int64_t> coords;
        if (n <= opts.max_coords_per_param) {
            for (int64_t i = 0; i < n; ++i) coords.push_back(i);
        } else {
            for (int c = 0; c < opts.max_coords_per_param; ++c) {
                coords.push_back(rng.uniform_int(static_cast<int>(n)));
            }
        }

        GradCheckEntry entry{name, 0.0};
        std::vector<uint8_t> signs_plus, signs_minus;
        for (int64_t ci : coords) {
            const double saved = t.vec()[static_cast<size_t>(ci)];
            double fp, fm;
            {
                NoGradGuard ng;
                signs_plus.clear();
                t.vec()[static_cast<size_t>(ci)] = saved + opts.eps;
                set_relu_sign_log(&signs_plus);
                fp = f().item();
                signs_minus.clear();
                t.vec()[static_cast<size_t>(ci)] = saved - opts.eps;
                set_relu_sign_log(&signs_minus);
                fm = f().item();
                set_relu_sign_log(nullptr);
            }
            t.vec()[static_cast<size_t>(ci)] = saved;

            if (signs_plus != signs_minus) {
                ++report.skipped_coords;  // stepped across a kink
                continue;
            }
            ++report.checked_coords;
            const double numeric = (fp - fm) / (2.0 * opts.eps);
            const double analytic_v = analytic[pi][static_cast<size_t>(ci)];
            const double denom =
                std::max(std::fabs(analytic_v) + std::fabs(numeric), opts.denom_floor);
            entry.max_rel_err =
                std::max(entry.max_rel_err, std::fabs(analytic_v - numeric) / denom);
        }
        report.per_param.push_back(std::move(entry));
    }

    return report;
}

}  // namespace fan
