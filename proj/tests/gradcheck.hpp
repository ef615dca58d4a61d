#pragma once

// Central finite-difference gradient oracle. Independent of the graph's own
// backward pass: it only re-evaluates the forward objective at perturbed
// parameter values.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pcic/autograd.hpp"
#include "pcic/nn.hpp"

namespace pcic::testing {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t checked = 0;
    bool ok(double tol = 1e-3) const { return max_rel_err < tol; }
};

/// Checks d(objective)/d(param) for every scalar in the named tensors
/// against central differences at the given step (double precision).
/// `objective` must rebuild the graph from the current tensor contents.
inline GradCheckResult finite_difference_check(ParamStore& params,
                                               const std::vector<std::string>& names,
                                               const std::function<ag::Var()>& objective,
                                               double step = 1e-3) {
    GradCheckResult res;
    ag::GradMap analytic = ag::backward(objective());
    for (const auto& name : names) {
        Tensor& p = params.at(name);
        const Tensor* ga = nullptr;
        auto it = analytic.find(name);
        if (it != analytic.end()) ga = &it->second;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            const double orig = p[i];
            p[i] = orig + step;
            const double f_plus = objective()->value[0];
            p[i] = orig - step;
            const double f_minus = objective()->value[0];
            p[i] = orig;
            const double fd = (f_plus - f_minus) / (2.0 * step);
            const double an = ga ? (*ga)[i] : 0.0;
            const double denom = std::max(std::abs(fd), std::abs(an));
            ++res.checked;
            if (denom < 1e-7) continue;  // both gradients negligible
            const double rel = std::abs(fd - an) / denom;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst_param = name + "[" + std::to_string(i) + "]";
            }
        }
    }
    return res;
}

}  // namespace pcic::testing
