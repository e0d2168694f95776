#pragma once

// Test-only central finite-difference oracle for adapter factor gradients.
// Perturbs raw factor entries and re-evaluates the scalar loss; stays
// independent of the analytic backward path it checks.

#include <cmath>
#include <functional>

#include "dylora/adapter.hpp"
#include "dylora/matrix.hpp"

namespace dylora::testing {

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t entries = 0;
};

// loss_fn evaluates the scalar loss of the adapter as-is.
inline GradCheckResult check_factor_gradients(
    DyLoraAdapter& a, int b, const Matrix& analytic_up, const Matrix& analytic_dw,
    const std::function<double(const DyLoraAdapter&)>& loss_fn, double step = 1e-5) {
    GradCheckResult res;
    auto rel_err = [](double got, double want) {
        const double denom = std::max({std::fabs(got), std::fabs(want), 1e-3});
        return std::fabs(got - want) / denom;
    };
    const auto ub = static_cast<std::size_t>(b);
    for (std::size_t i = 0; i < a.w_up.rows(); ++i) {
        for (std::size_t j = 0; j < ub; ++j) {
            const double orig = a.w_up.at(i, j);
            a.w_up.at(i, j) = orig + step;
            const double hi = loss_fn(a);
            a.w_up.at(i, j) = orig - step;
            const double lo = loss_fn(a);
            a.w_up.at(i, j) = orig;
            const double numeric = (hi - lo) / (2.0 * step);
            res.max_rel_err = std::max(res.max_rel_err,
                                       rel_err(analytic_up.at(i, j), numeric));
            ++res.entries;
        }
    }
    for (std::size_t i = 0; i < ub; ++i) {
        for (std::size_t j = 0; j < a.w_dw.cols(); ++j) {
            const double orig = a.w_dw.at(i, j);
            a.w_dw.at(i, j) = orig + step;
            const double hi = loss_fn(a);
            a.w_dw.at(i, j) = orig - step;
            const double lo = loss_fn(a);
            a.w_dw.at(i, j) = orig;
            const double numeric = (hi - lo) / (2.0 * step);
            res.max_rel_err = std::max(res.max_rel_err,
                                       rel_err(analytic_dw.at(i, j), numeric));
            ++res.entries;
        }
    }
    return res;
}

} // namespace dylora::testing
