// Centered finite-difference gradient verification for scalar-valued maps.
// Used by the test suites to certify every analytic backward pass.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>

namespace irsce {

// Compares the analytic gradient of `loss` with centered differences over
// the n parameters starting at `params`. Returns the worst elementwise
// relative error; the absolute floor keeps near-zero gradients from blowing
// up the ratio.
inline double finite_difference_check(const std::function<double()>& loss, double* params,
                                      std::size_t n, const double* analytic,
                                      double step = 1e-5, double abs_floor = 1e-8) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double saved = params[i];
        params[i] = saved + step;
        const double up = loss();
        params[i] = saved - step;
        const double down = loss();
        params[i] = saved;
        const double fd = (up - down) / (2.0 * step);
        const double denom = std::max(abs_floor, std::max(std::abs(fd), std::abs(analytic[i])));
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

}  // namespace irsce
