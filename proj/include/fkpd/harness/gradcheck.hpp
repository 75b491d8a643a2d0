// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "fkpd/numeric/errors.hpp"

namespace fkpd {

struct GradCheckResult {
    double relative_error = 0.0; // ||analytic - numeric|| / max(||analytic||, ||numeric||)
    double max_abs_error = 0.0;
    std::vector<double> numeric;
};

/// Central differences of `f` at `x` with step h.
inline std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                            std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f(x);
        x[i] = keep - h;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

inline GradCheckResult compare_gradients(std::span<const double> analytic,
                                         std::vector<double> numeric) {
    if (analytic.size() != numeric.size()) throw ShapeError("gradcheck: size mismatch");
    GradCheckResult r;
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double d = analytic[i] - numeric[i];
        diff += d * d;
        na += analytic[i] * analytic[i];
        nn += numeric[i] * numeric[i];
        r.max_abs_error = std::max(r.max_abs_error, std::abs(d));
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    r.relative_error = std::sqrt(diff) / scale;
    r.numeric = std::move(numeric);
    return r;
}

inline GradCheckResult gradcheck(const std::function<double(std::span<const double>)>& f,
                                 const std::vector<double>& x, std::span<const double> analytic,
                                 double h = 1e-5) {
    return compare_gradients(analytic, numeric_gradient(f, x, h));
}

} // namespace fkpd
