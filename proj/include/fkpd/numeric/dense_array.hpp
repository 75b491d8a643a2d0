// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fkpd/numeric/errors.hpp"

namespace fkpd {

/// Row-major array of doubles. Rank 1 arrays are viewed as a single row
/// by the matrix helpers below.
class DenseArray {
public:
    DenseArray() = default;

    explicit DenseArray(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)) {
        check_shape(shape_);
        data_.assign(product(shape_), fill);
    }

    DenseArray(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape(shape_);
        if (product(shape_) != data_.size()) {
            throw ShapeError("DenseArray: shape " + shape_string(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
        }
    }

    static DenseArray matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return DenseArray({rows, cols}, fill);
    }

    static DenseArray vector(std::vector<double> values) {
        const std::size_t n = values.size();
        return DenseArray({n}, std::move(values));
    }

    static DenseArray scalar(double v) { return DenseArray({1, 1}, std::vector<double>{v}); }

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::size_t rows() const noexcept {
        if (shape_.empty()) return 0;
        return shape_.size() == 1 ? 1 : shape_[0];
    }
    std::size_t cols() const noexcept {
        if (shape_.empty()) return 0;
        if (shape_.size() == 1) return shape_[0];
        std::size_t c = 1;
        for (std::size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
        return c;
    }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols() + c]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::vector<double>& raw() noexcept { return data_; }
    const std::vector<double>& raw() const noexcept { return data_; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols(), cols()};
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    DenseArray reshaped(std::vector<std::size_t> shape) const {
        return DenseArray(std::move(shape), data_);
    }

    bool operator==(const DenseArray& o) const = default;

    static std::size_t product(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    }

    static std::string shape_string(const std::vector<std::size_t>& shape) {
        std::ostringstream os;
        os << '(';
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
        os << ')';
        return os.str();
    }

private:
    static void check_shape(const std::vector<std::size_t>& shape) {
        // zero-length leading dims are allowed (empty batches, zero-dim states)
        if (shape.empty()) throw ShapeError("DenseArray: empty shape");
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

inline void require_finite(const DenseArray& a, const char* what) {
    if (!a.all_finite()) throw NumericError(std::string(what) + ": non-finite entries");
}

inline void require_same_shape(const DenseArray& a, const DenseArray& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(what) + ": shape mismatch " +
                         DenseArray::shape_string(a.shape()) + " vs " +
                         DenseArray::shape_string(b.shape()));
    }
}

// Kernels shared by the plain and taped code paths, so both produce
// bitwise-identical values.
namespace kernels {

/// out[r x o] = x[r x i] * w[i x o]
inline void matmul(std::span<const double> x, std::span<const double> w, std::span<double> out,
                   std::size_t rows, std::size_t inner, std::size_t outer) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * inner;
        double* orow = out.data() + r * outer;
        for (std::size_t k = 0; k < inner; ++k) {
            const double xv = xr[k];
            if (xv == 0.0) continue;
            const double* wk = w.data() + k * outer;
            for (std::size_t c = 0; c < outer; ++c) orow[c] += xv * wk[c];
        }
    }
}

/// gx[r x i] += g[r x o] * w^T
inline void matmul_grad_input(std::span<const double> g, std::span<const double> w,
                              std::span<double> gx, std::size_t rows, std::size_t inner,
                              std::size_t outer) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g.data() + r * outer;
        double* gxr = gx.data() + r * inner;
        for (std::size_t k = 0; k < inner; ++k) {
            const double* wk = w.data() + k * outer;
            double acc = 0.0;
            for (std::size_t c = 0; c < outer; ++c) acc += gr[c] * wk[c];
            gxr[k] += acc;
        }
    }
}

/// gw[i x o] += x^T * g
inline void matmul_grad_weight(std::span<const double> x, std::span<const double> g,
                               std::span<double> gw, std::size_t rows, std::size_t inner,
                               std::size_t outer) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * inner;
        const double* gr = g.data() + r * outer;
        for (std::size_t k = 0; k < inner; ++k) {
            const double xv = xr[k];
            if (xv == 0.0) continue;
            double* gwk = gw.data() + k * outer;
            for (std::size_t c = 0; c < outer; ++c) gwk[c] += xv * gr[c];
        }
    }
}

inline void add_row_bias(std::span<double> x, std::span<const double> b, std::size_t rows) {
    const std::size_t cols = b.size();
    for (std::size_t r = 0; r < rows; ++r) {
        double* xr = x.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) xr[c] += b[c];
    }
}

inline double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// x * sigmoid(x)
inline double silu(double x) { return x * sigmoid(x); }

inline double silu_grad(double x) {
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

/// Mean of each consecutive block of `block_rows` rows (all columns).
inline void block_mean(std::span<const double> x, std::span<double> out, std::size_t block_rows,
                       std::size_t cols) {
    const std::size_t block = block_rows * cols;
    const double inv = 1.0 / static_cast<double>(block);
    for (std::size_t g = 0; g < out.size(); ++g) {
        double acc = 0.0;
        const double* xb = x.data() + g * block;
        for (std::size_t i = 0; i < block; ++i) acc += xb[i];
        out[g] = acc * inv;
    }
}

} // namespace kernels

} // namespace fkpd
