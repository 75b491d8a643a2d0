// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fkpd/numeric/dense_array.hpp"
#include "fkpd/numeric/rng.hpp"
#include "fkpd/numeric/tape.hpp"

namespace fkpd {

enum class Activation { silu, identity };

inline std::string to_string(Activation a) {
    return a == Activation::silu ? "silu" : "identity";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "silu") return Activation::silu;
    if (s == "identity") return Activation::identity;
    throw ConfigError("unknown activation '" + s + "'");
}

struct DenseLayer {
    DenseArray weight; // in x out
    DenseArray bias;   // out
};

/// Parameters of a fully connected network. The hidden activation is applied
/// after every layer except the last.
class MlpParams {
public:
    MlpParams() = default;

    MlpParams(std::vector<DenseLayer> layers, Activation hidden)
        : layers_(std::move(layers)), hidden_(hidden) {
        validate();
    }

    /// Zero-initialised network with the given layer widths (input first).
    static MlpParams zeros(const std::vector<std::size_t>& widths, Activation hidden) {
        if (widths.size() < 2) throw ConfigError("MlpParams: need at least input and output width");
        std::vector<DenseLayer> layers;
        for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
            layers.push_back({DenseArray::matrix(widths[i], widths[i + 1]),
                              DenseArray({widths[i + 1]}, 0.0)});
        }
        return MlpParams(std::move(layers), hidden);
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
    static MlpParams init(const std::vector<std::size_t>& widths, Activation hidden, Rng& rng) {
        MlpParams p = zeros(widths, hidden);
        for (DenseLayer& l : p.layers_) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.rows()));
            for (double& w : l.weight.raw()) w = rng.uniform(-bound, bound);
            for (double& b : l.bias.raw()) b = rng.uniform(-bound, bound);
        }
        return p;
    }

    std::size_t input_dim() const { return layers_.front().weight.rows(); }
    std::size_t output_dim() const { return layers_.back().weight.cols(); }
    Activation hidden_activation() const noexcept { return hidden_; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::vector<DenseLayer>& layers() noexcept { return layers_; }

    std::vector<std::size_t> widths() const {
        std::vector<std::size_t> w{input_dim()};
        for (const DenseLayer& l : layers_) w.push_back(l.weight.cols());
        return w;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const DenseLayer& l : layers_) n += l.weight.size() + l.bias.size();
        return n;
    }

    /// Layer by layer: weight (row-major) then bias.
    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(parameter_count());
        for (const DenseLayer& l : layers_) {
            out.insert(out.end(), l.weight.raw().begin(), l.weight.raw().end());
            out.insert(out.end(), l.bias.raw().begin(), l.bias.raw().end());
        }
        return out;
    }

    void assign(std::span<const double> flat) {
        if (flat.size() != parameter_count()) {
            throw ShapeError("MlpParams::assign: expected " + std::to_string(parameter_count()) +
                             " values, got " + std::to_string(flat.size()));
        }
        std::size_t k = 0;
        for (DenseLayer& l : layers_) {
            for (double& w : l.weight.raw()) w = flat[k++];
            for (double& b : l.bias.raw()) b = flat[k++];
        }
    }

    bool operator==(const MlpParams& o) const {
        if (hidden_ != o.hidden_ || layers_.size() != o.layers_.size()) return false;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (!(layers_[i].weight == o.layers_[i].weight) || !(layers_[i].bias == o.layers_[i].bias))
                return false;
        }
        return true;
    }

private:
    void validate() const {
        if (layers_.empty()) throw ConfigError("MlpParams: no layers");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const DenseLayer& l = layers_[i];
            if (l.weight.rank() != 2 || l.weight.rows() == 0 || l.weight.cols() == 0)
                throw ShapeError("MlpParams: layer " + std::to_string(i) + " weight is not a matrix");
            if (l.bias.size() != l.weight.cols())
                throw ShapeError("MlpParams: layer " + std::to_string(i) + " bias length mismatch");
            if (i > 0 && layers_[i - 1].weight.cols() != l.weight.rows())
                throw ShapeError("MlpParams: layers " + std::to_string(i - 1) + " and " +
                                 std::to_string(i) + " do not chain");
        }
    }

    std::vector<DenseLayer> layers_;
    Activation hidden_ = Activation::silu;
};

namespace detail {
inline void check_input(const MlpParams& params, const DenseArray& input) {
    if (input.cols() != params.input_dim()) {
        throw ShapeError("mlp_forward: input has " + std::to_string(input.cols()) +
                         " columns, network expects " + std::to_string(params.input_dim()));
    }
}
} // namespace detail

/// Forward pass. Accepts a single input vector or a batch (rows = samples);
/// a rank-1 input gives a rank-1 output.
inline DenseArray mlp_forward(const MlpParams& params, const DenseArray& input) {
    detail::check_input(params, input);
    const std::size_t rows = input.rows();
    DenseArray h = input.rank() == 1 ? input.reshaped({1, input.size()}) : input;
    const auto& layers = params.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const DenseLayer& l = layers[i];
        DenseArray out = DenseArray::matrix(rows, l.weight.cols());
        kernels::matmul(h.values(), l.weight.values(), out.values(), rows, l.weight.rows(),
                        l.weight.cols());
        kernels::add_row_bias(out.values(), l.bias.values(), rows);
        if (i + 1 < layers.size() && params.hidden_activation() == Activation::silu) {
            for (double& v : out.raw()) v = kernels::silu(v);
        }
        h = std::move(out);
    }
    if (input.rank() == 1) return h.reshaped({h.size()});
    return h;
}

/// Same computation recorded on a tape, with every weight and bias registered
/// as a parameter leaf at its offset in flatten() order.
inline Var mlp_forward(Tape& tape, const MlpParams& params, Var input) {
    detail::check_input(params, tape.value(input));
    Var h = input;
    std::size_t offset = 0;
    const auto& layers = params.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const DenseLayer& l = layers[i];
        Var w = tape.parameter(l.weight, offset);
        offset += l.weight.size();
        Var b = tape.parameter(l.bias, offset);
        offset += l.bias.size();
        h = tape.add_bias(tape.matmul(h, w), b);
        if (i + 1 < layers.size() && params.hidden_activation() == Activation::silu) {
            h = tape.silu(h);
        }
    }
    return h;
}

} // namespace fkpd
