// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fkpd/numeric/dense_array.hpp"

namespace fkpd {

/// Handle to a node on a Tape.
struct Var {
    std::size_t id = 0;
};

/// Reverse-mode tape over matrix-valued nodes. Nodes are appended in
/// evaluation order, so walking them backwards is a valid topological order.
///
/// Only the handful of primitives the training losses need are provided.
/// Parameter leaves carry their offset in the flattened parameter vector;
/// parameter_gradient() scatters their adjoints back into that layout
/// (several leaves may share an offset, their adjoints add up).
class Tape {
public:
    Var constant(DenseArray value) { return push(std::move(value), false, {}); }

    Var parameter(DenseArray value, std::size_t flat_offset) {
        Var v = push(std::move(value), true, {});
        nodes_[v.id].param_offset = static_cast<long>(flat_offset);
        return v;
    }

    const DenseArray& value(Var v) const { return nodes_.at(v.id).value; }
    double scalar(Var v) const {
        const DenseArray& a = value(v);
        if (a.size() != 1) throw ShapeError("Tape::scalar: node is not a scalar");
        return a[0];
    }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Adjoint of a node after backward(); zeros if the node was not reached.
    DenseArray gradient(Var v) const {
        const Node& n = nodes_.at(v.id);
        if (n.grad.empty()) return DenseArray(n.value.shape(), 0.0);
        return n.grad;
    }

    // -- primitives ------------------------------------------------------

    /// x[r x i] * w[i x o]
    Var matmul(Var x, Var w) {
        const DenseArray& xv = value(x);
        const DenseArray& wv = value(w);
        const std::size_t rows = xv.rows(), inner = xv.cols(), outer = wv.cols();
        if (wv.rows() != inner) {
            throw ShapeError("matmul: inner dimensions " + std::to_string(inner) + " and " +
                             std::to_string(wv.rows()) + " differ");
        }
        DenseArray out = DenseArray::matrix(rows, outer);
        kernels::matmul(xv.values(), wv.values(), out.values(), rows, inner, outer);
        return push(std::move(out), any_grad(x, w), [=](Tape& t, std::size_t self) {
            const DenseArray& g = t.nodes_[self].grad;
            if (t.nodes_[x.id].requires_grad) {
                kernels::matmul_grad_input(g.values(), t.value(w).values(),
                                           t.grad_ref(x).values(), rows, inner, outer);
            }
            if (t.nodes_[w.id].requires_grad) {
                kernels::matmul_grad_weight(t.value(x).values(), g.values(),
                                            t.grad_ref(w).values(), rows, inner, outer);
            }
        });
    }

    /// x[r x o] + b[o] broadcast over rows
    Var add_bias(Var x, Var b) {
        const DenseArray& xv = value(x);
        const DenseArray& bv = value(b);
        if (bv.size() != xv.cols()) throw ShapeError("add_bias: bias length mismatch");
        DenseArray out = xv;
        kernels::add_row_bias(out.values(), bv.values(), out.rows());
        const std::size_t rows = xv.rows(), cols = xv.cols();
        return push(std::move(out), any_grad(x, b), [=](Tape& t, std::size_t self) {
            const DenseArray& g = t.nodes_[self].grad;
            if (t.nodes_[x.id].requires_grad) accumulate(t.grad_ref(x), g);
            if (t.nodes_[b.id].requires_grad) {
                DenseArray& gb = t.grad_ref(b);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
            }
        });
    }

    Var silu(Var x) {
        DenseArray out = value(x);
        for (double& v : out.raw()) v = kernels::silu(v);
        return push(std::move(out), requires_grad(x), [=](Tape& t, std::size_t self) {
            const DenseArray& g = t.nodes_[self].grad;
            const DenseArray& xv = t.value(x);
            DenseArray& gx = t.grad_ref(x);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * kernels::silu_grad(xv[i]);
        });
    }

    Var sigmoid(Var x) {
        DenseArray out = value(x);
        for (double& v : out.raw()) v = kernels::sigmoid(v);
        return push(std::move(out), requires_grad(x), [=](Tape& t, std::size_t self) {
            const DenseArray& g = t.nodes_[self].grad;
            const DenseArray& y = t.nodes_[self].value;
            DenseArray& gx = t.grad_ref(x);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
        });
    }

    Var square(Var x) {
        DenseArray out = value(x);
        for (double& v : out.raw()) v = v * v;
        return push(std::move(out), requires_grad(x), [=](Tape& t, std::size_t self) {
            const DenseArray& g = t.nodes_[self].grad;
            const DenseArray& xv = t.value(x);
            DenseArray& gx = t.grad_ref(x);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * xv[i] * g[i];
        });
    }

    /// Elementwise a + b; either side may be a 1x1 scalar that broadcasts.
    Var add(Var a, Var b) { return binary(a, b, 1.0); }
    /// Elementwise a - b; either side may be a 1x1 scalar that broadcasts.
    Var sub(Var a, Var b) { return binary(a, b, -1.0); }

    Var scale(Var x, double c) {
        DenseArray out = value(x);
        for (double& v : out.raw()) v *= c;
        return push(std::move(out), requires_grad(x), [=](Tape& t, std::size_t self) {
            const DenseArray& g = t.nodes_[self].grad;
            DenseArray& gx = t.grad_ref(x);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
        });
    }

    Var add_scalar(Var x, double c) {
        DenseArray out = value(x);
        for (double& v : out.raw()) v += c;
        return push(std::move(out), requires_grad(x), [=](Tape& t, std::size_t self) {
            accumulate(t.grad_ref(x), t.nodes_[self].grad);
        });
    }

    /// Mean over each block of `block_rows` consecutive rows; result is (rows/block_rows) x 1.
    Var block_mean(Var x, std::size_t block_rows) {
        const DenseArray& xv = value(x);
        if (block_rows == 0 || xv.rows() % block_rows != 0) {
            throw ShapeError("block_mean: " + std::to_string(xv.rows()) +
                             " rows not divisible into blocks of " + std::to_string(block_rows));
        }
        const std::size_t groups = xv.rows() / block_rows, cols = xv.cols();
        DenseArray out = DenseArray::matrix(groups, 1);
        kernels::block_mean(xv.values(), out.values(), block_rows, cols);
        const double inv = 1.0 / static_cast<double>(block_rows * cols);
        return push(std::move(out), requires_grad(x), [=](Tape& t, std::size_t self) {
            const DenseArray& g = t.nodes_[self].grad;
            DenseArray& gx = t.grad_ref(x);
            const std::size_t block = block_rows * cols;
            for (std::size_t gi = 0; gi < groups; ++gi)
                for (std::size_t i = 0; i < block; ++i) gx[gi * block + i] += g[gi] * inv;
        });
    }

    Var sum(Var x) {
        double acc = 0.0;
        for (double v : value(x).raw()) acc += v;
        return push(DenseArray::scalar(acc), requires_grad(x), [=](Tape& t, std::size_t self) {
            const double g = t.nodes_[self].grad[0];
            for (double& v : t.grad_ref(x).raw()) v += g;
        });
    }

    Var mean(Var x) {
        const double n = static_cast<double>(value(x).size());
        if (n == 0) throw ShapeError("mean: empty node");
        return scale(sum(x), 1.0 / n);
    }

    /// Seeds d(root)/d(root) = 1 and propagates adjoints to every node.
    void backward(Var root) {
        const DenseArray& rv = value(root);
        if (rv.size() != 1) throw ShapeError("backward: root is not a scalar");
        if (!std::isfinite(rv[0])) throw NumericError("backward: non-finite loss");
        for (Node& n : nodes_) n.grad = DenseArray();
        grad_ref(root)[0] = 1.0;
        for (std::size_t i = root.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
            n.backward(*this, i);
        }
    }

    /// Adjoints of all parameter leaves scattered into a flat vector of length n_params.
    std::vector<double> parameter_gradient(std::size_t n_params) const {
        std::vector<double> out(n_params, 0.0);
        for (const Node& n : nodes_) {
            if (n.param_offset < 0 || n.grad.empty()) continue;
            const auto off = static_cast<std::size_t>(n.param_offset);
            if (off + n.grad.size() > n_params) {
                throw ShapeError("parameter_gradient: leaf exceeds parameter vector");
            }
            for (std::size_t i = 0; i < n.grad.size(); ++i) out[off + i] += n.grad[i];
        }
        return out;
    }

private:
    struct Node {
        DenseArray value;
        DenseArray grad;
        bool requires_grad = false;
        long param_offset = -1;
        std::function<void(Tape&, std::size_t)> backward;
    };

    Var push(DenseArray value, bool requires_grad, std::function<void(Tape&, std::size_t)> bw) {
        nodes_.push_back(Node{std::move(value), DenseArray(), requires_grad, -1, std::move(bw)});
        return Var{nodes_.size() - 1};
    }

    bool any_grad(Var a, Var b) const { return requires_grad(a) || requires_grad(b); }

    DenseArray& grad_ref(Var v) {
        Node& n = nodes_[v.id];
        if (n.grad.empty()) n.grad = DenseArray(n.value.shape(), 0.0);
        return n.grad;
    }

    static void accumulate(DenseArray& dst, const DenseArray& g) {
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }

    Var binary(Var a, Var b, double sign) {
        const DenseArray& av = value(a);
        const DenseArray& bv = value(b);
        const bool a_scalar = av.size() == 1, b_scalar = bv.size() == 1;
        if (!a_scalar && !b_scalar) require_same_shape(av, bv, "add/sub");
        const DenseArray& big = (a_scalar && !b_scalar) ? bv : av;
        DenseArray out(big.shape());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const double x = a_scalar ? av[0] : av[i];
            const double y = b_scalar ? bv[0] : bv[i];
            out[i] = sign > 0 ? x + y : x - y;
        }
        return push(std::move(out), any_grad(a, b), [=](Tape& t, std::size_t self) {
            const DenseArray& g = t.nodes_[self].grad;
            if (t.nodes_[a.id].requires_grad) {
                DenseArray& ga = t.grad_ref(a);
                for (std::size_t i = 0; i < g.size(); ++i) ga[a_scalar ? 0 : i] += g[i];
            }
            if (t.nodes_[b.id].requires_grad) {
                DenseArray& gb = t.grad_ref(b);
                for (std::size_t i = 0; i < g.size(); ++i) gb[b_scalar ? 0 : i] += sign * g[i];
            }
        });
    }

    std::vector<Node> nodes_;
};

/// Gradient of a scalar loss node with respect to the flat parameter vector.
inline std::vector<double> loss_gradient(Tape& tape, Var loss, std::size_t n_params) {
    tape.backward(loss);
    return tape.parameter_gradient(n_params);
}

} // namespace fkpd
