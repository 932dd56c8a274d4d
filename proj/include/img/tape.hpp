// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "img/matrix.hpp"
#include "img/params.hpp"

namespace img::nn {

using Mask = std::vector<std::uint8_t>;

inline int count_true(const Mask& m) {
    int n = 0;
    for (auto v : m) n += (v != 0);
    return n;
}

// Handle into a Tape node.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over Matrix values. One tape records one forward
// pass; backward() accumulates parameter gradients into a GradStore.
// Construction order is the topological order, so backward is a single
// reverse sweep. With record=false no closures are kept (inference mode).
class Tape {
public:
    explicit Tape(const ParamStore* params = nullptr, bool record = true)
        : params_(params), record_(record) {
        nodes_.reserve(2048);
    }

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const { return record_; }

    // Leaves.
    Var input(Matrix m);
    Var scalar(double v);
    Var param(int param_id);

    const Matrix& value(Var v) const { return nodes_[v.id].value; }
    double scalar_value(Var v) const { return nodes_[v.id].value.at(0, 0); }

    // Linear algebra.
    Var matmul(Var a, Var b);     // a * b
    Var matmul_nt(Var a, Var b);  // a * b^T
    Var matmul_tn(Var a, Var b);  // a^T * b
    Var affine(Var x, Var w, Var b);  // x * w + row-broadcast b, fused

    // Elementwise / broadcast.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var add_row(Var a, Var row);  // [R,C] + [1,C]
    Var add_col(Var a, Var col);  // [R,C] + [R,1]
    Var mul_row(Var a, Var row);  // [R,C] * [1,C]
    Var scale(Var a, double c);
    Var add_const(Var a, double c);
    Var mul_scalar(Var a, Var s);  // s is [1,1]

    // Shape.
    Var transpose(Var a);
    Var concat_cols(const std::vector<Var>& parts);
    Var concat_rows(const std::vector<Var>& parts);
    Var slice_cols(Var a, int c0, int c1);
    Var slice_rows(Var a, int r0, int r1);
    Var reverse_rows(Var a);
    Var repeat_row(Var row, int n);

    // Nonlinearities.
    Var gelu(Var a);
    Var sigmoid(Var a);
    Var tanh_(Var a);
    Var relu(Var a);
    Var log_(Var a);
    Var reciprocal(Var a);
    Var clamp(Var a, double lo, double hi);

    // Normalization / attention primitives.
    Var layer_norm(Var x, Var gain, Var bias, double eps);
    // Row softmax; masked columns get exactly zero weight. With
    // ordered_sum the exp reduction is accumulated in descending value
    // order, making the result invariant to column permutations.
    Var softmax_rows(Var x, const Mask* col_mask = nullptr, bool ordered_sum = false);
    Var log_softmax_rows(Var x, const Mask* col_mask = nullptr);

    // Same-padded 1D convolution along rows. x [T,din], w [(k*din),dout],
    // b [1,dout]. Caller zeroes masked input rows beforehand.
    Var conv1d_same(Var x, Var w, Var b, int k);

    // Full GRU scan over rows of x; returns hidden per step [T,h].
    // Gate layout in the 3h-wide weights is [reset | update | candidate].
    Var gru_sequence(Var x, Var wi, Var bi, Var wh, Var bh, bool reverse);

    // Masking / reductions.
    Var mask_rows(Var a, const Mask& keep);
    Var sum_all(Var a);
    Var mean_all(Var a);
    Var sum_rows(Var a);  // -> [1,C]
    Var pick(Var a, int r, int c);
    Var detach(Var a);

    // Seeds d(loss)/d(loss)=1 and accumulates parameter grads into out.
    void backward(Var loss, GradStore& out);

    size_t node_count() const { return nodes_.size(); }

private:
    // back(tape, own_grad, own_value)
    using BackFn = std::function<void(Tape&, const Matrix&, const Matrix&)>;

    struct Node {
        Matrix value;
        Matrix grad;
        BackFn back;
        int param_id = -1;
        bool needs_grad = false;
    };

    Var push(Matrix value, bool needs_grad, BackFn back);
    Matrix& grad(int id);
    bool wants(Var v) const { return record_ && nodes_[v.id].needs_grad; }

    const ParamStore* params_;
    bool record_;
    std::vector<Node> nodes_;
};

}  // namespace img::nn
