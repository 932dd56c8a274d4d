// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "img/tape.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include "img/kernels.hpp"

namespace img::nn {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline void axpy(Matrix& dst, const Matrix& src) {
    assert(dst.same_shape(src));
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Var Tape::push(Matrix value, bool needs_grad, BackFn back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = record_ && needs_grad;
    if (n.needs_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Matrix& Tape::grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty())
        n.grad = Matrix(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::input(Matrix m) { return push(std::move(m), false, nullptr); }

Var Tape::scalar(double v) {
    Matrix m(1, 1);
    m.at(0, 0) = v;
    return push(std::move(m), false, nullptr);
}

Var Tape::param(int param_id) {
    assert(params_ != nullptr);
    Var v = push(params_->value(param_id), true, nullptr);
    nodes_[v.id].param_id = param_id;
    // record_==false still needs the value; grads only when recording
    nodes_[v.id].needs_grad = record_;
    return v;
}

Var Tape::matmul(Var a, Var b) {
    Matrix out;
    kernels::matmul(value(a), value(b), out);
    return push(std::move(out), wants(a) || wants(b),
                [a, b](Tape& t, const Matrix& g, const Matrix&) {
                    if (t.wants(a)) kernels::matmul_nt_acc(g, t.value(b), t.grad(a.id));
                    if (t.wants(b)) kernels::matmul_tn_acc(t.value(a), g, t.grad(b.id));
                });
}

Var Tape::matmul_nt(Var a, Var b) {
    Matrix out;
    kernels::matmul_nt(value(a), value(b), out);
    return push(std::move(out), wants(a) || wants(b),
                [a, b](Tape& t, const Matrix& g, const Matrix&) {
                    if (t.wants(a)) kernels::matmul_acc(g, t.value(b), t.grad(a.id));
                    if (t.wants(b)) kernels::matmul_tn_acc(g, t.value(a), t.grad(b.id));
                });
}

Var Tape::matmul_tn(Var a, Var b) {
    Matrix out;
    kernels::matmul_tn(value(a), value(b), out);
    return push(std::move(out), wants(a) || wants(b),
                [a, b](Tape& t, const Matrix& g, const Matrix&) {
                    if (t.wants(a)) kernels::matmul_nt_acc(t.value(b), g, t.grad(a.id));
                    if (t.wants(b)) kernels::matmul_acc(t.value(a), g, t.grad(b.id));
                });
}

Var Tape::affine(Var x, Var w, Var b) {
    Matrix out;
    kernels::matmul(value(x), value(w), out);
    const Matrix& bv = value(b);
    assert(bv.rows() == 1 && bv.cols() == out.cols());
    for (int i = 0; i < out.rows(); ++i) {
        double* oi = out.row(i);
        for (int j = 0; j < out.cols(); ++j) oi[j] += bv.at(0, j);
    }
    return push(std::move(out), wants(x) || wants(w) || wants(b),
                [x, w, b](Tape& t, const Matrix& g, const Matrix&) {
                    if (t.wants(x)) kernels::matmul_nt_acc(g, t.value(w), t.grad(x.id));
                    if (t.wants(w)) kernels::matmul_tn_acc(t.value(x), g, t.grad(w.id));
                    if (t.wants(b)) {
                        Matrix& db = t.grad(b.id);
                        for (int i = 0; i < g.rows(); ++i)
                            for (int j = 0; j < g.cols(); ++j) db.at(0, j) += g.at(i, j);
                    }
                });
}

Var Tape::add(Var a, Var b) {
    const Matrix& x = value(a);
    const Matrix& y = value(b);
    assert(x.same_shape(y));
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return push(std::move(out), wants(a) || wants(b),
                [a, b](Tape& t, const Matrix& g, const Matrix&) {
                    if (t.wants(a)) axpy(t.grad(a.id), g);
                    if (t.wants(b)) axpy(t.grad(b.id), g);
                });
}

Var Tape::sub(Var a, Var b) {
    const Matrix& x = value(a);
    const Matrix& y = value(b);
    assert(x.same_shape(y));
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return push(std::move(out), wants(a) || wants(b),
                [a, b](Tape& t, const Matrix& g, const Matrix&) {
                    if (t.wants(a)) axpy(t.grad(a.id), g);
                    if (t.wants(b)) {
                        Matrix& db = t.grad(b.id);
                        for (size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
                    }
                });
}

Var Tape::mul(Var a, Var b) {
    const Matrix& x = value(a);
    const Matrix& y = value(b);
    assert(x.same_shape(y));
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return push(std::move(out), wants(a) || wants(b),
                [a, b](Tape& t, const Matrix& g, const Matrix&) {
                    const Matrix& x = t.value(a);
                    const Matrix& y = t.value(b);
                    if (t.wants(a)) {
                        Matrix& da = t.grad(a.id);
                        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i];
                    }
                    if (t.wants(b)) {
                        Matrix& db = t.grad(b.id);
                        for (size_t i = 0; i < g.size(); ++i) db[i] += g[i] * x[i];
                    }
                });
}

Var Tape::add_row(Var a, Var row) {
    const Matrix& x = value(a);
    const Matrix& r = value(row);
    assert(r.rows() == 1 && r.cols() == x.cols());
    Matrix out(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j) + r.at(0, j);
    return push(std::move(out), wants(a) || wants(row),
                [a, row](Tape& t, const Matrix& g, const Matrix&) {
                    if (t.wants(a)) axpy(t.grad(a.id), g);
                    if (t.wants(row)) {
                        Matrix& dr = t.grad(row.id);
                        for (int i = 0; i < g.rows(); ++i)
                            for (int j = 0; j < g.cols(); ++j) dr.at(0, j) += g.at(i, j);
                    }
                });
}

Var Tape::add_col(Var a, Var col) {
    const Matrix& x = value(a);
    const Matrix& c = value(col);
    assert(c.cols() == 1 && c.rows() == x.rows());
    Matrix out(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j) + c.at(i, 0);
    return push(std::move(out), wants(a) || wants(col),
                [a, col](Tape& t, const Matrix& g, const Matrix&) {
                    if (t.wants(a)) axpy(t.grad(a.id), g);
                    if (t.wants(col)) {
                        Matrix& dc = t.grad(col.id);
                        for (int i = 0; i < g.rows(); ++i)
                            for (int j = 0; j < g.cols(); ++j) dc.at(i, 0) += g.at(i, j);
                    }
                });
}

Var Tape::mul_row(Var a, Var row) {
    const Matrix& x = value(a);
    const Matrix& r = value(row);
    assert(r.rows() == 1 && r.cols() == x.cols());
    Matrix out(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j) * r.at(0, j);
    return push(std::move(out), wants(a) || wants(row),
                [a, row](Tape& t, const Matrix& g, const Matrix&) {
                    const Matrix& x = t.value(a);
                    const Matrix& r = t.value(row);
                    if (t.wants(a)) {
                        Matrix& da = t.grad(a.id);
                        for (int i = 0; i < g.rows(); ++i)
                            for (int j = 0; j < g.cols(); ++j) da.at(i, j) += g.at(i, j) * r.at(0, j);
                    }
                    if (t.wants(row)) {
                        Matrix& dr = t.grad(row.id);
                        for (int i = 0; i < g.rows(); ++i)
                            for (int j = 0; j < g.cols(); ++j) dr.at(0, j) += g.at(i, j) * x.at(i, j);
                    }
                });
}

Var Tape::scale(Var a, double c) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] * c;
    return push(std::move(out), wants(a),
                [a, c](Tape& t, const Matrix& g, const Matrix&) {
                    Matrix& da = t.grad(a.id);
                    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * c;
                });
}

Var Tape::add_const(Var a, double c) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] + c;
    return push(std::move(out), wants(a),
                [a](Tape& t, const Matrix& g, const Matrix&) { axpy(t.grad(a.id), g); });
}

Var Tape::mul_scalar(Var a, Var s) {
    const Matrix& x = value(a);
    const double sv = scalar_value(s);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] * sv;
    return push(std::move(out), wants(a) || wants(s),
                [a, s](Tape& t, const Matrix& g, const Matrix&) {
                    const double sv = t.scalar_value(s);
                    const Matrix& x = t.value(a);
                    if (t.wants(a)) {
                        Matrix& da = t.grad(a.id);
                        for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * sv;
                    }
                    if (t.wants(s)) {
                        double acc = 0.0;
                        for (size_t i = 0; i < g.size(); ++i) acc += g[i] * x[i];
                        t.grad(s.id).at(0, 0) += acc;
                    }
                });
}

Var Tape::transpose(Var a) {
    return push(value(a).transposed(), wants(a),
                [a](Tape& t, const Matrix& g, const Matrix&) {
                    Matrix gt = g.transposed();
                    axpy(t.grad(a.id), gt);
                });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    assert(!parts.empty());
    const int rows = value(parts[0]).rows();
    int cols = 0;
    bool needs = false;
    for (Var p : parts) {
        assert(value(p).rows() == rows);
        cols += value(p).cols();
        needs = needs || wants(p);
    }
    Matrix out(rows, cols);
    int off = 0;
    for (Var p : parts) {
        const Matrix& m = value(p);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < m.cols(); ++j) out.at(i, off + j) = m.at(i, j);
        off += m.cols();
    }
    std::vector<Var> ps = parts;
    return push(std::move(out), needs,
                [ps](Tape& t, const Matrix& g, const Matrix&) {
                    int off = 0;
                    for (Var p : ps) {
                        const int pc = t.value(p).cols();
                        if (t.wants(p)) {
                            Matrix& dp = t.grad(p.id);
                            for (int i = 0; i < g.rows(); ++i)
                                for (int j = 0; j < pc; ++j) dp.at(i, j) += g.at(i, off + j);
                        }
                        off += pc;
                    }
                });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    assert(!parts.empty());
    const int cols = value(parts[0]).cols();
    int rows = 0;
    bool needs = false;
    for (Var p : parts) {
        assert(value(p).cols() == cols);
        rows += value(p).rows();
        needs = needs || wants(p);
    }
    Matrix out(rows, cols);
    int off = 0;
    for (Var p : parts) {
        const Matrix& m = value(p);
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < cols; ++j) out.at(off + i, j) = m.at(i, j);
        off += m.rows();
    }
    std::vector<Var> ps = parts;
    return push(std::move(out), needs,
                [ps](Tape& t, const Matrix& g, const Matrix&) {
                    int off = 0;
                    for (Var p : ps) {
                        const int pr = t.value(p).rows();
                        if (t.wants(p)) {
                            Matrix& dp = t.grad(p.id);
                            for (int i = 0; i < pr; ++i)
                                for (int j = 0; j < g.cols(); ++j) dp.at(i, j) += g.at(off + i, j);
                        }
                        off += pr;
                    }
                });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
    const Matrix& x = value(a);
    assert(0 <= c0 && c0 < c1 && c1 <= x.cols());
    Matrix out(x.rows(), c1 - c0);
    for (int i = 0; i < x.rows(); ++i)
        for (int j = c0; j < c1; ++j) out.at(i, j - c0) = x.at(i, j);
    return push(std::move(out), wants(a),
                [a, c0](Tape& t, const Matrix& g, const Matrix&) {
                    Matrix& da = t.grad(a.id);
                    for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < g.cols(); ++j) da.at(i, c0 + j) += g.at(i, j);
                });
}

Var Tape::slice_rows(Var a, int r0, int r1) {
    const Matrix& x = value(a);
    assert(0 <= r0 && r0 < r1 && r1 <= x.rows());
    Matrix out(r1 - r0, x.cols());
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < x.cols(); ++j) out.at(i - r0, j) = x.at(i, j);
    return push(std::move(out), wants(a),
                [a, r0](Tape& t, const Matrix& g, const Matrix&) {
                    Matrix& da = t.grad(a.id);
                    for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < g.cols(); ++j) da.at(r0 + i, j) += g.at(i, j);
                });
}

Var Tape::reverse_rows(Var a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(x.rows() - 1 - i, j);
    return push(std::move(out), wants(a),
                [a](Tape& t, const Matrix& g, const Matrix&) {
                    Matrix& da = t.grad(a.id);
                    const int R = g.rows();
                    for (int i = 0; i < R; ++i)
                        for (int j = 0; j < g.cols(); ++j) da.at(R - 1 - i, j) += g.at(i, j);
                });
}

Var Tape::repeat_row(Var row, int n) {
    const Matrix& r = value(row);
    assert(r.rows() == 1);
    Matrix out(n, r.cols());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < r.cols(); ++j) out.at(i, j) = r.at(0, j);
    return push(std::move(out), wants(row),
                [row](Tape& t, const Matrix& g, const Matrix&) {
                    Matrix& dr = t.grad(row.id);
                    for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < g.cols(); ++j) dr.at(0, j) += g.at(i, j);
                });
}

Var Tape::gelu(Var a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
    return push(std::move(out), wants(a),
                [a](Tape& t, const Matrix& g, const Matrix&) {
                    const Matrix& x = t.value(a);
                    Matrix& da = t.grad(a.id);
                    for (size_t i = 0; i < g.size(); ++i) {
                        const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
                        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
                        da[i] += g[i] * (cdf + x[i] * pdf);
                    }
                });
}

Var Tape::sigmoid(Var a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = x[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-x[i]))
                             : std::exp(x[i]) / (1.0 + std::exp(x[i]));
    return push(std::move(out), wants(a),
                [a](Tape& t, const Matrix& g, const Matrix& y) {
                    Matrix& da = t.grad(a.id);
                    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
                });
}

Var Tape::tanh_(Var a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
    return push(std::move(out), wants(a),
                [a](Tape& t, const Matrix& g, const Matrix& y) {
                    Matrix& da = t.grad(a.id);
                    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
                });
}

Var Tape::relu(Var a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return push(std::move(out), wants(a),
                [a](Tape& t, const Matrix& g, const Matrix&) {
                    const Matrix& x = t.value(a);
                    Matrix& da = t.grad(a.id);
                    for (size_t i = 0; i < g.size(); ++i)
                        if (x[i] > 0.0) da[i] += g[i];
                });
}

Var Tape::log_(Var a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(x[i]);
    return push(std::move(out), wants(a),
                [a](Tape& t, const Matrix& g, const Matrix&) {
                    const Matrix& x = t.value(a);
                    Matrix& da = t.grad(a.id);
                    for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] / x[i];
                });
}

Var Tape::reciprocal(Var a) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / x[i];
    return push(std::move(out), wants(a),
                [a](Tape& t, const Matrix& g, const Matrix& y) {
                    Matrix& da = t.grad(a.id);
                    for (size_t i = 0; i < g.size(); ++i) da[i] -= g[i] * y[i] * y[i];
                });
}

Var Tape::clamp(Var a, double lo, double hi) {
    const Matrix& x = value(a);
    Matrix out(x.rows(), x.cols());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, x[i]));
    return push(std::move(out), wants(a),
                [a, lo, hi](Tape& t, const Matrix& g, const Matrix&) {
                    const Matrix& x = t.value(a);
                    Matrix& da = t.grad(a.id);
                    for (size_t i = 0; i < g.size(); ++i)
                        if (x[i] > lo && x[i] < hi) da[i] += g[i];
                });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    const Matrix& xv = value(x);
    const Matrix& gv = value(gain);
    const Matrix& bv = value(bias);
    const int R = xv.rows(), C = xv.cols();
    assert(gv.rows() == 1 && gv.cols() == C && bv.rows() == 1 && bv.cols() == C);
    Matrix out(R, C);
    Matrix xhat(R, C);
    Matrix invstd(R, 1);
    for (int i = 0; i < R; ++i) {
        double mean = 0.0;
        for (int j = 0; j < C; ++j) mean += xv.at(i, j);
        mean /= C;
        double var = 0.0;
        for (int j = 0; j < C; ++j) {
            const double d = xv.at(i, j) - mean;
            var += d * d;
        }
        var /= C;
        const double is = 1.0 / std::sqrt(var + eps);
        invstd.at(i, 0) = is;
        for (int j = 0; j < C; ++j) {
            const double xh = (xv.at(i, j) - mean) * is;
            xhat.at(i, j) = xh;
            out.at(i, j) = xh * gv.at(0, j) + bv.at(0, j);
        }
    }
    return push(std::move(out), wants(x) || wants(gain) || wants(bias),
                [x, gain, bias, xhat, invstd](Tape& t, const Matrix& g, const Matrix&) {
                    const Matrix& gv = t.value(gain);
                    const int R = g.rows(), C = g.cols();
                    if (t.wants(gain)) {
                        Matrix& dg = t.grad(gain.id);
                        for (int i = 0; i < R; ++i)
                            for (int j = 0; j < C; ++j) dg.at(0, j) += g.at(i, j) * xhat.at(i, j);
                    }
                    if (t.wants(bias)) {
                        Matrix& db = t.grad(bias.id);
                        for (int i = 0; i < R; ++i)
                            for (int j = 0; j < C; ++j) db.at(0, j) += g.at(i, j);
                    }
                    if (t.wants(x)) {
                        Matrix& dx = t.grad(x.id);
                        for (int i = 0; i < R; ++i) {
                            double sum_dh = 0.0, sum_dh_xh = 0.0;
                            for (int j = 0; j < C; ++j) {
                                const double dh = g.at(i, j) * gv.at(0, j);
                                sum_dh += dh;
                                sum_dh_xh += dh * xhat.at(i, j);
                            }
                            const double is = invstd.at(i, 0);
                            for (int j = 0; j < C; ++j) {
                                const double dh = g.at(i, j) * gv.at(0, j);
                                dx.at(i, j) += is * (dh - sum_dh / C - xhat.at(i, j) * sum_dh_xh / C);
                            }
                        }
                    }
                });
}

Var Tape::softmax_rows(Var x, const Mask* col_mask, bool ordered_sum) {
    const Matrix& xv = value(x);
    const int R = xv.rows(), C = xv.cols();
    assert(!col_mask || static_cast<int>(col_mask->size()) == C);
    Matrix out(R, C);
    std::vector<double> exps(C);
    for (int i = 0; i < R; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < C; ++j)
            if (!col_mask || (*col_mask)[j]) mx = std::max(mx, xv.at(i, j));
        assert(std::isfinite(mx) && "softmax over fully masked row");
        int n_live = 0;
        for (int j = 0; j < C; ++j) {
            if (!col_mask || (*col_mask)[j]) {
                exps[n_live++] = std::exp(xv.at(i, j) - mx);
            }
        }
        double denom = 0.0;
        if (ordered_sum) {
            std::sort(exps.begin(), exps.begin() + n_live, std::greater<double>());
            for (int j = 0; j < n_live; ++j) denom += exps[j];
        } else {
            for (int j = 0; j < n_live; ++j) denom += exps[j];
        }
        for (int j = 0; j < C; ++j)
            out.at(i, j) = (!col_mask || (*col_mask)[j]) ? std::exp(xv.at(i, j) - mx) / denom : 0.0;
    }
    return push(std::move(out), wants(x),
                [x](Tape& t, const Matrix& g, const Matrix& y) {
                    Matrix& dx = t.grad(x.id);
                    for (int i = 0; i < g.rows(); ++i) {
                        double dot = 0.0;
                        for (int j = 0; j < g.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
                        for (int j = 0; j < g.cols(); ++j)
                            dx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
                    }
                });
}

Var Tape::log_softmax_rows(Var x, const Mask* col_mask) {
    const Matrix& xv = value(x);
    const int R = xv.rows(), C = xv.cols();
    assert(!col_mask || static_cast<int>(col_mask->size()) == C);
    Matrix out(R, C);
    for (int i = 0; i < R; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < C; ++j)
            if (!col_mask || (*col_mask)[j]) mx = std::max(mx, xv.at(i, j));
        assert(std::isfinite(mx) && "log-softmax over fully masked row");
        double denom = 0.0;
        for (int j = 0; j < C; ++j)
            if (!col_mask || (*col_mask)[j]) denom += std::exp(xv.at(i, j) - mx);
        const double lse = mx + std::log(denom);
        for (int j = 0; j < C; ++j)
            out.at(i, j) = (!col_mask || (*col_mask)[j]) ? xv.at(i, j) - lse : 0.0;
    }
    Mask m = col_mask ? *col_mask : Mask();
    return push(std::move(out), wants(x),
                [x, m](Tape& t, const Matrix& g, const Matrix& y) {
                    Matrix& dx = t.grad(x.id);
                    for (int i = 0; i < g.rows(); ++i) {
                        double gsum = 0.0;
                        for (int j = 0; j < g.cols(); ++j)
                            if (m.empty() || m[j]) gsum += g.at(i, j);
                        for (int j = 0; j < g.cols(); ++j)
                            if (m.empty() || m[j])
                                dx.at(i, j) += g.at(i, j) - std::exp(y.at(i, j)) * gsum;
                    }
                });
}

namespace {

// col row t = [x[t-pad], ..., x[t-pad+k-1]] flattened; zeros outside.
Matrix im2col(const Matrix& x, int k) {
    const int T = x.rows(), d = x.cols(), pad = k / 2;
    Matrix col(T, k * d);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < k; ++j) {
            const int src = t - pad + j;
            if (src < 0 || src >= T) continue;
            for (int c = 0; c < d; ++c) col.at(t, j * d + c) = x.at(src, c);
        }
    return col;
}

}  // namespace

Var Tape::conv1d_same(Var x, Var w, Var b, int k) {
    const Matrix& xv = value(x);
    const Matrix& wv = value(w);
    const Matrix& bv = value(b);
    assert(k % 2 == 1);
    assert(wv.rows() == k * xv.cols());
    assert(bv.rows() == 1 && bv.cols() == wv.cols());
    Matrix col = im2col(xv, k);
    Matrix out;
    kernels::matmul(col, wv, out);
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out.at(i, j) += bv.at(0, j);
    return push(std::move(out), wants(x) || wants(w) || wants(b),
                [x, w, b, k, col](Tape& t, const Matrix& g, const Matrix&) {
                    if (t.wants(w)) kernels::matmul_tn_acc(col, g, t.grad(w.id));
                    if (t.wants(b)) {
                        Matrix& db = t.grad(b.id);
                        for (int i = 0; i < g.rows(); ++i)
                            for (int j = 0; j < g.cols(); ++j) db.at(0, j) += g.at(i, j);
                    }
                    if (t.wants(x)) {
                        Matrix dcol;
                        kernels::matmul_nt(g, t.value(w), dcol);
                        Matrix& dx = t.grad(x.id);
                        const int T = dx.rows(), d = dx.cols(), pad = k / 2;
                        for (int tt = 0; tt < T; ++tt)
                            for (int j = 0; j < k; ++j) {
                                const int src = tt - pad + j;
                                if (src < 0 || src >= T) continue;
                                for (int c = 0; c < d; ++c)
                                    dx.at(src, c) += dcol.at(tt, j * d + c);
                            }
                    }
                });
}

Var Tape::gru_sequence(Var x, Var wi, Var bi, Var wh, Var bh, bool reverse) {
    const Matrix& xv = value(x);
    const Matrix& wiv = value(wi);
    const Matrix& biv = value(bi);
    const Matrix& whv = value(wh);
    const Matrix& bhv = value(bh);
    const int T = xv.rows();
    const int h = whv.rows();
    assert(wiv.cols() == 3 * h && whv.cols() == 3 * h);
    assert(biv.cols() == 3 * h && bhv.cols() == 3 * h);
    assert(wiv.rows() == xv.cols());

    Matrix gi;  // [T, 3h] input-side gate pre-activations
    kernels::matmul(xv, wiv, gi);
    for (int t = 0; t < T; ++t)
        for (int j = 0; j < 3 * h; ++j) gi.at(t, j) += biv.at(0, j);

    Matrix out(T, h);
    Matrix R(T, h), Z(T, h), N(T, h), GHN(T, h), HPREV(T, h);
    std::vector<double> hprev(h, 0.0), gh(3 * h);
    for (int step = 0; step < T; ++step) {
        const int t = reverse ? T - 1 - step : step;
        // gh = hprev * wh + bh
        for (int j = 0; j < 3 * h; ++j) gh[j] = bhv.at(0, j);
        for (int p = 0; p < h; ++p) {
            const double hv = hprev[p];
            if (hv == 0.0) continue;
            const double* wr = whv.row(p);
            for (int j = 0; j < 3 * h; ++j) gh[j] += hv * wr[j];
        }
        for (int j = 0; j < h; ++j) {
            HPREV.at(t, j) = hprev[j];
            const double r = 1.0 / (1.0 + std::exp(-(gi.at(t, j) + gh[j])));
            const double z = 1.0 / (1.0 + std::exp(-(gi.at(t, h + j) + gh[h + j])));
            const double ghn = gh[2 * h + j];
            const double n = std::tanh(gi.at(t, 2 * h + j) + r * ghn);
            R.at(t, j) = r;
            Z.at(t, j) = z;
            N.at(t, j) = n;
            GHN.at(t, j) = ghn;
            hprev[j] = (1.0 - z) * n + z * HPREV.at(t, j);
            out.at(t, j) = hprev[j];
        }
    }

    return push(std::move(out), wants(x) || wants(wi) || wants(bi) || wants(wh) || wants(bh),
                [x, wi, bi, wh, bh, reverse, R, Z, N, GHN, HPREV](Tape& t, const Matrix& g, const Matrix&) {
                    const Matrix& xv = t.value(x);
                    const Matrix& wiv = t.value(wi);
                    const Matrix& whv = t.value(wh);
                    const int T = xv.rows();
                    const int h = whv.rows();
                    Matrix dgi(T, 3 * h);
                    Matrix dwh(h, 3 * h);
                    Matrix dbh(1, 3 * h);
                    std::vector<double> carry(h, 0.0), dgh(3 * h);
                    for (int step = T - 1; step >= 0; --step) {
                        const int tt = reverse ? T - 1 - step : step;
                        for (int j = 0; j < h; ++j) {
                            const double dh = g.at(tt, j) + carry[j];
                            const double r = R.at(tt, j), z = Z.at(tt, j), n = N.at(tt, j);
                            const double dz = dh * (HPREV.at(tt, j) - n);
                            const double dn = dh * (1.0 - z);
                            const double dpre_n = dn * (1.0 - n * n);
                            const double dr = dpre_n * GHN.at(tt, j);
                            const double dghn = dpre_n * r;
                            const double dpre_r = dr * r * (1.0 - r);
                            const double dpre_z = dz * z * (1.0 - z);
                            dgi.at(tt, j) = dpre_r;
                            dgi.at(tt, h + j) = dpre_z;
                            dgi.at(tt, 2 * h + j) = dpre_n;
                            dgh[j] = dpre_r;
                            dgh[h + j] = dpre_z;
                            dgh[2 * h + j] = dghn;
                            carry[j] = dh * z;  // direct path through h' = ... + z*hprev
                        }
                        // dwh += hprev^T * dgh ; dbh += dgh ; carry += dgh * wh^T
                        for (int p = 0; p < h; ++p) {
                            const double hv = HPREV.at(tt, p);
                            double acc = 0.0;
                            const double* wr = whv.row(p);
                            for (int j = 0; j < 3 * h; ++j) {
                                dwh.at(p, j) += hv * dgh[j];
                                acc += dgh[j] * wr[j];
                            }
                            carry[p] += acc;
                        }
                        for (int j = 0; j < 3 * h; ++j) dbh.at(0, j) += dgh[j];
                    }
                    if (t.wants(wh)) axpy(t.grad(wh.id), dwh);
                    if (t.wants(bh)) axpy(t.grad(bh.id), dbh);
                    if (t.wants(wi)) kernels::matmul_tn_acc(xv, dgi, t.grad(wi.id));
                    if (t.wants(bi)) {
                        Matrix& dbi = t.grad(bi.id);
                        for (int tt = 0; tt < T; ++tt)
                            for (int j = 0; j < 3 * h; ++j) dbi.at(0, j) += dgi.at(tt, j);
                    }
                    if (t.wants(x)) kernels::matmul_nt_acc(dgi, wiv, t.grad(x.id));
                });
}

Var Tape::mask_rows(Var a, const Mask& keep) {
    const Matrix& x = value(a);
    assert(static_cast<int>(keep.size()) == x.rows());
    Matrix out(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
        if (!keep[i]) continue;
        for (int j = 0; j < x.cols(); ++j) out.at(i, j) = x.at(i, j);
    }
    Mask m = keep;
    return push(std::move(out), wants(a),
                [a, m](Tape& t, const Matrix& g, const Matrix&) {
                    Matrix& da = t.grad(a.id);
                    for (int i = 0; i < g.rows(); ++i) {
                        if (!m[i]) continue;
                        for (int j = 0; j < g.cols(); ++j) da.at(i, j) += g.at(i, j);
                    }
                });
}

Var Tape::sum_all(Var a) {
    const Matrix& x = value(a);
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += x[i];
    Matrix out(1, 1);
    out.at(0, 0) = s;
    return push(std::move(out), wants(a),
                [a](Tape& t, const Matrix& g, const Matrix&) {
                    const double gv = g.at(0, 0);
                    Matrix& da = t.grad(a.id);
                    for (size_t i = 0; i < da.size(); ++i) da[i] += gv;
                });
}

Var Tape::mean_all(Var a) {
    const Matrix& x = value(a);
    const double inv = 1.0 / static_cast<double>(x.size());
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += x[i];
    Matrix out(1, 1);
    out.at(0, 0) = s * inv;
    return push(std::move(out), wants(a),
                [a, inv](Tape& t, const Matrix& g, const Matrix&) {
                    const double gv = g.at(0, 0) * inv;
                    Matrix& da = t.grad(a.id);
                    for (size_t i = 0; i < da.size(); ++i) da[i] += gv;
                });
}

Var Tape::sum_rows(Var a) {
    const Matrix& x = value(a);
    Matrix out(1, x.cols());
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) out.at(0, j) += x.at(i, j);
    return push(std::move(out), wants(a),
                [a](Tape& t, const Matrix& g, const Matrix&) {
                    Matrix& da = t.grad(a.id);
                    for (int i = 0; i < da.rows(); ++i)
                        for (int j = 0; j < da.cols(); ++j) da.at(i, j) += g.at(0, j);
                });
}

Var Tape::pick(Var a, int r, int c) {
    Matrix out(1, 1);
    out.at(0, 0) = value(a).at(r, c);
    return push(std::move(out), wants(a),
                [a, r, c](Tape& t, const Matrix& g, const Matrix&) {
                    t.grad(a.id).at(r, c) += g.at(0, 0);
                });
}

Var Tape::detach(Var a) { return push(value(a), false, nullptr); }

void Tape::backward(Var loss, GradStore& out) {
    assert(record_);
    assert(value(loss).rows() == 1 && value(loss).cols() == 1);
    grad(loss.id).at(0, 0) += 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) continue;
        if (n.back) n.back(*this, n.grad, n.value);
        if (n.param_id >= 0) axpy(out[n.param_id], n.grad);
    }
}

}  // namespace img::nn
