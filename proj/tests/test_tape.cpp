// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "img/kernels.hpp"
#include "img/rng.hpp"
#include "img/tape.hpp"

using namespace img;
using nn::Mask;
using nn::Tape;
using nn::Var;

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
    Matrix m(r, c);
    for (size_t i = 0; i < m.size(); ++i) m[i] = scale * rng.normal();
    return m;
}

double eval_scalar(ParamStore& ps, const std::function<Var(Tape&)>& build) {
    Tape t(&ps, /*record=*/false);
    return t.scalar_value(build(t));
}

void fd_check(ParamStore& ps, const std::function<Var(Tape&)>& build, int max_checks = 64,
              double step = 1e-6, double tol = 2e-5) {
    GradStore grads(ps);
    {
        Tape t(&ps);
        t.backward(build(t), grads);
    }
    Rng pick(99);
    int checked = 0;
    for (int id = 0; id < ps.count() && checked < max_checks; ++id) {
        Matrix& value = ps.value(id);
        const size_t stride = std::max<size_t>(1, value.size() / 3);
        for (size_t k = pick.uniform_int(0, 1); k < value.size() && checked < max_checks;
             k += stride) {
            const double orig = value[k];
            value[k] = orig + step;
            const double up = eval_scalar(ps, build);
            value[k] = orig - step;
            const double down = eval_scalar(ps, build);
            value[k] = orig;
            const double fd = (up - down) / (2.0 * step);
            const double an = grads[id][k];
            const double err = std::fabs(fd - an) / std::max({1.0, std::fabs(fd), std::fabs(an)});
            INFO("param ", ps.name(id), " entry ", k, " fd=", fd, " analytic=", an);
            CHECK(err < tol);
            ++checked;
        }
    }
    CHECK(checked > 0);
}

}  // namespace

TEST_CASE("kernels: parallel matches serial bitwise") {
    Rng rng(1);
    for (auto [m, k, n] : {std::tuple{3, 4, 5}, std::tuple{17, 33, 9}, std::tuple{64, 64, 64}}) {
        Matrix a = random_matrix(rng, m, k);
        Matrix b = random_matrix(rng, k, n);
        Matrix bt = b.transposed();
        Matrix at = a.transposed();
        Matrix s, p;
        kernels::serial::matmul(a, b, s);
        kernels::parallel::matmul(a, b, p);
        CHECK(max_abs_diff(s, p) == 0.0);
        kernels::serial::matmul_nt(a, bt, s);
        kernels::parallel::matmul_nt(a, bt, p);
        CHECK(max_abs_diff(s, p) == 0.0);
        kernels::serial::matmul_tn(at, b, s);
        kernels::parallel::matmul_tn(at, b, p);
        CHECK(max_abs_diff(s, p) == 0.0);
    }
}

TEST_CASE("kernels: transpose variants agree with plain matmul") {
    Rng rng(2);
    Matrix a = random_matrix(rng, 6, 7);
    Matrix b = random_matrix(rng, 7, 5);
    Matrix ref, out;
    kernels::serial::matmul(a, b, ref);
    kernels::serial::matmul_nt(a, b.transposed(), out);
    CHECK(max_abs_diff(ref, out) < 1e-12);
    kernels::serial::matmul_tn(a.transposed(), b, out);
    CHECK(max_abs_diff(ref, out) < 1e-12);
}

TEST_CASE("tape: matmul chain gradient") {
    Rng rng(3);
    ParamStore ps;
    const int a = ps.add("a", random_matrix(rng, 4, 5));
    const int b = ps.add("b", random_matrix(rng, 5, 3));
    fd_check(ps, [&](Tape& t) { return t.sum_all(t.tanh_(t.matmul(t.param(a), t.param(b)))); });
}

TEST_CASE("tape: elementwise and broadcast gradients") {
    Rng rng(4);
    ParamStore ps;
    const int a = ps.add("a", random_matrix(rng, 3, 4));
    const int b = ps.add("b", random_matrix(rng, 3, 4));
    const int row = ps.add("row", random_matrix(rng, 1, 4));
    const int col = ps.add("col", random_matrix(rng, 3, 1));
    fd_check(ps, [&](Tape& t) {
        Var x = t.mul(t.param(a), t.sigmoid(t.param(b)));
        x = t.add_row(x, t.param(row));
        x = t.add_col(x, t.param(col));
        x = t.mul_row(x, t.param(row));
        return t.mean_all(t.gelu(x));
    });
}

TEST_CASE("tape: softmax / log-softmax / layer-norm gradients with mask") {
    Rng rng(5);
    ParamStore ps;
    const int a = ps.add("a", random_matrix(rng, 4, 6));
    const int gain = ps.add("gain", random_matrix(rng, 1, 6, 0.3));
    const int bias = ps.add("bias", random_matrix(rng, 1, 6, 0.3));
    Mask mask = {1, 0, 1, 1, 0, 1};
    fd_check(ps, [&](Tape& t) {
        Var sm = t.softmax_rows(t.param(a), &mask);
        Var lsm = t.log_softmax_rows(t.param(a), &mask);
        Var ln = t.layer_norm(t.param(a), t.param(gain), t.param(bias), 1e-8);
        return t.add(t.sum_all(t.mul(sm, lsm)), t.mean_all(t.mul(ln, ln)));
    });
}

TEST_CASE("tape: conv1d gradient") {
    Rng rng(6);
    ParamStore ps;
    const int x = ps.add("x", random_matrix(rng, 5, 3));
    const int w = ps.add("w", random_matrix(rng, 9, 4));
    const int b = ps.add("b", random_matrix(rng, 1, 4));
    fd_check(ps, [&](Tape& t) {
        return t.sum_all(t.tanh_(t.conv1d_same(t.param(x), t.param(w), t.param(b), 3)));
    });
}

TEST_CASE("tape: gru_sequence gradient, both directions") {
    Rng rng(7);
    ParamStore ps;
    const int x = ps.add("x", random_matrix(rng, 6, 4));
    const int wi = ps.add("wi", random_matrix(rng, 4, 9, 0.5));
    const int bi = ps.add("bi", random_matrix(rng, 1, 9, 0.5));
    const int wh = ps.add("wh", random_matrix(rng, 3, 9, 0.5));
    const int bh = ps.add("bh", random_matrix(rng, 1, 9, 0.5));
    for (bool reverse : {false, true}) {
        fd_check(ps, [&](Tape& t) {
            return t.sum_all(t.gru_sequence(t.param(x), t.param(wi), t.param(bi), t.param(wh),
                                            t.param(bh), reverse));
        });
    }
}

TEST_CASE("tape: gru_sequence forward matches a step-by-step cell") {
    Rng rng(8);
    ParamStore ps;
    const int T = 5, din = 3, h = 2;
    const int x = ps.add("x", random_matrix(rng, T, din));
    const int wi = ps.add("wi", random_matrix(rng, din, 3 * h));
    const int bi = ps.add("bi", random_matrix(rng, 1, 3 * h));
    const int wh = ps.add("wh", random_matrix(rng, h, 3 * h));
    const int bh = ps.add("bh", random_matrix(rng, 1, 3 * h));

    Tape t(&ps, false);
    Matrix out = t.value(t.gru_sequence(t.param(x), t.param(wi), t.param(bi), t.param(wh),
                                        t.param(bh), false));

    // Independent reference: plain loops over the standard GRU equations.
    const Matrix& X = ps.value(x);
    const Matrix& WI = ps.value(wi);
    const Matrix& BI = ps.value(bi);
    const Matrix& WH = ps.value(wh);
    const Matrix& BH = ps.value(bh);
    std::vector<double> hidden(h, 0.0);
    for (int step = 0; step < T; ++step) {
        std::vector<double> gi(3 * h), gh(3 * h);
        for (int j = 0; j < 3 * h; ++j) {
            gi[j] = BI.at(0, j);
            gh[j] = BH.at(0, j);
            for (int c = 0; c < din; ++c) gi[j] += X.at(step, c) * WI.at(c, j);
            for (int c = 0; c < h; ++c) gh[j] += hidden[c] * WH.at(c, j);
        }
        for (int j = 0; j < h; ++j) {
            const double r = 1.0 / (1.0 + std::exp(-(gi[j] + gh[j])));
            const double z = 1.0 / (1.0 + std::exp(-(gi[h + j] + gh[h + j])));
            const double n = std::tanh(gi[2 * h + j] + r * gh[2 * h + j]);
            hidden[j] = (1.0 - z) * n + z * hidden[j];
            CHECK(out.at(step, j) == doctest::Approx(hidden[j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("tape: slice/concat/transpose/reverse/pick gradients") {
    Rng rng(9);
    ParamStore ps;
    const int a = ps.add("a", random_matrix(rng, 4, 6));
    fd_check(ps, [&](Tape& t) {
        Var x = t.param(a);
        Var left = t.slice_cols(x, 0, 3);
        Var right = t.slice_cols(x, 3, 6);
        Var swapped = t.concat_cols({right, left});
        Var rows = t.concat_rows({t.slice_rows(swapped, 2, 4), t.slice_rows(swapped, 0, 2)});
        Var rt = t.transpose(t.reverse_rows(rows));
        return t.add(t.sum_all(t.mul(rt, rt)), t.pick(x, 1, 2));
    });
}

TEST_CASE("tape: scalar ops, clamp, mask") {
    Rng rng(10);
    ParamStore ps;
    const int a = ps.add("a", random_matrix(rng, 3, 3));
    const int s = ps.add("s", random_matrix(rng, 1, 1));
    Mask keep = {1, 0, 1};
    fd_check(ps, [&](Tape& t) {
        Var x = t.mul_scalar(t.param(a), t.sigmoid(t.param(s)));
        x = t.mask_rows(x, keep);
        Var c = t.clamp(t.param(a), -0.4, 0.4);
        return t.add(t.sum_all(t.mul(x, x)), t.mean_all(c));
    });
}

TEST_CASE("tape: masked softmax assigns exactly zero to masked columns") {
    Rng rng(11);
    Tape t(nullptr, false);
    Mask mask = {1, 0, 1, 0};
    Var x = t.input(random_matrix(rng, 3, 4, 5.0));
    Matrix sm = t.value(t.softmax_rows(x, &mask));
    for (int i = 0; i < 3; ++i) {
        CHECK(sm.at(i, 1) == 0.0);
        CHECK(sm.at(i, 3) == 0.0);
        CHECK(sm.at(i, 0) + sm.at(i, 2) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("tape: detach blocks parameter gradients") {
    Rng rng(12);
    ParamStore ps;
    const int a = ps.add("a", random_matrix(rng, 2, 2));
    GradStore grads(ps);
    Tape t(&ps);
    t.backward(t.sum_all(t.mul(t.detach(t.param(a)), t.detach(t.param(a)))), grads);
    for (size_t k = 0; k < grads[a].size(); ++k) CHECK(grads[a][k] == 0.0);
}
