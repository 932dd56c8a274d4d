// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "img/kernels.hpp"

#include <atomic>
#include <cassert>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace img::kernels {

namespace {
std::atomic<Mode> g_mode{Mode::Parallel};

inline long work(const Matrix& a, const Matrix& b) {
    return static_cast<long>(a.rows()) * a.cols() * b.cols();
}

// Spawning a nested team inside an already-parallel caller (e.g. the
// sample-parallel training loop) only adds overhead; stay serial there.
inline bool can_go_parallel() {
#ifdef _OPENMP
    return g_mode.load(std::memory_order_relaxed) == Mode::Parallel && !omp_in_parallel();
#else
    return false;
#endif
}
}  // namespace

void set_mode(Mode m) { g_mode.store(m, std::memory_order_relaxed); }
Mode mode() { return g_mode.load(std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    assert(b.rows() == k);
    out = Matrix(m, n);
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (int j = 0; j < n; ++j) oi[j] += av * bp[j];
        }
    }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    const int m = a.rows(), k = a.cols(), n = b.rows();
    assert(b.cols() == k);
    out = Matrix(m, n);
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (int j = 0; j < n; ++j) {
            const double* bj = b.row(j);
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            oi[j] = acc;
        }
    }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
    const int k = a.rows(), m = a.cols(), n = b.cols();
    assert(b.rows() == k);
    out = Matrix(m, n);
    for (int p = 0; p < k; ++p) {
        const double* ap = a.row(p);
        const double* bp = b.row(p);
        for (int i = 0; i < m; ++i) {
            const double av = ap[i];
            if (av == 0.0) continue;
            double* oi = out.row(i);
            for (int j = 0; j < n; ++j) oi[j] += av * bp[j];
        }
    }
}

void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    assert(b.rows() == k && out.rows() == m && out.cols() == n);
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (int j = 0; j < n; ++j) oi[j] += av * bp[j];
        }
    }
}

void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    const int m = a.rows(), k = a.cols(), n = b.rows();
    assert(b.cols() == k && out.rows() == m && out.cols() == n);
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (int j = 0; j < n; ++j) {
            const double* bj = b.row(j);
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            oi[j] += acc;
        }
    }
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    const int k = a.rows(), m = a.cols(), n = b.cols();
    assert(b.rows() == k && out.rows() == m && out.cols() == n);
    for (int p = 0; p < k; ++p) {
        const double* ap = a.row(p);
        const double* bp = b.row(p);
        for (int i = 0; i < m; ++i) {
            const double av = ap[i];
            if (av == 0.0) continue;
            double* oi = out.row(i);
            for (int j = 0; j < n; ++j) oi[j] += av * bp[j];
        }
    }
}

}  // namespace serial

namespace parallel {

// Row-parallel variants. Each output element is accumulated in the same
// order as the serial reference, so the two modes agree bitwise.

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    assert(b.rows() == k);
    out = Matrix(m, n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (int j = 0; j < n; ++j) oi[j] += av * bp[j];
        }
    }
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    const int m = a.rows(), k = a.cols(), n = b.rows();
    assert(b.cols() == k);
    out = Matrix(m, n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (int j = 0; j < n; ++j) {
            const double* bj = b.row(j);
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            oi[j] = acc;
        }
    }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
    const int k = a.rows(), m = a.cols(), n = b.cols();
    assert(b.rows() == k);
    out = Matrix(m, n);
    // Parallel over output rows: thread i walks column i of a.
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* oi = out.row(i);
        for (int p = 0; p < k; ++p) {
            const double av = a.at(p, i);
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (int j = 0; j < n; ++j) oi[j] += av * bp[j];
        }
    }
}

void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    const int m = a.rows(), k = a.cols(), n = b.cols();
    assert(b.rows() == k && out.rows() == m && out.cols() == n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (int j = 0; j < n; ++j) oi[j] += av * bp[j];
        }
    }
}

void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    const int m = a.rows(), k = a.cols(), n = b.rows();
    assert(b.cols() == k && out.rows() == m && out.cols() == n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = a.row(i);
        double* oi = out.row(i);
        for (int j = 0; j < n; ++j) {
            const double* bj = b.row(j);
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            oi[j] += acc;
        }
    }
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    const int k = a.rows(), m = a.cols(), n = b.cols();
    assert(b.rows() == k && out.rows() == m && out.cols() == n);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* oi = out.row(i);
        for (int p = 0; p < k; ++p) {
            const double av = a.at(p, i);
            if (av == 0.0) continue;
            const double* bp = b.row(p);
            for (int j = 0; j < n; ++j) oi[j] += av * bp[j];
        }
    }
}

}  // namespace parallel

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
    if (can_go_parallel() && work(a, b) >= kParallelThreshold)
        parallel::matmul(a, b, out);
    else
        serial::matmul(a, b, out);
}

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
    if (can_go_parallel() && static_cast<long>(a.rows()) * a.cols() * b.rows() >= kParallelThreshold)
        parallel::matmul_nt(a, b, out);
    else
        serial::matmul_nt(a, b, out);
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
    if (can_go_parallel() && static_cast<long>(a.rows()) * a.cols() * b.cols() >= kParallelThreshold)
        parallel::matmul_tn(a, b, out);
    else
        serial::matmul_tn(a, b, out);
}

void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    if (can_go_parallel() && work(a, b) >= kParallelThreshold)
        parallel::matmul_acc(a, b, out);
    else
        serial::matmul_acc(a, b, out);
}

void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    if (can_go_parallel() && static_cast<long>(a.rows()) * a.cols() * b.rows() >= kParallelThreshold)
        parallel::matmul_nt_acc(a, b, out);
    else
        serial::matmul_nt_acc(a, b, out);
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
    if (can_go_parallel() && static_cast<long>(a.rows()) * a.cols() * b.cols() >= kParallelThreshold)
        parallel::matmul_tn_acc(a, b, out);
    else
        serial::matmul_tn_acc(a, b, out);
}

}  // namespace img::kernels
