// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Compares the serial reference kernels against the OpenMP variants, and a
// full training step in both modes.

#include <chrono>
#include <cstdio>

#include "img/data.hpp"
#include "img/kernels.hpp"
#include "img/trainer.hpp"

using namespace img;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix random_matrix(Rng& rng, int r, int c) {
    Matrix m(r, c);
    for (size_t i = 0; i < m.size(); ++i) m[i] = rng.normal();
    return m;
}

void bench_matmul(int n) {
    Rng rng(42);
    Matrix a = random_matrix(rng, n, n);
    Matrix b = random_matrix(rng, n, n);
    Matrix out;
    const double flops = 2.0 * n * static_cast<double>(n) * n;
    const int reps = std::max(1, static_cast<int>(2e9 / flops));

    kernels::serial::matmul(a, b, out);  // warm-up
    auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) kernels::serial::matmul(a, b, out);
    const double serial = seconds_since(t0) / reps;

    kernels::parallel::matmul(a, b, out);
    t0 = Clock::now();
    for (int r = 0; r < reps; ++r) kernels::parallel::matmul(a, b, out);
    const double par = seconds_since(t0) / reps;

    std::printf("matmul %4dx%-4d  serial %8.2f ms (%6.2f GF/s)   omp %8.2f ms (%6.2f GF/s)   x%.2f\n",
                n, n, serial * 1e3, flops / serial * 1e-9, par * 1e3, flops / par * 1e-9,
                serial / par);
}

double time_train_steps(kernels::Mode mode, const Dataset& ds, int steps) {
    kernels::set_mode(mode);
    ModelConfig cfg = ModelConfig::synthetic_defaults();
    cfg.epochs = 1;
    Trainer trainer(cfg);
    Dataset slice;
    slice.d_v = ds.d_v;
    slice.d_a = ds.d_a;
    slice.d_q = ds.d_q;
    slice.samples.assign(ds.samples.begin(),
                         ds.samples.begin() + std::min<size_t>(ds.size(), cfg.batch_size * steps));
    auto t0 = Clock::now();
    trainer.train(slice, "/tmp/img-bench-out", nullptr);
    return seconds_since(t0) / steps;
}

}  // namespace

int main() {
    std::printf("threads available: %d\n\n", kernels::max_threads());
    for (int n : {64, 128, 256, 512}) bench_matmul(n);

    SyntheticSpec spec;
    spec.n_samples = 8 * 16;
    auto samples = generate_synthetic_dataset(spec);
    Dataset ds;
    ds.samples = std::move(samples);
    ds.d_v = spec.d_v;
    ds.d_a = spec.d_a;
    ds.d_q = spec.d_q;

    std::printf("\ntrain step, batch 16, desk-scale config (sample-parallel + kernels):\n");
    const double serial = time_train_steps(kernels::Mode::Serial, ds, 8);
    const double par = time_train_steps(kernels::Mode::Parallel, ds, 8);
    std::printf("  serial   %8.2f ms/step\n", serial * 1e3);
    std::printf("  parallel %8.2f ms/step   x%.2f\n", par * 1e3, serial / par);
    return 0;
}
