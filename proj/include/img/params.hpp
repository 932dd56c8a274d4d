// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "img/matrix.hpp"
#include "img/rng.hpp"

namespace img {

// Named trainable tensors. Registration order is fixed by model
// construction, which makes checkpoints and optimizer state positional.
class ParamStore {
public:
    int add(std::string name, Matrix value) {
        entries_.push_back({std::move(name), std::move(value)});
        return static_cast<int>(entries_.size()) - 1;
    }

    int count() const { return static_cast<int>(entries_.size()); }

    Matrix& value(int id) { return entries_[id].value; }
    const Matrix& value(int id) const { return entries_[id].value; }
    const std::string& name(int id) const { return entries_[id].name; }

    int find(const std::string& name) const {
        for (int i = 0; i < count(); ++i)
            if (entries_[i].name == name) return i;
        return -1;
    }

    size_t total_scalars() const {
        size_t n = 0;
        for (const auto& e : entries_) n += e.value.size();
        return n;
    }

private:
    struct Entry {
        std::string name;
        Matrix value;
    };
    std::vector<Entry> entries_;
};

// Per-parameter gradient accumulator, shaped like a ParamStore.
class GradStore {
public:
    GradStore() = default;
    explicit GradStore(const ParamStore& ps) { resize(ps); }

    void resize(const ParamStore& ps) {
        grads_.resize(ps.count());
        for (int i = 0; i < ps.count(); ++i)
            grads_[i] = Matrix(ps.value(i).rows(), ps.value(i).cols());
    }

    void zero() {
        for (auto& g : grads_) g.fill(0.0);
    }

    Matrix& operator[](int id) { return grads_[id]; }
    const Matrix& operator[](int id) const { return grads_[id]; }
    int count() const { return static_cast<int>(grads_.size()); }

    void add(const GradStore& o) {
        for (int i = 0; i < count(); ++i) {
            Matrix& g = grads_[i];
            const Matrix& h = o.grads_[i];
            for (size_t k = 0; k < g.size(); ++k) g[k] += h[k];
        }
    }

    bool all_finite() const {
        for (const auto& g : grads_)
            if (!g.all_finite()) return false;
        return true;
    }

private:
    std::vector<Matrix> grads_;
};

// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Matrix init_uniform_fan_in(Rng& rng, int rows, int cols, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
    Matrix m(rows, cols);
    for (size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-bound, bound);
    return m;
}

}  // namespace img
