// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "img/errors.hpp"
#include "img/importance.hpp"
#include "test_util.hpp"

using namespace img;
using nn::Mask;
using nn::Tape;
using nn::Var;
using testutil::random_matrix;

TEST_CASE("predict_importance: zero output layer gives the neutral 0.5") {
    Rng rng(1);
    ParamStore ps;
    ImportancePredictor aip = make_importance_predictor(ps, rng, "aip", 4);
    ps.value(aip.out.w).fill(0.0);
    ps.value(aip.out.b).fill(0.0);
    Tape t(&ps, false);
    Mask mask = {1, 1, 1};
    Var p = predict_importance(t, aip, t.input(random_matrix(rng, 3, 4)),
                               t.input(random_matrix(rng, 3, 4)), mask);
    CHECK(t.scalar_value(p) == 0.5);
}

TEST_CASE("predict_importance: large output bias saturates towards 1") {
    Rng rng(2);
    ParamStore ps;
    ImportancePredictor aip = make_importance_predictor(ps, rng, "aip", 4);
    ps.value(aip.out.b).fill(50.0);
    ps.value(aip.out.w).fill(0.0);
    Tape t(&ps, false);
    Mask mask = {1, 1};
    Var p = predict_importance(t, aip, t.input(random_matrix(rng, 2, 4)),
                               t.input(random_matrix(rng, 2, 4)), mask);
    CHECK(t.scalar_value(p) > 1.0 - 1e-6);
    CHECK(t.scalar_value(p) <= 1.0);  // saturates to 1.0 exactly in double at bias 50
}

TEST_CASE("predict_importance: matches a pooled MLP+sigmoid oracle") {
    Rng rng(3);
    const int d = 4, T = 3;
    ParamStore ps;
    ImportancePredictor aip = make_importance_predictor(ps, rng, "aip", d);
    Matrix v = random_matrix(rng, T, d);
    Matrix a = random_matrix(rng, T, d);
    Mask mask = {1, 1, 1};
    Tape t(&ps, false);
    const double got = t.scalar_value(predict_importance(t, aip, t.input(v), t.input(a), mask));

    auto pool = [&](const AttentionPool& pl, const Matrix& x) {
        std::vector<double> scores(T), out(d, 0.0);
        for (int i = 0; i < T; ++i) {
            double acc = ps.value(pl.score.b).at(0, 0);
            for (int j = 0; j < d; ++j) acc += x.at(i, j) * ps.value(pl.score.w).at(j, 0);
            scores[i] = acc;
        }
        double mx = *std::max_element(scores.begin(), scores.end());
        double denom = 0.0;
        for (double s : scores) denom += std::exp(s - mx);
        for (int i = 0; i < T; ++i)
            for (int j = 0; j < d; ++j) out[j] += std::exp(scores[i] - mx) / denom * x.at(i, j);
        return out;
    };
    const auto ga = pool(aip.pool_a, a);
    const auto gv = pool(aip.pool_v, v);
    std::vector<double> cat;
    cat.insert(cat.end(), ga.begin(), ga.end());
    cat.insert(cat.end(), gv.begin(), gv.end());
    std::vector<double> h(d);
    for (int j = 0; j < d; ++j) {
        double acc = ps.value(aip.hidden.b).at(0, j);
        for (int i = 0; i < 2 * d; ++i) acc += cat[i] * ps.value(aip.hidden.w).at(i, j);
        h[j] = 0.5 * acc * (1.0 + std::erf(acc / std::sqrt(2.0)));
    }
    double z = ps.value(aip.out.b).at(0, 0);
    for (int j = 0; j < d; ++j) z += h[j] * ps.value(aip.out.w).at(j, 0);
    const double expect = 1.0 / (1.0 + std::exp(-z));
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("pseudo label: spec'd values") {
    ImportanceConfig cfg;  // gamma 3, eps 0.2/0.8
    CHECK(pseudo_importance_label(4.2, 4.2, cfg) == 0.5);
    CHECK(pseudo_importance_label(6, 3, cfg) ==
          doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-12));
    CHECK(pseudo_importance_label(0, 6, cfg) == 0.0);   // sigma(-2) = 0.119 < 0.2
    CHECK(pseudo_importance_label(12, 0, cfg) == 1.0);  // sigma(4) = 0.982 >= 0.8
    CHECK(pseudo_importance_raw(0, 6, 3) == doctest::Approx(0.119202922).epsilon(1e-8));
    CHECK(pseudo_importance_raw(12, 0, 3) == doctest::Approx(0.982013790).epsilon(1e-8));
}

TEST_CASE("pseudo label: non-finite losses rejected") {
    ImportanceConfig cfg;
    CHECK_THROWS_AS(pseudo_importance_label(std::nan(""), 1.0, cfg), ValidationError);
    CHECK_THROWS_AS(pseudo_importance_label(1.0, INFINITY, cfg), ValidationError);
}

TEST_CASE("pseudo label: complementarity under symmetric thresholds") {
    ImportanceConfig cfg;
    cfg.eps_min = 0.2;
    cfg.eps_max = 0.8;
    Rng rng(4);
    for (int i = 0; i < 2000; ++i) {
        const double a = rng.uniform(0.0, 12.0);
        const double b = rng.uniform(0.0, 12.0);
        const double s = pseudo_importance_label(a, b, cfg) + pseudo_importance_label(b, a, cfg);
        CHECK(std::fabs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("pseudo label: monotone in each argument") {
    ImportanceConfig cfg;
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double lv = rng.uniform(0.0, 10.0);
        const double la = rng.uniform(0.0, 10.0);
        const double dv = rng.uniform(0.0, 3.0);
        CHECK(pseudo_importance_label(lv + dv, la, cfg) >= pseudo_importance_label(lv, la, cfg));
        CHECK(pseudo_importance_label(lv, la + dv, cfg) <= pseudo_importance_label(lv, la, cfg));
    }
}

TEST_CASE("pseudo label: larger gamma flattens towards 0.5") {
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
        double lv = rng.uniform(0.0, 8.0);
        double la = rng.uniform(0.0, 8.0);
        if (lv == la) lv += 0.5;
        double prev = std::fabs(pseudo_importance_raw(lv, la, 1.0) - 0.5);
        for (double gamma : {2.0, 3.0, 5.0, 9.0}) {
            const double cur = std::fabs(pseudo_importance_raw(lv, la, gamma) - 0.5);
            CHECK(cur < prev);
            prev = cur;
        }
    }
}

TEST_CASE("importance_bce_loss: spec'd values") {
    std::vector<double> p = {0.5, 0.5}, y = {0.5, 0.5};
    CHECK(importance_bce_loss(p, y) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    std::vector<double> p2 = {0.9}, y2 = {1.0};
    CHECK(importance_bce_loss(p2, y2) == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
    std::vector<double> p3 = {1.0 - 1e-7, 1e-7}, y3 = {1.0, 0.0};
    CHECK(importance_bce_loss(p3, y3) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(importance_bce_loss(p3, y3) >= 0.0);
    std::vector<double> empty;
    CHECK_THROWS_AS(importance_bce_loss(empty, empty), ValidationError);
}

TEST_CASE("importance_bce_loss: nonnegative, zero only at saturated match") {
    Rng rng(7);
    for (int i = 0; i < 500; ++i) {
        std::vector<double> p = {rng.uniform(0.01, 0.99)}, y = {rng.uniform(0.0, 1.0)};
        const double loss = importance_bce_loss(p, y);
        CHECK(loss >= 0.0);
        if (std::fabs(p[0] - 0.5) > 0.01 || std::fabs(y[0] - 0.5) > 0.01) CHECK(loss > 1e-6);
    }
}

TEST_CASE("importance_bce_term on tape agrees with the plain loss") {
    Rng rng(8);
    ParamStore ps;
    const int pid = ps.add("p", Matrix::filled(1, 1, 0.0));
    for (int i = 0; i < 50; ++i) {
        const double pval = rng.uniform(0.02, 0.98);
        const double y = rng.uniform(0.0, 1.0);
        ps.value(pid).at(0, 0) = pval;
        Tape t(&ps, false);
        const double got = t.scalar_value(importance_bce_term(t, t.param(pid), y));
        std::vector<double> pv = {pval}, yv = {y};
        CHECK(got == doctest::Approx(importance_bce_loss(pv, yv)).epsilon(1e-12));
    }
}

TEST_CASE("effective_weight: curriculum endpoints and midpoint") {
    ImportanceConfig cfg;
    cfg.warmup_epochs = 30;
    CHECK(effective_weight(0.93, 0, cfg) == 0.5);
    CHECK(effective_weight(0.07, 0, cfg) == 0.5);
    CHECK(effective_weight(0.31, 30, cfg) == 0.31);
    CHECK(effective_weight(0.31, 77, cfg) == 0.31);
    CHECK(effective_weight(0.9, 15, cfg) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("gradient isolation: importance loss reaches no span-head parameter") {
    ModelConfig cfg = testutil::tiny_config();
    Model model(cfg);
    Rng rng(9);
    FeatureBundle b = testutil::random_bundle(rng, cfg);

    GradStore grads(model.params);
    Tape t(&model.params);
    Var v_hat = model.encode_visual(t, b);
    Var a_hat = model.encode_audio(t, b);
    Var p = predict_importance(t, model.aip, v_hat, a_hat, b.frame_mask);
    // Label derived from detached branch losses elsewhere; a constant here.
    t.backward(importance_bce_term(t, p, 0.75), grads);

    int heads_checked = 0;
    bool aip_has_grad = false;
    for (int i = 0; i < model.params.count(); ++i) {
        const std::string& name = model.params.name(i);
        if (name.rfind("head_", 0) == 0) {
            ++heads_checked;
            for (size_t k = 0; k < grads[i].size(); ++k) CHECK(grads[i][k] == 0.0);
        }
        if (name.rfind("aip.", 0) == 0)
            for (size_t k = 0; k < grads[i].size(); ++k)
                if (grads[i][k] != 0.0) aip_has_grad = true;
    }
    CHECK(heads_checked > 0);
    CHECK(aip_has_grad);
}
