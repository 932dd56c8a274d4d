// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "img/importance.hpp"

#include <algorithm>
#include <cmath>

#include "img/errors.hpp"

namespace img {

double pseudo_importance_raw(double loss_v, double loss_a, double gamma) {
    if (!std::isfinite(loss_v) || !std::isfinite(loss_a))
        throw ValidationError("pseudo importance: non-finite branch loss");
    // e^{lv/g} / (e^{la/g} + e^{lv/g}) == sigmoid((lv - la)/g). The negative
    // branch is written as the exact complement of the positive branch
    // (1 - s is exact for s in [0.5, 1]), so swapping the losses yields a
    // pair that sums to 1 bitwise.
    const double z = (loss_v - loss_a) / gamma;
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    return 1.0 - 1.0 / (1.0 + std::exp(z));
}

double pseudo_importance_label(double loss_v, double loss_a, const ImportanceConfig& cfg) {
    const double y = pseudo_importance_raw(loss_v, loss_a, cfg.gamma);
    if (y >= cfg.eps_max) return 1.0;
    if (y < cfg.eps_min) return 0.0;
    return y;
}

double importance_bce_loss(std::span<const double> p, std::span<const double> y) {
    if (p.empty() || p.size() != y.size())
        throw ValidationError("importance_bce_loss: empty or mismatched batch");
    double acc = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        const double pi = std::clamp(p[i], kBceClamp, 1.0 - kBceClamp);
        acc += y[i] * std::log(pi) + (1.0 - y[i]) * std::log(1.0 - pi);
    }
    return -acc / static_cast<double>(p.size());
}

double curriculum_alpha(int epoch, const ImportanceConfig& cfg) {
    if (epoch < 0) epoch = 0;
    return std::min(1.0, static_cast<double>(epoch) / static_cast<double>(cfg.warmup_epochs));
}

double effective_weight(double p, int epoch, const ImportanceConfig& cfg) {
    const double alpha = curriculum_alpha(epoch, cfg);
    return (1.0 - alpha) * 0.5 + alpha * p;
}

ImportancePredictor make_importance_predictor(ParamStore& ps, Rng& rng, const std::string& name, int d) {
    ImportancePredictor aip;
    aip.pool_a = make_attention_pool(ps, rng, name + ".pool_a", d);
    aip.pool_v = make_attention_pool(ps, rng, name + ".pool_v", d);
    aip.hidden = make_linear(ps, rng, name + ".hidden", 2 * d, d);
    aip.out = make_linear(ps, rng, name + ".out", d, 1);
    return aip;
}

Var predict_importance(Tape& t, const ImportancePredictor& aip, Var visual_fused, Var audio_fused,
                       const Mask& frame_mask) {
    Var g_a = attention_pool(t, aip.pool_a, audio_fused, frame_mask);
    Var g_v = attention_pool(t, aip.pool_v, visual_fused, frame_mask);
    Var h = t.gelu(apply_linear(t, aip.hidden, t.concat_cols({g_a, g_v})));
    return t.sigmoid(apply_linear(t, aip.out, h));
}

Var importance_bce_term(Tape& t, Var p, double y_label) {
    Var pc = t.clamp(p, kBceClamp, 1.0 - kBceClamp);
    Var pos = t.scale(t.log_(pc), -y_label);
    Var neg = t.scale(t.log_(t.add_const(t.scale(pc, -1.0), 1.0)), -(1.0 - y_label));
    return t.add(pos, neg);
}

}  // namespace img
