// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <span>

#include "img/config.hpp"
#include "img/encoding.hpp"

namespace img {

// Per-sample audio importance bookkeeping for one training step.
struct ImportanceRecord {
    double p = 0.5;       // predicted importance
    double y_raw = 0.5;   // pre-threshold pseudo score
    double y_label = 0.5; // thresholded pseudo label
    double p_eff = 0.5;   // curriculum-blended fusion weight
    double loss_v = 0.0;  // per-sample visual retrieval loss (detached)
    double loss_a = 0.0;  // per-sample audio retrieval loss (detached)
};

// Pre-threshold score: softmax of per-branch losses at temperature gamma,
// computed in the numerically stable sigmoid form.
double pseudo_importance_raw(double loss_v, double loss_a, double gamma);

// Thresholded pseudo label: 1 above eps_max, 0 below eps_min, raw between.
double pseudo_importance_label(double loss_v, double loss_a, const ImportanceConfig& cfg);

// Mean binary cross entropy between predictions and pseudo labels;
// predictions are clamped to [1e-7, 1-1e-7].
double importance_bce_loss(std::span<const double> p, std::span<const double> y);

inline constexpr double kBceClamp = 1e-7;

// Curriculum blend: (1-alpha)*0.5 + alpha*p with alpha = min(1, epoch/warmup).
double effective_weight(double p, int epoch, const ImportanceConfig& cfg);
double curriculum_alpha(int epoch, const ImportanceConfig& cfg);

// Audio importance predictor: attention-pool both modalities, concatenate
// [audio_global; visual_global], two-layer MLP, sigmoid.
struct ImportancePredictor {
    AttentionPool pool_a, pool_v;
    Linear hidden, out;
};

ImportancePredictor make_importance_predictor(ParamStore& ps, Rng& rng, const std::string& name, int d);
// Returns p as a [1,1] tape value in (0,1).
Var predict_importance(Tape& t, const ImportancePredictor& aip, Var visual_fused, Var audio_fused,
                       const Mask& frame_mask);

// Tape-side per-sample BCE term against a constant label.
Var importance_bce_term(Tape& t, Var p, double y_label);

}  // namespace img
