// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "img/data.hpp"
#include "img/fusion.hpp"
#include "img/heads.hpp"
#include "img/importance.hpp"

namespace img {

// How the fusion weight is chosen at inference time.
enum class PMode {
    Predictor,  // audio importance predictor output
    FixedHalf,  // neutral 0.5
    Override    // caller-supplied value
};

// The full three-branch model: shared text-fused encoders, the audio
// importance predictor, multi-granularity fusion, and one span head per
// branch. All forward passes are const; parameters only change through
// the optimizer.
class Model {
public:
    explicit Model(const ModelConfig& cfg);

    ModelConfig cfg;
    ParamStore params;

    Linear proj_v, proj_a, proj_q;
    SequenceEncoder enc_v, enc_a, enc_qv, enc_qa;
    ContextQueryAttention cqa_v, cqa_a;
    ImportancePredictor aip;
    FusionModule fusion;
    SpanHead head_v, head_a, head_f;
    Linear sal_v, sal_a, sal_f;  // per-stream saliency scorers

    // Text-activated modality features (the CQA outputs).
    Var encode_visual(Tape& t, const FeatureBundle& b) const;
    Var encode_audio(Tape& t, const FeatureBundle& b) const;

    struct SampleForward {
        Var contribution;  // this sample's share of the batch objective
        ImportanceRecord record;
        double ce_v = 0, ce_a = 0, ce_f = 0;
        double bce = 0, kd_v = 0, kd_a = 0, saliency = 0;
    };
    // Full training forward for one sample. inv_batch is 1/B; the KD term
    // enters with weight 1 (it is summed, not averaged, over the batch).
    SampleForward forward_train(Tape& t, const FeatureBundle& b, int epoch, uint64_t saliency_seed,
                                double inv_batch) const;

    struct EvalOutput {
        Matrix start_logits;  // [1,T]
        Matrix end_logits;
        double p = 0.5;  // importance actually used (fusion branch only)
    };
    EvalOutput forward_eval(const FeatureBundle& b, Branch branch, PMode pmode = PMode::Predictor,
                            double p_override = 0.5) const;

    // Fusion internals at a forced weight, for suppression-invariance checks.
    struct FusionProbe {
        Matrix local, event, global, fused;
        Matrix start_logits, end_logits;
        std::pair<int, int> span;
    };
    FusionProbe probe_fusion(const FeatureBundle& b, double p_value) const;

    size_t parameter_count() const { return params.total_scalars(); }
};

}  // namespace img
