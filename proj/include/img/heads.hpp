// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include "img/annotation.hpp"
#include "img/config.hpp"
#include "img/encoding.hpp"

namespace img {

// Span predictor for one branch. The start head runs a light sequence
// block (FFN + convolution, residual + norm) over the branch features; the
// end head is stacked on the start head's hidden sequence so end scores
// are conditioned on start evidence.
struct HeadBlock {
    Linear ffn1, ffn2;
    Conv1d conv;
    LayerNorm ln_ffn, ln_conv;
};

HeadBlock make_head_block(ParamStore& ps, Rng& rng, const std::string& name, int d, int conv_k);
Var apply_head_block(Tape& t, const HeadBlock& hb, Var x, const Mask& mask);

struct SpanHead {
    HeadBlock start_block, end_block;
    Linear start, end;
};

struct SpanLogits {
    Var start;  // [1,T], masked positions at kMaskLogit
    Var end;
};

SpanHead make_span_head(ParamStore& ps, Rng& rng, const std::string& name, int d, int conv_k);
SpanLogits predict_span_logits(Tape& t, const SpanHead& head, Var x, const Mask& mask);

// --- Plain (tape-free) loss evaluations; these are the canonical
// --- formulas, mirrored op-for-op by the tape terms used in training.

// Cross entropy of start and end against one-hot ground truth indices.
double span_retrieval_loss(const Matrix& start_logits, const Matrix& end_logits,
                           const MomentAnnotation& gt, const Mask& mask);

// tau^2 * [KL(softmax(s_s/tau) || softmax(t_s/tau)) + same for end].
double kd_loss(const Matrix& student_start, const Matrix& student_end, const Matrix& teacher_start,
               const Matrix& teacher_end, double tau, const Mask& mask);

struct LossParts {
    double ret = 0.0;
    double importance = 0.0;
    double kd = 0.0;
    double saliency = 0.0;
};

// Weighted sum; throws TrainingDivergence on non-finite components.
double total_loss(const LossParts& parts, const LossWeights& w);

// --- Tape-side terms.

Var span_ce_term(Tape& t, const SpanLogits& logits, const MomentAnnotation& gt, const Mask& mask);
// Teacher logits are detached inside; gradients reach the student only.
Var kd_term(Tape& t, const SpanLogits& student, const SpanLogits& teacher, double tau,
            const Mask& mask);

// Hinge saliency on one stream: sample an in-moment and an out-of-moment
// frame, push their learned scores apart by the margin. Returns zero when
// either side of the moment has no unmasked frame.
Var saliency_term(Tape& t, const Linear& score, Var features, const MomentAnnotation& gt,
                  const Mask& mask, Rng& rng, double margin, int pairs);

}  // namespace img
