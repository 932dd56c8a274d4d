// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "img/model.hpp"

#include "img/metrics.hpp"

namespace img {

Model::Model(const ModelConfig& config) : cfg(config) {
    cfg.validate();
    Rng rng(static_cast<uint64_t>(cfg.seed));
    const int d = cfg.d;
    const int conv_k = 7;

    proj_v = make_linear(params, rng, "proj_v", cfg.d_v, d);
    proj_a = make_linear(params, rng, "proj_a", cfg.d_a, d);
    proj_q = make_linear(params, rng, "proj_q", cfg.d_q, d);

    enc_v = make_sequence_encoder(params, rng, "enc_v", d, cfg.heads, conv_k, cfg.max_frames);
    enc_a = make_sequence_encoder(params, rng, "enc_a", d, cfg.heads, conv_k, cfg.max_frames);
    enc_qv = make_sequence_encoder(params, rng, "enc_qv", d, cfg.heads, conv_k, cfg.max_tokens);
    enc_qa = make_sequence_encoder(params, rng, "enc_qa", d, cfg.heads, conv_k, cfg.max_tokens);

    cqa_v = make_cqa(params, rng, "cqa_v", d);
    cqa_a = make_cqa(params, rng, "cqa_a", d);

    aip = make_importance_predictor(params, rng, "aip", d);
    fusion = make_fusion_module(params, rng, "fusion", cfg);

    const int head_conv_k = 5;
    head_v = make_span_head(params, rng, "head_v", d, head_conv_k);
    head_a = make_span_head(params, rng, "head_a", d, head_conv_k);
    head_f = make_span_head(params, rng, "head_f", d, head_conv_k);

    sal_v = make_linear(params, rng, "sal_v", d, 1);
    sal_a = make_linear(params, rng, "sal_a", d, 1);
    sal_f = make_linear(params, rng, "sal_f", d, 1);
}

Var Model::encode_visual(Tape& t, const FeatureBundle& b) const {
    if (b.visual.empty()) throw ValidationError(b.annotation.video_id + ": visual features missing");
    Var v = encode_sequence(t, enc_v, apply_linear(t, proj_v, t.input(b.visual)), b.frame_mask);
    Var q = encode_sequence(t, enc_qv, apply_linear(t, proj_q, t.input(b.query)), b.token_mask);
    return context_query_attention(t, cqa_v, v, q, b.frame_mask, b.token_mask);
}

Var Model::encode_audio(Tape& t, const FeatureBundle& b) const {
    if (b.audio.empty()) throw ValidationError(b.annotation.video_id + ": audio features missing");
    Var a = encode_sequence(t, enc_a, apply_linear(t, proj_a, t.input(b.audio)), b.frame_mask);
    Var q = encode_sequence(t, enc_qa, apply_linear(t, proj_q, t.input(b.query)), b.token_mask);
    return context_query_attention(t, cqa_a, a, q, b.frame_mask, b.token_mask);
}

Model::SampleForward Model::forward_train(Tape& t, const FeatureBundle& b, int epoch,
                                          uint64_t saliency_seed, double inv_batch) const {
    const Mask& fmask = b.frame_mask;
    Var v_hat = encode_visual(t, b);
    Var a_hat = encode_audio(t, b);

    SpanLogits logits_v = predict_span_logits(t, head_v, v_hat, fmask);
    SpanLogits logits_a = predict_span_logits(t, head_a, a_hat, fmask);
    Var ce_v = span_ce_term(t, logits_v, b.annotation, fmask);
    Var ce_a = span_ce_term(t, logits_a, b.annotation, fmask);

    SampleForward out;
    out.record.loss_v = t.scalar_value(ce_v);
    out.record.loss_a = t.scalar_value(ce_a);
    // Pseudo label from detached per-sample branch losses (plain doubles,
    // so no gradient can flow back through the label path).
    out.record.y_raw = pseudo_importance_raw(out.record.loss_v, out.record.loss_a, cfg.importance.gamma);
    out.record.y_label = pseudo_importance_label(out.record.loss_v, out.record.loss_a, cfg.importance);

    Var p = predict_importance(t, aip, v_hat, a_hat, fmask);
    out.record.p = t.scalar_value(p);
    const double alpha = curriculum_alpha(epoch, cfg.importance);
    Var p_eff = t.add_const(t.scale(p, alpha), 0.5 * (1.0 - alpha));
    out.record.p_eff = t.scalar_value(p_eff);

    FusionOutputs fused = fuse_modalities(t, fusion, v_hat, a_hat, p_eff, fmask);
    SpanLogits logits_f = predict_span_logits(t, head_f, fused.fused, fmask);
    Var ce_f = span_ce_term(t, logits_f, b.annotation, fmask);

    Var kd_v = kd_term(t, logits_v, logits_f, cfg.loss.tau, fmask);
    Var kd_a = kd_term(t, logits_a, logits_f, cfg.loss.tau, fmask);
    Var bce = importance_bce_term(t, p, out.record.y_label);

    Rng sal_rng(saliency_seed);
    Var sal = t.add(
        t.add(saliency_term(t, sal_v, v_hat, b.annotation, fmask, sal_rng, cfg.loss.saliency_margin,
                            cfg.loss.saliency_pairs),
              saliency_term(t, sal_a, a_hat, b.annotation, fmask, sal_rng, cfg.loss.saliency_margin,
                            cfg.loss.saliency_pairs)),
        saliency_term(t, sal_f, fused.fused, b.annotation, fmask, sal_rng, cfg.loss.saliency_margin,
                      cfg.loss.saliency_pairs));

    out.ce_v = t.scalar_value(ce_v);
    out.ce_a = t.scalar_value(ce_a);
    out.ce_f = t.scalar_value(ce_f);
    out.bce = t.scalar_value(bce);
    out.kd_v = t.scalar_value(kd_v);
    out.kd_a = t.scalar_value(kd_a);
    out.saliency = t.scalar_value(sal);

    // Per-sample share of Eq-10: retrieval, importance and saliency terms
    // are batch means; the distillation term is a batch sum.
    Var ret = t.add(t.add(ce_v, ce_a), ce_f);
    Var weighted = t.add(
        t.add(t.scale(ret, inv_batch), t.scale(bce, cfg.loss.lambda1 * inv_batch)),
        t.add(t.scale(t.add(kd_v, kd_a), cfg.loss.lambda2),
              t.scale(sal, cfg.loss.lambda3 * inv_batch)));
    out.contribution = weighted;
    return out;
}

Model::EvalOutput Model::forward_eval(const FeatureBundle& b, Branch branch, PMode pmode,
                                      double p_override) const {
    Tape t(&params, /*record=*/false);
    const Mask& fmask = b.frame_mask;
    EvalOutput out;
    if (branch == Branch::Visual) {
        SpanLogits logits = predict_span_logits(t, head_v, encode_visual(t, b), fmask);
        out.start_logits = t.value(logits.start);
        out.end_logits = t.value(logits.end);
        return out;
    }
    if (branch == Branch::Audio) {
        SpanLogits logits = predict_span_logits(t, head_a, encode_audio(t, b), fmask);
        out.start_logits = t.value(logits.start);
        out.end_logits = t.value(logits.end);
        return out;
    }
    Var v_hat = encode_visual(t, b);
    Var a_hat = encode_audio(t, b);
    double p = p_override;
    if (pmode == PMode::Predictor)
        p = t.scalar_value(predict_importance(t, aip, v_hat, a_hat, fmask));
    else if (pmode == PMode::FixedHalf)
        p = 0.5;
    out.p = p;
    FusionOutputs fused = fuse_modalities(t, fusion, v_hat, a_hat, t.scalar(p), fmask);
    SpanLogits logits = predict_span_logits(t, head_f, fused.fused, fmask);
    out.start_logits = t.value(logits.start);
    out.end_logits = t.value(logits.end);
    return out;
}

Model::FusionProbe Model::probe_fusion(const FeatureBundle& b, double p_value) const {
    Tape t(&params, /*record=*/false);
    const Mask& fmask = b.frame_mask;
    Var v_hat = encode_visual(t, b);
    Var a_hat = encode_audio(t, b);
    FusionOutputs fused = fuse_modalities(t, fusion, v_hat, a_hat, t.scalar(p_value), fmask);
    SpanLogits logits = predict_span_logits(t, head_f, fused.fused, fmask);
    FusionProbe probe;
    probe.local = t.value(fused.local);
    probe.event = t.value(fused.event);
    probe.global = t.value(fused.global);
    probe.fused = t.value(fused.fused);
    probe.start_logits = t.value(logits.start);
    probe.end_logits = t.value(logits.end);
    probe.span = decode_span(probe.start_logits, probe.end_logits, fmask);
    return probe;
}

}  // namespace img
