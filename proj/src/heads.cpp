// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "img/heads.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "img/errors.hpp"

namespace img {

HeadBlock make_head_block(ParamStore& ps, Rng& rng, const std::string& name, int d, int conv_k) {
    HeadBlock hb;
    hb.ffn1 = make_linear(ps, rng, name + ".ffn1", d, d);
    hb.ffn2 = make_linear(ps, rng, name + ".ffn2", d, d);
    hb.conv = make_conv1d(ps, rng, name + ".conv", d, d, conv_k);
    hb.ln_ffn = make_layer_norm(ps, name + ".ln_ffn", d);
    hb.ln_conv = make_layer_norm(ps, name + ".ln_conv", d);
    return hb;
}

Var apply_head_block(Tape& t, const HeadBlock& hb, Var x, const Mask& mask) {
    Var x0 = t.mask_rows(x, mask);
    Var f = apply_linear(t, hb.ffn2, t.gelu(apply_linear(t, hb.ffn1, x0)));
    Var u = t.mask_rows(apply_layer_norm(t, hb.ln_ffn, t.add(x0, f)), mask);
    Var c = t.gelu(apply_conv1d(t, hb.conv, u));
    return t.mask_rows(apply_layer_norm(t, hb.ln_conv, t.add(u, c)), mask);
}

SpanHead make_span_head(ParamStore& ps, Rng& rng, const std::string& name, int d, int conv_k) {
    SpanHead head;
    head.start_block = make_head_block(ps, rng, name + ".start_block", d, conv_k);
    head.end_block = make_head_block(ps, rng, name + ".end_block", d, conv_k);
    head.start = make_linear(ps, rng, name + ".start", d, 1);
    head.end = make_linear(ps, rng, name + ".end", d, 1);
    return head;
}

namespace {

// Force masked positions to the additive mask constant.
Var apply_logit_mask(Tape& t, Var logits_row, const Mask& mask) {
    const int T = t.value(logits_row).cols();
    Matrix keep(1, T), fill(1, T);
    for (int i = 0; i < T; ++i) {
        keep.at(0, i) = mask[i] ? 1.0 : 0.0;
        fill.at(0, i) = mask[i] ? 0.0 : kMaskLogit;
    }
    return t.add(t.mul_row(logits_row, t.input(keep)), t.input(fill));
}

}  // namespace

SpanLogits predict_span_logits(Tape& t, const SpanHead& head, Var x, const Mask& mask) {
    if (nn::count_true(mask) == 0) throw ValidationError("predict_span_logits: empty mask");
    Var h_start = apply_head_block(t, head.start_block, x, mask);
    Var h_end = apply_head_block(t, head.end_block, h_start, mask);
    SpanLogits out;
    out.start = apply_logit_mask(t, t.transpose(apply_linear(t, head.start, h_start)), mask);
    out.end = apply_logit_mask(t, t.transpose(apply_linear(t, head.end, h_end)), mask);
    return out;
}

namespace {

void check_gt(const MomentAnnotation& gt, int T, const Mask& mask) {
    if (gt.start_idx < 0 || gt.end_idx >= T || gt.start_idx > gt.end_idx)
        throw ValidationError("span loss: ground-truth indices out of range");
    if (!mask[gt.start_idx] || !mask[gt.end_idx])
        throw ValidationError("span loss: ground-truth frame is masked out");
}

double masked_log_softmax_at(const Matrix& logits, const Mask& mask, int idx) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < logits.cols(); ++j)
        if (mask[j]) mx = std::max(mx, logits.at(0, j));
    double denom = 0.0;
    for (int j = 0; j < logits.cols(); ++j)
        if (mask[j]) denom += std::exp(logits.at(0, j) - mx);
    return logits.at(0, idx) - (mx + std::log(denom));
}

}  // namespace

double span_retrieval_loss(const Matrix& start_logits, const Matrix& end_logits,
                           const MomentAnnotation& gt, const Mask& mask) {
    if (start_logits.rows() != 1 || end_logits.rows() != 1 ||
        start_logits.cols() != end_logits.cols())
        throw ValidationError("span loss: logits must be [1,T] pairs");
    check_gt(gt, start_logits.cols(), mask);
    return -masked_log_softmax_at(start_logits, mask, gt.start_idx) -
           masked_log_softmax_at(end_logits, mask, gt.end_idx);
}

namespace {

double kl_between(const Matrix& s, const Matrix& tch, double tau, const Mask& mask) {
    const int T = s.cols();
    auto dist = [&](const Matrix& x, std::vector<double>& p, std::vector<double>& lp) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < T; ++j)
            if (mask[j]) mx = std::max(mx, x.at(0, j) / tau);
        double denom = 0.0;
        for (int j = 0; j < T; ++j)
            if (mask[j]) denom += std::exp(x.at(0, j) / tau - mx);
        const double lse = mx + std::log(denom);
        for (int j = 0; j < T; ++j) {
            if (!mask[j]) {
                p[j] = 0.0;
                lp[j] = 0.0;
                continue;
            }
            lp[j] = x.at(0, j) / tau - lse;
            p[j] = std::exp(lp[j]);
        }
    };
    std::vector<double> ps(T), lps(T), pt(T), lpt(T);
    dist(s, ps, lps);
    dist(tch, pt, lpt);
    double kl = 0.0;
    for (int j = 0; j < T; ++j)
        if (mask[j]) kl += ps[j] * (lps[j] - lpt[j]);
    return kl;
}

}  // namespace

double kd_loss(const Matrix& student_start, const Matrix& student_end, const Matrix& teacher_start,
               const Matrix& teacher_end, double tau, const Mask& mask) {
    if (tau <= 0.0) throw ConfigError("kd_loss: tau must be positive");
    return tau * tau *
           (kl_between(student_start, teacher_start, tau, mask) +
            kl_between(student_end, teacher_end, tau, mask));
}

double total_loss(const LossParts& parts, const LossWeights& w) {
    const double total = parts.ret + w.lambda1 * parts.importance + w.lambda2 * parts.kd +
                         w.lambda3 * parts.saliency;
    if (!std::isfinite(total))
        throw TrainingDivergence(
            "non-finite loss: ret=" + std::to_string(parts.ret) +
            " importance=" + std::to_string(parts.importance) + " kd=" + std::to_string(parts.kd) +
            " saliency=" + std::to_string(parts.saliency));
    return total;
}

Var span_ce_term(Tape& t, const SpanLogits& logits, const MomentAnnotation& gt, const Mask& mask) {
    check_gt(gt, t.value(logits.start).cols(), mask);
    Var ls_start = t.log_softmax_rows(logits.start, &mask);
    Var ls_end = t.log_softmax_rows(logits.end, &mask);
    Var picked = t.add(t.pick(ls_start, 0, gt.start_idx), t.pick(ls_end, 0, gt.end_idx));
    return t.scale(picked, -1.0);
}

namespace {

Var kl_term(Tape& t, Var student, Var teacher_detached, double tau, const Mask& mask) {
    Var s_scaled = t.scale(student, 1.0 / tau);
    Var t_scaled = t.scale(teacher_detached, 1.0 / tau);
    Var ls = t.log_softmax_rows(s_scaled, &mask);
    Var lt = t.log_softmax_rows(t_scaled, &mask);
    Var p = t.softmax_rows(s_scaled, &mask);
    return t.sum_all(t.mul(p, t.sub(ls, lt)));
}

}  // namespace

Var kd_term(Tape& t, const SpanLogits& student, const SpanLogits& teacher, double tau,
            const Mask& mask) {
    if (tau <= 0.0) throw ConfigError("kd_term: tau must be positive");
    Var kl_start = kl_term(t, student.start, t.detach(teacher.start), tau, mask);
    Var kl_end = kl_term(t, student.end, t.detach(teacher.end), tau, mask);
    return t.scale(t.add(kl_start, kl_end), tau * tau);
}

Var saliency_term(Tape& t, const Linear& score, Var features, const MomentAnnotation& gt,
                  const Mask& mask, Rng& rng, double margin, int pairs) {
    const int T = t.value(features).rows();
    std::vector<int> inside, outside;
    for (int i = 0; i < T; ++i) {
        if (!mask[i]) continue;
        if (i >= gt.start_idx && i <= gt.end_idx)
            inside.push_back(i);
        else
            outside.push_back(i);
    }
    if (inside.empty() || outside.empty()) return t.scalar(0.0);
    Var scores = apply_linear(t, score, features);  // [T,1]
    Var acc = t.scalar(0.0);
    for (int p = 0; p < pairs; ++p) {
        const int tp = inside[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(inside.size()) - 1))];
        const int tn = outside[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(outside.size()) - 1))];
        Var gap = t.sub(t.pick(scores, tn, 0), t.pick(scores, tp, 0));
        acc = t.add(acc, t.relu(t.add_const(gap, margin)));
    }
    return pairs == 1 ? acc : t.scale(acc, 1.0 / pairs);
}

}  // namespace img
