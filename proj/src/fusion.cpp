// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "img/fusion.hpp"

#include <cmath>

#include "img/errors.hpp"

namespace img {

GranularityMerge make_granularity_merge(ParamStore& ps, const std::string& name, int d) {
    GranularityMerge m;
    m.ln_v = make_layer_norm(ps, name + ".ln_v", d);
    m.ln_a = make_layer_norm(ps, name + ".ln_a", d);
    return m;
}

Var importance_merge(Tape& t, const GranularityMerge& m, Var visual, Var audio, Var p_eff,
                     const Mask& mask) {
    Var one_minus_p = t.add_const(t.scale(p_eff, -1.0), 1.0);
    Var v_part = t.mul_scalar(apply_layer_norm(t, m.ln_v, visual), one_minus_p);
    Var a_part = t.mul_scalar(apply_layer_norm(t, m.ln_a, audio), p_eff);
    return t.mask_rows(t.add(v_part, a_part), mask);
}

LocalFusion make_local_fusion(ParamStore& ps, Rng& rng, const std::string& name, int d,
                              const std::vector<int>& kernel_bank) {
    LocalFusion lf;
    for (size_t i = 0; i < kernel_bank.size(); ++i) {
        const std::string suffix = ".conv_k" + std::to_string(kernel_bank[i]);
        lf.conv_v.push_back(make_conv1d(ps, rng, name + ".v" + suffix, d, d, kernel_bank[i]));
        lf.conv_a.push_back(make_conv1d(ps, rng, name + ".a" + suffix, d, d, kernel_bank[i]));
    }
    const int cat_width = static_cast<int>(kernel_bank.size()) * d;
    lf.merge_v = make_linear(ps, rng, name + ".merge_v", cat_width, d);
    lf.merge_a = make_linear(ps, rng, name + ".merge_a", cat_width, d);
    lf.merge = make_granularity_merge(ps, name + ".merge", d);
    return lf;
}

Var local_branch(Tape& t, const std::vector<Conv1d>& bank, const Linear& merge, Var x,
                 const Mask& mask) {
    Var x0 = t.mask_rows(x, mask);
    std::vector<Var> outs;
    outs.reserve(bank.size());
    for (const Conv1d& conv : bank) outs.push_back(t.gelu(apply_conv1d(t, conv, x0)));
    Var cat = outs.size() == 1 ? outs[0] : t.concat_cols(outs);
    return apply_linear(t, merge, cat);
}

Var local_fuse(Tape& t, const LocalFusion& lf, Var visual, Var audio, Var p_eff, const Mask& mask) {
    Var v_l = local_branch(t, lf.conv_v, lf.merge_v, visual, mask);
    Var a_l = local_branch(t, lf.conv_a, lf.merge_a, audio, mask);
    return importance_merge(t, lf.merge, v_l, a_l, p_eff, mask);
}

SlotAttention make_slot_attention(ParamStore& ps, Rng& rng, const std::string& name, int d,
                                  int num_slots, int iters) {
    if (iters < 1) throw ConfigError("slot attention: iters must be at least 1");
    if (num_slots < 1) throw ConfigError("slot attention: need at least one slot");
    SlotAttention sa;
    sa.num_slots = num_slots;
    sa.iters = iters;
    sa.slots_init = ps.add(name + ".slots", init_uniform_fan_in(rng, num_slots, d, d));
    sa.q = make_linear(ps, rng, name + ".q", d, d);
    sa.k = make_linear(ps, rng, name + ".k", d, d);
    sa.v = make_linear(ps, rng, name + ".v", d, d);
    sa.ln_slots = make_layer_norm(ps, name + ".ln_slots", d);
    sa.ln_mlp = make_layer_norm(ps, name + ".ln_mlp", d);
    sa.mlp1 = make_linear(ps, rng, name + ".mlp1", d, d);
    sa.mlp2 = make_linear(ps, rng, name + ".mlp2", d, d);
    sa.w_ih = ps.add(name + ".gru.w_ih", init_uniform_fan_in(rng, d, 3 * d, d));
    sa.b_ih = ps.add(name + ".gru.b_ih", init_uniform_fan_in(rng, 1, 3 * d, d));
    sa.w_hh = ps.add(name + ".gru.w_hh", init_uniform_fan_in(rng, d, 3 * d, d));
    sa.b_hh = ps.add(name + ".gru.b_hh", init_uniform_fan_in(rng, 1, 3 * d, d));
    return sa;
}

namespace {

// GRU cell applied row-wise: hidden [e,d], update [e,d].
Var slot_gru_cell(Tape& t, const SlotAttention& sa, Var update, Var hidden) {
    const int d = t.value(hidden).cols();
    Var gi = t.add_row(t.matmul(update, t.param(sa.w_ih)), t.param(sa.b_ih));
    Var gh = t.add_row(t.matmul(hidden, t.param(sa.w_hh)), t.param(sa.b_hh));
    Var r = t.sigmoid(t.add(t.slice_cols(gi, 0, d), t.slice_cols(gh, 0, d)));
    Var z = t.sigmoid(t.add(t.slice_cols(gi, d, 2 * d), t.slice_cols(gh, d, 2 * d)));
    Var n = t.tanh_(t.add(t.slice_cols(gi, 2 * d, 3 * d), t.mul(r, t.slice_cols(gh, 2 * d, 3 * d))));
    Var one_minus_z = t.add_const(t.scale(z, -1.0), 1.0);
    return t.add(t.mul(one_minus_z, n), t.mul(z, hidden));
}

}  // namespace

Var slot_attention_from(Tape& t, const SlotAttention& sa, Var x, const Mask& mask, Var slots0,
                        SlotTrace* trace) {
    if (nn::count_true(mask) == 0) throw ValidationError("slot attention: empty mask");
    const int d = t.value(x).cols();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Var x0 = t.mask_rows(x, mask);
    Var keys = apply_linear(t, sa.k, x0);
    Var values = apply_linear(t, sa.v, x0);
    Var slots = slots0;
    for (int it = 0; it < sa.iters; ++it) {
        Var q = t.scale(apply_linear(t, sa.q, apply_layer_norm(t, sa.ln_slots, slots)), scale);
        Var logits = t.matmul_nt(keys, q);  // [T,e]
        // Softmax over the slot axis; the ordered reduction keeps the
        // result invariant under slot permutation. Masked rows drop out.
        Var attn = t.mask_rows(t.softmax_rows(logits, nullptr, /*ordered_sum=*/true), mask);
        Var col_weight = t.add_const(t.sum_rows(attn), kSlotWeightEps);  // [1,e]
        Var w = t.mul_row(attn, t.reciprocal(col_weight));
        Var update = t.matmul_tn(w, values);  // [e,d] weighted mean of values
        if (trace) {
            trace->attn.push_back(t.value(attn));
            trace->weighted_mean.push_back(t.value(update));
        }
        slots = slot_gru_cell(t, sa, update, slots);
        Var h = apply_linear(t, sa.mlp2, t.gelu(apply_linear(t, sa.mlp1, apply_layer_norm(t, sa.ln_mlp, slots))));
        slots = t.add(slots, h);
    }
    return slots;
}

Var slot_attention(Tape& t, const SlotAttention& sa, Var x, const Mask& mask, SlotTrace* trace) {
    return slot_attention_from(t, sa, x, mask, t.param(sa.slots_init), trace);
}

EventFusion make_event_fusion(ParamStore& ps, Rng& rng, const std::string& name, int d,
                              int num_slots, int iters, bool cross_modal) {
    EventFusion ef;
    ef.cross_modal = cross_modal;
    ef.slot_v = make_slot_attention(ps, rng, name + ".slot_v", d, num_slots, iters);
    ef.slot_a = make_slot_attention(ps, rng, name + ".slot_a", d, num_slots, iters);
    ef.q_v = make_linear(ps, rng, name + ".q_v", d, d);
    ef.k_v = make_linear(ps, rng, name + ".k_v", d, d);
    ef.v_v = make_linear(ps, rng, name + ".v_v", d, d);
    ef.o_v = make_linear(ps, rng, name + ".o_v", d, d);
    ef.q_a = make_linear(ps, rng, name + ".q_a", d, d);
    ef.k_a = make_linear(ps, rng, name + ".k_a", d, d);
    ef.v_a = make_linear(ps, rng, name + ".v_a", d, d);
    ef.o_a = make_linear(ps, rng, name + ".o_a", d, d);
    ef.merge = make_granularity_merge(ps, name + ".merge", d);
    return ef;
}

namespace {

// Single-head cross-attention from frames to event slots with residual.
Var attend_events(Tape& t, const Linear& lq, const Linear& lk, const Linear& lv, const Linear& lo,
                  Var x, Var slots, const Mask& mask) {
    const int d = t.value(x).cols();
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    Var q = apply_linear(t, lq, x);
    Var k = apply_linear(t, lk, slots);
    Var v = apply_linear(t, lv, slots);
    Var attn = t.softmax_rows(t.scale(t.matmul_nt(q, k), scale));  // [T,e]
    Var ctx = apply_linear(t, lo, t.matmul(attn, v));
    return t.mask_rows(t.add(x, ctx), mask);
}

}  // namespace

Var event_fuse(Tape& t, const EventFusion& ef, Var visual, Var audio, Var p_eff, const Mask& mask) {
    Var slots_v = slot_attention(t, ef.slot_v, visual, mask);
    Var slots_a = slot_attention(t, ef.slot_a, audio, mask);
    // Default: each modality attends to its own events, which keeps the
    // merged output exactly audio-free at p_eff = 0 (and vice versa).
    Var kv_for_v = ef.cross_modal ? slots_a : slots_v;
    Var kv_for_a = ef.cross_modal ? slots_v : slots_a;
    Var v_e = attend_events(t, ef.q_v, ef.k_v, ef.v_v, ef.o_v, visual, kv_for_v, mask);
    Var a_e = attend_events(t, ef.q_a, ef.k_a, ef.v_a, ef.o_a, audio, kv_for_a, mask);
    return importance_merge(t, ef.merge, v_e, a_e, p_eff, mask);
}

GlobalFusion make_global_fusion(ParamStore& ps, Rng& rng, const std::string& name, int d) {
    GlobalFusion gf;
    gf.pool_v = make_attention_pool(ps, rng, name + ".pool_v", d);
    gf.pool_a = make_attention_pool(ps, rng, name + ".pool_a", d);
    gf.proj_v = make_linear(ps, rng, name + ".proj_v", 2 * d, d);
    gf.proj_a = make_linear(ps, rng, name + ".proj_a", 2 * d, d);
    gf.merge = make_granularity_merge(ps, name + ".merge", d);
    return gf;
}

namespace {

Var global_branch(Tape& t, const AttentionPool& pool, const Linear& proj, Var x, const Mask& mask) {
    const int T = t.value(x).rows();
    Var g = attention_pool(t, pool, x, mask);
    Var cat = t.concat_cols({x, t.repeat_row(g, T)});
    return t.gelu(apply_linear(t, proj, cat));
}

}  // namespace

Var global_fuse(Tape& t, const GlobalFusion& gf, Var visual, Var audio, Var p_eff, const Mask& mask) {
    Var v_g = global_branch(t, gf.pool_v, gf.proj_v, visual, mask);
    Var a_g = global_branch(t, gf.pool_a, gf.proj_a, audio, mask);
    return importance_merge(t, gf.merge, v_g, a_g, p_eff, mask);
}

BiGru make_bigru(ParamStore& ps, Rng& rng, const std::string& name, int in, int hidden) {
    BiGru gru;
    gru.fwd_wi = ps.add(name + ".fwd.w_ih", init_uniform_fan_in(rng, in, 3 * hidden, hidden));
    gru.fwd_bi = ps.add(name + ".fwd.b_ih", init_uniform_fan_in(rng, 1, 3 * hidden, hidden));
    gru.fwd_wh = ps.add(name + ".fwd.w_hh", init_uniform_fan_in(rng, hidden, 3 * hidden, hidden));
    gru.fwd_bh = ps.add(name + ".fwd.b_hh", init_uniform_fan_in(rng, 1, 3 * hidden, hidden));
    gru.bwd_wi = ps.add(name + ".bwd.w_ih", init_uniform_fan_in(rng, in, 3 * hidden, hidden));
    gru.bwd_bi = ps.add(name + ".bwd.b_ih", init_uniform_fan_in(rng, 1, 3 * hidden, hidden));
    gru.bwd_wh = ps.add(name + ".bwd.w_hh", init_uniform_fan_in(rng, hidden, 3 * hidden, hidden));
    gru.bwd_bh = ps.add(name + ".bwd.b_hh", init_uniform_fan_in(rng, 1, 3 * hidden, hidden));
    return gru;
}

Var apply_bigru(Tape& t, const BiGru& gru, Var x) {
    Var fwd = t.gru_sequence(x, t.param(gru.fwd_wi), t.param(gru.fwd_bi), t.param(gru.fwd_wh),
                             t.param(gru.fwd_bh), /*reverse=*/false);
    Var bwd = t.gru_sequence(x, t.param(gru.bwd_wi), t.param(gru.bwd_bi), t.param(gru.bwd_wh),
                             t.param(gru.bwd_bh), /*reverse=*/true);
    return t.concat_cols({fwd, bwd});
}

MultiScaleMerge make_multi_scale_merge(ParamStore& ps, Rng& rng, const std::string& name, int d) {
    if (d % 2 != 0) throw ConfigError("multi_scale_merge: d must be even");
    MultiScaleMerge msm;
    msm.local_event = make_bigru(ps, rng, name + ".gru_le", 2 * d, d / 2);
    msm.local_global = make_bigru(ps, rng, name + ".gru_lg", 2 * d, d / 2);
    msm.event_global = make_bigru(ps, rng, name + ".gru_eg", 2 * d, d / 2);
    msm.mlp1 = make_linear(ps, rng, name + ".mlp1", 3 * d, 2 * d);
    msm.mlp2 = make_linear(ps, rng, name + ".mlp2", 2 * d, d);
    return msm;
}

Var multi_scale_merge(Tape& t, const MultiScaleMerge& msm, Var f_local, Var f_event, Var f_global,
                      const Mask& mask) {
    Var le = apply_bigru(t, msm.local_event, t.mask_rows(t.concat_cols({f_local, f_event}), mask));
    Var lg = apply_bigru(t, msm.local_global, t.mask_rows(t.concat_cols({f_local, f_global}), mask));
    Var eg = apply_bigru(t, msm.event_global, t.mask_rows(t.concat_cols({f_event, f_global}), mask));
    Var cat = t.concat_cols({le, lg, eg});
    Var out = apply_linear(t, msm.mlp2, t.gelu(apply_linear(t, msm.mlp1, cat)));
    return t.mask_rows(out, mask);
}

FusionModule make_fusion_module(ParamStore& ps, Rng& rng, const std::string& name,
                                const ModelConfig& cfg) {
    FusionModule fm;
    fm.local = make_local_fusion(ps, rng, name + ".local", cfg.d, cfg.kernel_bank);
    fm.event = make_event_fusion(ps, rng, name + ".event", cfg.d, cfg.slots, cfg.slot_iters,
                                 cfg.event_cross_modal);
    fm.global = make_global_fusion(ps, rng, name + ".global", cfg.d);
    fm.merge = make_multi_scale_merge(ps, rng, name + ".merge", cfg.d);
    return fm;
}

FusionOutputs fuse_modalities(Tape& t, const FusionModule& fm, Var visual, Var audio, Var p_eff,
                              const Mask& mask) {
    FusionOutputs out;
    out.local = local_fuse(t, fm.local, visual, audio, p_eff, mask);
    out.event = event_fuse(t, fm.event, visual, audio, p_eff, mask);
    out.global = global_fuse(t, fm.global, visual, audio, p_eff, mask);
    out.fused = multi_scale_merge(t, fm.merge, out.local, out.event, out.global, mask);
    return out;
}

}  // namespace img
