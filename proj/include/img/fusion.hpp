// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <vector>

#include "img/config.hpp"
#include "img/encoding.hpp"

namespace img {

// Importance-weighted merge of Eq-style form:
//   (1 - p) * LN_v(visual) + p * LN_a(audio)
// with separate learnable norms per modality per granularity. Each output
// entry is affine in p, which is what makes the audio/vision suppression
// invariants exact at p = 0 / p = 1.
struct GranularityMerge {
    LayerNorm ln_v, ln_a;
};

GranularityMerge make_granularity_merge(ParamStore& ps, const std::string& name, int d);
Var importance_merge(Tape& t, const GranularityMerge& m, Var visual, Var audio, Var p_eff,
                     const Mask& mask);

// Local level: per modality, a bank of same-padded 1D convolutions with
// distinct kernel sizes, channel-concatenated and mapped back to width d.
struct LocalFusion {
    std::vector<Conv1d> conv_v, conv_a;
    Linear merge_v, merge_a;
    GranularityMerge merge;
};

LocalFusion make_local_fusion(ParamStore& ps, Rng& rng, const std::string& name, int d,
                              const std::vector<int>& kernel_bank);
Var local_branch(Tape& t, const std::vector<Conv1d>& bank, const Linear& merge, Var x, const Mask& mask);
Var local_fuse(Tape& t, const LocalFusion& lf, Var visual, Var audio, Var p_eff, const Mask& mask);

// Iterative slot attention with learnable slot seeds, a shared GRU-cell
// update and a residual MLP. Attention is normalized over the slot axis,
// so each unmasked input position distributes weight 1 across slots.
struct SlotAttention {
    int slots_init = -1;  // [e,d]
    Linear q, k, v;
    LayerNorm ln_slots, ln_mlp;
    Linear mlp1, mlp2;
    int w_ih = -1, b_ih = -1, w_hh = -1, b_hh = -1;  // GRU cell, gates [r|z|n]
    int num_slots = 0;
    int iters = 0;
};

// Captured per-iteration internals for property tests.
struct SlotTrace {
    std::vector<Matrix> attn;           // [T,e] softmax over slots, masked rows zero
    std::vector<Matrix> weighted_mean;  // [e,d] update fed to the GRU cell
};

inline constexpr double kSlotWeightEps = 1e-8;

SlotAttention make_slot_attention(ParamStore& ps, Rng& rng, const std::string& name, int d,
                                  int num_slots, int iters);
Var slot_attention(Tape& t, const SlotAttention& sa, Var x, const Mask& mask,
                   SlotTrace* trace = nullptr);
// Same refinement from explicit initial slots (permutation tests).
Var slot_attention_from(Tape& t, const SlotAttention& sa, Var x, const Mask& mask, Var slots0,
                        SlotTrace* trace = nullptr);

// Event level: refine slots per modality, then each frame cross-attends to
// the event slots (own modality by default) with a residual path.
struct EventFusion {
    SlotAttention slot_v, slot_a;
    Linear q_v, k_v, v_v, o_v;
    Linear q_a, k_a, v_a, o_a;
    GranularityMerge merge;
    bool cross_modal = false;
};

EventFusion make_event_fusion(ParamStore& ps, Rng& rng, const std::string& name, int d,
                              int num_slots, int iters, bool cross_modal);
Var event_fuse(Tape& t, const EventFusion& ef, Var visual, Var audio, Var p_eff, const Mask& mask);

// Global level: attention-pool each modality, concatenate the pooled
// vector with every frame and map back to d.
struct GlobalFusion {
    AttentionPool pool_v, pool_a;
    Linear proj_v, proj_a;
    GranularityMerge merge;
};

GlobalFusion make_global_fusion(ParamStore& ps, Rng& rng, const std::string& name, int d);
Var global_fuse(Tape& t, const GlobalFusion& gf, Var visual, Var audio, Var p_eff, const Mask& mask);

// Pairwise Bi-GRU recombination of the three granularities followed by an
// MLP back to width d. Pair order is (finer, coarser).
struct BiGru {
    int fwd_wi = -1, fwd_bi = -1, fwd_wh = -1, fwd_bh = -1;
    int bwd_wi = -1, bwd_bi = -1, bwd_wh = -1, bwd_bh = -1;
};

BiGru make_bigru(ParamStore& ps, Rng& rng, const std::string& name, int in, int hidden);
Var apply_bigru(Tape& t, const BiGru& gru, Var x);

struct MultiScaleMerge {
    BiGru local_event, local_global, event_global;
    Linear mlp1, mlp2;
};

MultiScaleMerge make_multi_scale_merge(ParamStore& ps, Rng& rng, const std::string& name, int d);
Var multi_scale_merge(Tape& t, const MultiScaleMerge& msm, Var f_local, Var f_event, Var f_global,
                      const Mask& mask);

// Whole fusion stack.
struct FusionModule {
    LocalFusion local;
    EventFusion event;
    GlobalFusion global;
    MultiScaleMerge merge;
};

struct FusionOutputs {
    Var local, event, global, fused;
};

FusionModule make_fusion_module(ParamStore& ps, Rng& rng, const std::string& name,
                                const ModelConfig& cfg);
FusionOutputs fuse_modalities(Tape& t, const FusionModule& fm, Var visual, Var audio, Var p_eff,
                              const Mask& mask);

}  // namespace img
