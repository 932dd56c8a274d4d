// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <string>

#include "img/params.hpp"
#include "img/rng.hpp"
#include "img/tape.hpp"

namespace img {

using nn::Mask;
using nn::Tape;
using nn::Var;

// Parameter-id bundles. Components register their tensors in a ParamStore
// at construction and replay them onto a tape per forward pass.

struct Linear {
    int w = -1;
    int b = -1;
    int in = 0;
    int out = 0;
};

Linear make_linear(ParamStore& ps, Rng& rng, const std::string& name, int in, int out);
Var apply_linear(Tape& t, const Linear& lin, Var x);

struct LayerNorm {
    int gain = -1;
    int bias = -1;
};

// Variance epsilon; small enough that unit-variance rows stay unit
// variance to well under 1e-5.
inline constexpr double kLayerNormEps = 1e-8;

LayerNorm make_layer_norm(ParamStore& ps, const std::string& name, int width);
Var apply_layer_norm(Tape& t, const LayerNorm& ln, Var x);

struct Conv1d {
    int w = -1;
    int b = -1;
    int k = 0;
};

Conv1d make_conv1d(ParamStore& ps, Rng& rng, const std::string& name, int in, int out, int k);
Var apply_conv1d(Tape& t, const Conv1d& conv, Var x);

struct MultiHeadAttention {
    Linear q, k, v, o;
    int heads = 1;
};

MultiHeadAttention make_attention(ParamStore& ps, Rng& rng, const std::string& name, int d, int heads);
// Self/cross attention; key_mask excludes masked keys from every softmax.
Var apply_attention(Tape& t, const MultiHeadAttention& mha, Var query, Var keys, Var values,
                    const Mask* key_mask);

// FFN -> convolution -> learned positions -> self-attention, each
// sub-block residual + layer norm, masked rows zeroed after every block.
struct SequenceEncoder {
    Linear ffn1, ffn2;
    Conv1d conv;
    MultiHeadAttention attn;
    LayerNorm ln_ffn, ln_conv, ln_attn;
    int positions = -1;  // [max_len, d], absent if max_len == 0
    int width = 0;
};

SequenceEncoder make_sequence_encoder(ParamStore& ps, Rng& rng, const std::string& name, int d,
                                      int heads, int conv_k, int max_len);
Var encode_sequence(Tape& t, const SequenceEncoder& enc, Var x, const Mask& mask);

// Trilinear context-query attention. Produces the text-activated sequence:
// similarity S[T,N], row softmax over tokens -> A, composed row/column
// softmax -> B, then a linear map of [ctx; A; ctx*A; ctx*B].
struct ContextQueryAttention {
    int w_ctx = -1;    // [d,1]
    int w_qry = -1;    // [d,1]
    int w_cross = -1;  // [1,d]
    Linear out;
};

ContextQueryAttention make_cqa(ParamStore& ps, Rng& rng, const std::string& name, int d);
Var context_query_attention(Tape& t, const ContextQueryAttention& cqa, Var ctx, Var qry,
                            const Mask& frame_mask, const Mask& token_mask);

// Softmax-weighted pooling of unmasked rows to a single [1,d] vector.
struct AttentionPool {
    Linear score;
};

AttentionPool make_attention_pool(ParamStore& ps, Rng& rng, const std::string& name, int d);
Var attention_pool(Tape& t, const AttentionPool& pool, Var x, const Mask& mask);
// As above but also exposes the pooling weights [1,T] (zero at masked).
Var attention_pool_weights(Tape& t, const AttentionPool& pool, Var x, const Mask& mask);

// Additive key-mask constant applied to attention logits.
inline constexpr double kMaskLogit = -1e30;

}  // namespace img
