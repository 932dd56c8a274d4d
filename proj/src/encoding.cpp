// Copyright 2026 The img Authors
// Licensed under the Apache License, Version 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "img/encoding.hpp"

#include <cmath>

#include "img/errors.hpp"

namespace img {

Linear make_linear(ParamStore& ps, Rng& rng, const std::string& name, int in, int out) {
    Linear lin;
    lin.in = in;
    lin.out = out;
    lin.w = ps.add(name + ".w", init_uniform_fan_in(rng, in, out, in));
    lin.b = ps.add(name + ".b", init_uniform_fan_in(rng, 1, out, in));
    return lin;
}

Var apply_linear(Tape& t, const Linear& lin, Var x) {
    if (t.value(x).cols() != lin.in)
        throw ConfigError("linear: input width " + std::to_string(t.value(x).cols()) +
                          " does not match expected " + std::to_string(lin.in));
    return t.affine(x, t.param(lin.w), t.param(lin.b));
}

LayerNorm make_layer_norm(ParamStore& ps, const std::string& name, int width) {
    LayerNorm ln;
    ln.gain = ps.add(name + ".gain", Matrix::filled(1, width, 1.0));
    ln.bias = ps.add(name + ".bias", Matrix(1, width));
    return ln;
}

Var apply_layer_norm(Tape& t, const LayerNorm& ln, Var x) {
    return t.layer_norm(x, t.param(ln.gain), t.param(ln.bias), kLayerNormEps);
}

Conv1d make_conv1d(ParamStore& ps, Rng& rng, const std::string& name, int in, int out, int k) {
    Conv1d c;
    c.k = k;
    c.w = ps.add(name + ".w", init_uniform_fan_in(rng, k * in, out, k * in));
    c.b = ps.add(name + ".b", init_uniform_fan_in(rng, 1, out, k * in));
    return c;
}

Var apply_conv1d(Tape& t, const Conv1d& conv, Var x) {
    return t.conv1d_same(x, t.param(conv.w), t.param(conv.b), conv.k);
}

MultiHeadAttention make_attention(ParamStore& ps, Rng& rng, const std::string& name, int d, int heads) {
    if (d % heads != 0) throw ConfigError("attention: heads must divide d");
    MultiHeadAttention mha;
    mha.heads = heads;
    mha.q = make_linear(ps, rng, name + ".q", d, d);
    mha.k = make_linear(ps, rng, name + ".k", d, d);
    mha.v = make_linear(ps, rng, name + ".v", d, d);
    mha.o = make_linear(ps, rng, name + ".o", d, d);
    return mha;
}

Var apply_attention(Tape& t, const MultiHeadAttention& mha, Var query, Var keys, Var values,
                    const Mask* key_mask) {
    const int d = t.value(query).cols();
    const int dh = d / mha.heads;
    Var q = apply_linear(t, mha.q, query);
    Var k = apply_linear(t, mha.k, keys);
    Var v = apply_linear(t, mha.v, values);
    std::vector<Var> heads_out;
    heads_out.reserve(mha.heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    for (int h = 0; h < mha.heads; ++h) {
        Var qh = t.slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = t.slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = t.slice_cols(v, h * dh, (h + 1) * dh);
        Var logits = t.scale(t.matmul_nt(qh, kh), scale);
        Var attn = t.softmax_rows(logits, key_mask);
        heads_out.push_back(t.matmul(attn, vh));
    }
    Var merged = mha.heads == 1 ? heads_out[0] : t.concat_cols(heads_out);
    return apply_linear(t, mha.o, merged);
}

SequenceEncoder make_sequence_encoder(ParamStore& ps, Rng& rng, const std::string& name, int d,
                                      int heads, int conv_k, int max_len) {
    SequenceEncoder enc;
    enc.width = d;
    enc.ffn1 = make_linear(ps, rng, name + ".ffn1", d, d);
    enc.ffn2 = make_linear(ps, rng, name + ".ffn2", d, d);
    enc.conv = make_conv1d(ps, rng, name + ".conv", d, d, conv_k);
    enc.attn = make_attention(ps, rng, name + ".attn", d, heads);
    enc.ln_ffn = make_layer_norm(ps, name + ".ln_ffn", d);
    enc.ln_conv = make_layer_norm(ps, name + ".ln_conv", d);
    enc.ln_attn = make_layer_norm(ps, name + ".ln_attn", d);
    if (max_len > 0)
        enc.positions = ps.add(name + ".pos", init_uniform_fan_in(rng, max_len, d, d));
    return enc;
}

Var encode_sequence(Tape& t, const SequenceEncoder& enc, Var x, const Mask& mask) {
    const int T = t.value(x).rows();
    if (static_cast<int>(mask.size()) != T)
        throw ValidationError("encode_sequence: mask length does not match sequence");
    if (nn::count_true(mask) == 0) throw ValidationError("encode_sequence: empty mask");

    Var x0 = t.mask_rows(x, mask);
    // FFN block
    Var f = apply_linear(t, enc.ffn2, t.gelu(apply_linear(t, enc.ffn1, x0)));
    Var u = t.mask_rows(apply_layer_norm(t, enc.ln_ffn, t.add(x0, f)), mask);
    // Convolution block; inputs at masked rows are already zero
    Var c = t.gelu(apply_conv1d(t, enc.conv, u));
    Var v = t.mask_rows(apply_layer_norm(t, enc.ln_conv, t.add(u, c)), mask);
    // Learned absolute positions ahead of attention
    Var z = v;
    if (enc.positions >= 0) {
        const Matrix& pos = t.value(t.param(enc.positions));
        if (T > pos.rows()) throw ValidationError("encode_sequence: sequence longer than positional table");
        z = t.add(v, t.slice_rows(t.param(enc.positions), 0, T));
    }
    // Self-attention block; masked keys contribute exactly zero weight
    Var a = apply_attention(t, enc.attn, z, z, z, &mask);
    return t.mask_rows(apply_layer_norm(t, enc.ln_attn, t.add(z, a)), mask);
}

ContextQueryAttention make_cqa(ParamStore& ps, Rng& rng, const std::string& name, int d) {
    ContextQueryAttention cqa;
    cqa.w_ctx = ps.add(name + ".w_ctx", init_uniform_fan_in(rng, d, 1, d));
    cqa.w_qry = ps.add(name + ".w_qry", init_uniform_fan_in(rng, d, 1, d));
    cqa.w_cross = ps.add(name + ".w_cross", init_uniform_fan_in(rng, 1, d, d));
    cqa.out = make_linear(ps, rng, name + ".out", 4 * d, d);
    return cqa;
}

Var context_query_attention(Tape& t, const ContextQueryAttention& cqa, Var ctx, Var qry,
                            const Mask& frame_mask, const Mask& token_mask) {
    const int T = t.value(ctx).rows();
    const int N = t.value(qry).rows();
    if (t.value(ctx).cols() != t.value(qry).cols())
        throw ConfigError("context_query_attention: width mismatch");
    if (nn::count_true(frame_mask) == 0 || nn::count_true(token_mask) == 0)
        throw ValidationError("context_query_attention: empty mask");

    // S[t,n] = <w_ctx, c_t> + <w_qry, q_n> + <w_cross, c_t * q_n>
    Var s_ctx = t.matmul(ctx, t.param(cqa.w_ctx));                       // [T,1]
    Var s_qry = t.transpose(t.matmul(qry, t.param(cqa.w_qry)));          // [1,N]
    Var s_cross = t.matmul_nt(t.mul_row(ctx, t.param(cqa.w_cross)), qry);  // [T,N]
    Var s = t.add_col(t.add_row(s_cross, s_qry), s_ctx);

    Var row_soft = t.softmax_rows(s, &token_mask);                 // over tokens
    Var col_soft = t.transpose(t.softmax_rows(t.transpose(s), &frame_mask));  // over frames
    Var a = t.matmul(row_soft, qry);                               // [T,d]
    Var b = t.matmul(t.matmul_nt(row_soft, col_soft), ctx);        // [T,d]

    Var cat = t.concat_cols({ctx, a, t.mul(ctx, a), t.mul(ctx, b)});
    return t.mask_rows(apply_linear(t, cqa.out, cat), frame_mask);
}

AttentionPool make_attention_pool(ParamStore& ps, Rng& rng, const std::string& name, int d) {
    AttentionPool pool;
    pool.score = make_linear(ps, rng, name + ".score", d, 1);
    return pool;
}

Var attention_pool_weights(Tape& t, const AttentionPool& pool, Var x, const Mask& mask) {
    if (nn::count_true(mask) == 0) throw ValidationError("attention_pool: empty mask");
    Var scores = t.transpose(apply_linear(t, pool.score, x));  // [1,T]
    return t.softmax_rows(scores, &mask);
}

Var attention_pool(Tape& t, const AttentionPool& pool, Var x, const Mask& mask) {
    return t.matmul(attention_pool_weights(t, pool, x, mask), x);  // [1,d]
}

}  // namespace img
