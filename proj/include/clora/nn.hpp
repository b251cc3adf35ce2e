#pragma once

// Frozen-capable base layers of the denoiser: linear projections, 2-d
// convolutions, layer norm and single-head scaled dot-product attention.

#include <functional>
#include <optional>

#include "clora/tensor.hpp"

namespace clora {

struct LinearLayer {
    Tensor weight;  // (d, k)
    Tensor bias;    // (d), optional (undefined handle => none)
    bool frozen = true;

    int64_t out_dim() const { return weight.dim(0); }
    int64_t in_dim() const { return weight.dim(1); }
};

inline LinearLayer make_linear(int64_t d, int64_t k, RngStream& rng, bool with_bias = true, bool frozen = true) {
    LinearLayer l;
    l.weight = Tensor::randn({d, k}, rng, scalar(1) / std::sqrt(static_cast<scalar>(k)), !frozen);
    if (with_bias) l.bias = Tensor::zeros({d}, !frozen);
    l.frozen = frozen;
    return l;
}

// x: (..., k) -> (..., d); h = W0 x (+ bias)
inline Tensor linear_forward(Graph& g, const LinearLayer& layer, const Tensor& x) {
    if (x.shape().back() != layer.in_dim())
        detail::shape_fail("linear_forward", "input dim " + std::to_string(x.shape().back()) +
                                                 " != weight in dim " + std::to_string(layer.in_dim()));
    Tensor h = matmul(g, x, layer.weight, /*trans_b=*/true);
    if (layer.bias.defined()) h = add(g, h, layer.bias);
    return h;
}

struct ConvLayer {
    Tensor kernel;  // (ch_o, ch_i, kh, kw)
    Tensor bias;    // (ch_o), optional
    int64_t stride = 1;
    int64_t pad = 0;
    bool frozen = true;

    int64_t out_channels() const { return kernel.dim(0); }
    int64_t in_channels() const { return kernel.dim(1); }
};

inline ConvLayer make_conv(int64_t co, int64_t ci, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
                           RngStream& rng, bool with_bias = true, bool frozen = true) {
    ConvLayer c;
    c.kernel = Tensor::randn({co, ci, kh, kw}, rng, scalar(1) / std::sqrt(static_cast<scalar>(ci * kh * kw)),
                             !frozen);
    if (with_bias) c.bias = Tensor::zeros({co}, !frozen);
    c.stride = stride;
    c.pad = pad;
    c.frozen = frozen;
    return c;
}

// x: (B, ch_i, H, W) -> (B, ch_o, Ho, Wo); cross-correlation, no kernel flip
inline Tensor conv_forward(Graph& g, const ConvLayer& layer, const Tensor& x) {
    Tensor h = conv2d(g, x, layer.kernel, layer.stride, layer.pad);
    if (layer.bias.defined()) {
        Tensor b = reshape(g, layer.bias, {1, layer.out_channels(), 1, 1});
        h = add(g, h, b);
    }
    return h;
}

struct TokenStream {
    Tensor tokens;  // (n_tokens, d_model) or batched (B, n_tokens, d_model)
};

enum class AttentionMode { self_attn, cross_attn };

struct AttentionLayer {
    Tensor wq;  // (d_inner, d_model)
    Tensor wk;  // (d_inner, d_kv)
    Tensor wv;  // (d_inner, d_kv)
    int64_t head_dim = 0;  // = d_inner (single head)
    AttentionMode mode = AttentionMode::self_attn;
};

inline AttentionLayer make_attention(int64_t d_inner, int64_t d_model, int64_t d_kv, AttentionMode mode,
                                     RngStream& rng) {
    AttentionLayer at;
    at.wq = Tensor::randn({d_inner, d_model}, rng, scalar(1) / std::sqrt(static_cast<scalar>(d_model)));
    at.wk = Tensor::randn({d_inner, d_kv}, rng, scalar(1) / std::sqrt(static_cast<scalar>(d_kv)));
    at.wv = Tensor::randn({d_inner, d_kv}, rng, scalar(1) / std::sqrt(static_cast<scalar>(d_kv)));
    at.head_dim = d_inner;
    at.mode = mode;
    return at;
}

// Override hooks so conditional adapters can replace the K/V projections
// while the attention arithmetic stays in one place.
using ProjFn = std::function<Tensor(Graph&, const Tensor&)>;

// x: (B, T, d_model); ctx: (B, S, d_kv) required in cross mode.
// h' = softmax(Q K^T / sqrt(d_head)) V
inline Tensor attention_forward(Graph& g, const AttentionLayer& at, const Tensor& x, const Tensor* ctx,
                                const ProjFn& k_proj = nullptr, const ProjFn& v_proj = nullptr) {
    const Tensor* kv_src = &x;
    if (at.mode == AttentionMode::cross_attn) {
        if (!ctx) detail::shape_fail("attention_forward", "cross-attention requires a context token stream");
        kv_src = ctx;
    }
    Tensor q = matmul(g, x, at.wq, true);                                              // (B, T, d)
    Tensor k = k_proj ? k_proj(g, *kv_src) : matmul(g, *kv_src, at.wk, true);          // (B, S, d)
    Tensor v = v_proj ? v_proj(g, *kv_src) : matmul(g, *kv_src, at.wv, true);          // (B, S, d)
    Tensor kt = permute(g, k, {0, 2, 1});                                              // (B, d, S)
    Tensor scores = matmul(g, q, kt);                                                  // (B, T, S)
    scores = affine(g, scores, scalar(1) / std::sqrt(static_cast<scalar>(at.head_dim)), 0);
    Tensor attn = softmax(g, scores);
    return matmul(g, attn, v);  // (B, T, d)
}

// Per-vector layer norm over the last axis followed by affine gain/bias.
inline Tensor layer_norm_last(Graph& g, const Tensor& x, const Tensor& gain, const Tensor& bias) {
    return layer_norm(g, x, gain, bias, -1, scalar(1e-5));
}

}  // namespace clora
