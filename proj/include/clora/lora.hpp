#pragma once

// Plain and conditional low-rank adapter blocks for linear/attention
// projections and convolutions. The conditional variant transforms the
// bottleneck activation with a condition-dependent affine map before the
// expanding factor:
//
//   linear: h = W0 x + lambda * B (gamma .* (A x) + beta)
//   conv:   h = K0 * x + lambda * K_B * (gamma .* (K_A * x) + beta)
//
// B / K_B are zero-initialized so a fresh adapter is an exact no-op.

#include <string>

#include "clora/nn.hpp"
#include "clora/tensor.hpp"

namespace clora {

struct LoraConfig {
    int64_t rank = 16;
    scalar scale = 1.0;  // lambda
    std::string selector;

    void validate() const {
        if (rank < 1) detail::shape_fail("LoraConfig", "rank must be positive");
        if (!std::isfinite(scale)) detail::shape_fail("LoraConfig", "scale must be finite");
    }
};

struct LinearLora {
    Tensor A;  // (r, k), gaussian init
    Tensor B;  // (d, r), zero init
    int64_t rank() const { return A.dim(0); }
};

// r must stay well below min(d, k); enforced as r <= min(d, k) / 2.
inline LinearLora make_linear_lora(int64_t d, int64_t k, int64_t r, RngStream& rng) {
    if (r < 1 || r > std::min(d, k) / 2)
        detail::shape_fail("make_linear_lora", "rank " + std::to_string(r) + " outside [1, min(" +
                                                   std::to_string(d) + "," + std::to_string(k) + ")/2]");
    LinearLora lo;
    lo.A = Tensor::randn({r, k}, rng, scalar(1) / std::sqrt(static_cast<scalar>(k)), true);
    lo.B = Tensor::zeros({d, r}, true);
    return lo;
}

struct ConvLora {
    Tensor KA;  // (r, ch_i, kh, kw), copies the base conv's stride/padding
    Tensor KB;  // (ch_o, r, 1, 1), zero init
    int64_t stride = 1;
    int64_t pad = 0;
    int64_t rank() const { return KA.dim(0); }
};

inline ConvLora make_conv_lora(const ConvLayer& base, int64_t r, RngStream& rng) {
    if (r < 1) detail::shape_fail("make_conv_lora", "rank must be positive");
    const int64_t ci = base.kernel.dim(1), kh = base.kernel.dim(2), kw = base.kernel.dim(3);
    ConvLora lo;
    lo.KA = Tensor::randn({r, ci, kh, kw}, rng, scalar(1) / std::sqrt(static_cast<scalar>(ci * kh * kw)), true);
    lo.KB = Tensor::zeros({base.kernel.dim(0), r, 1, 1}, true);
    lo.stride = base.stride;
    lo.pad = base.pad;
    return lo;
}

// Condition-derived scale and shift applied in the rank-r bottleneck.
// Global signals are (r,) or per-sample (B, r) and broadcast across tokens
// or spatial positions; spatial signals are (r, H, W) or (B, r, H, W) and
// apply per element.
struct ModulationSignal {
    Tensor gamma;
    Tensor beta;
    bool spatial = false;
};

inline ModulationSignal identity_signal(int64_t r) {
    return ModulationSignal{Tensor::full({r}, 1), Tensor::zeros({r}), false};
}

// phi(z) = gamma .* z + beta. z carries the rank axis last for token
// layouts (..., r) and at channel position for conv layouts (B, r, H, W).
inline Tensor affine_modulate(Graph& g, const Tensor& z, const ModulationSignal& sig) {
    Tensor gam = sig.gamma, bet = sig.beta;
    if (z.ndim() == 4 && !sig.spatial) {
        // broadcast the per-channel signal over space
        if (gam.ndim() == 1) {
            gam = reshape(g, gam, {gam.dim(0), 1, 1});
            bet = reshape(g, bet, {bet.dim(0), 1, 1});
        } else if (gam.ndim() == 2) {  // (B, r)
            gam = reshape(g, gam, {gam.dim(0), gam.dim(1), 1, 1});
            bet = reshape(g, bet, {bet.dim(0), bet.dim(1), 1, 1});
        }
    } else if (z.ndim() == 3 && !sig.spatial && gam.ndim() == 2) {
        // per-sample global signal against (B, T, r): insert the token axis
        gam = reshape(g, gam, {gam.dim(0), 1, gam.dim(1)});
        bet = reshape(g, bet, {bet.dim(0), 1, bet.dim(1)});
    }
    return scale_shift(g, z, gam, bet);
}

// h = W0 x + lambda * B (A x)
inline Tensor lora_linear_forward(Graph& g, const LinearLayer& base, const LinearLora& lora, scalar lambda,
                                  const Tensor& x) {
    Tensor h = linear_forward(g, base, x);
    Tensor z = matmul(g, x, lora.A, true);        // (..., r)
    Tensor delta = matmul(g, z, lora.B, true);    // (..., d)
    return add(g, h, affine(g, delta, lambda, 0));
}

// h = W0 x + lambda * B (gamma .* (A x) + beta), identical across tokens of
// a stream for global signals.
inline Tensor cond_lora_linear_forward(Graph& g, const LinearLayer& base, const LinearLora& lora,
                                       const ModulationSignal& sig, scalar lambda, const Tensor& x) {
    if (sig.spatial)
        detail::shape_fail("cond_lora_linear_forward", "spatial modulation signal passed to a linear target");
    Tensor h = linear_forward(g, base, x);
    Tensor z = matmul(g, x, lora.A, true);
    z = affine_modulate(g, z, sig);
    Tensor delta = matmul(g, z, lora.B, true);
    return add(g, h, affine(g, delta, lambda, 0));
}

// h = K0 * x + lambda * K_B * (gamma .* (K_A * x) + beta). Spatial signals
// must match K_A's output dims; global signals broadcast per channel.
inline Tensor cond_lora_conv_forward(Graph& g, const ConvLayer& base, const ConvLora& lora,
                                     const ModulationSignal& sig, scalar lambda, const Tensor& x) {
    Tensor h = conv_forward(g, base, x);
    Tensor z = conv2d(g, x, lora.KA, lora.stride, lora.pad);  // (B, r, Ho, Wo)
    if (sig.spatial) {
        const Shape& zs = z.shape();
        const Shape& gs = sig.gamma.shape();
        const int64_t gh = gs[gs.size() - 2], gw = gs[gs.size() - 1];
        if (gh != zs[2] || gw != zs[3])
            detail::shape_fail("cond_lora_conv_forward",
                               "modulation spatial dims (" + std::to_string(gh) + "," + std::to_string(gw) +
                                   ") do not match bottleneck " + shape_str(zs));
    }
    z = affine_modulate(g, z, sig);
    Tensor delta = conv2d(g, z, lora.KB, 1, 0);  // pointwise expansion to ch_o
    return add(g, h, affine(g, delta, lambda, 0));
}

}  // namespace clora
