#pragma once

// Condition encoders: a shared mapper m_S plus per-layer local mappers
// producing modulation signals. Style conditions are global embeddings;
// structure conditions are spatial maps turned into a resolution pyramid.

#include <vector>

#include "clora/lora.hpp"
#include "clora/nn.hpp"
#include "clora/tensor.hpp"

namespace clora {

enum class ConditionKind { style, structure };

// Tagged condition payload. A null condition keeps its kind and carries a
// zero payload; dropped conditions still flow through the mappers.
struct Condition {
    ConditionKind kind = ConditionKind::style;
    bool is_null = false;
    Tensor style_vec;       // (d_img)
    Tensor structure_map;   // (1, H, W), values in [0, 1]

    static Condition style(Tensor v) {
        Condition c;
        c.kind = ConditionKind::style;
        c.style_vec = std::move(v);
        return c;
    }
    static Condition structure(Tensor m) {
        Condition c;
        c.kind = ConditionKind::structure;
        c.structure_map = std::move(m);
        if (c.structure_map.ndim() == 2)
            c.structure_map = Tensor::from_data({1, c.structure_map.dim(0), c.structure_map.dim(1)},
                                                c.structure_map.data());
        return c;
    }
};

struct ConditionDims {
    int64_t d_img = 64;       // style embedding width
    int64_t map_h = 32;       // structure map resolution
    int64_t map_w = 32;
    int64_t map_channels = 1;
};

// The replacement for a dropped condition: zero payload of the right shape.
inline Condition null_condition(ConditionKind kind, const ConditionDims& dims) {
    Condition c;
    c.kind = kind;
    c.is_null = true;
    if (kind == ConditionKind::style) {
        c.style_vec = Tensor::zeros({dims.d_img});
    } else {
        c.structure_map = Tensor::zeros({dims.map_channels, dims.map_h, dims.map_w});
    }
    return c;
}

inline Condition null_like(const Condition& c) {
    Condition n;
    n.kind = c.kind;
    n.is_null = true;
    if (c.kind == ConditionKind::style)
        n.style_vec = Tensor::zeros(c.style_vec.shape());
    else
        n.structure_map = Tensor::zeros(c.structure_map.shape());
    return n;
}

// Batched payload assembly: stack style vectors to (B, d_img) or structure
// maps to (B, 1, H, W).
inline Tensor stack_style(const std::vector<Condition>& conds) {
    const int64_t b = static_cast<int64_t>(conds.size());
    const int64_t d = conds[0].style_vec.numel();
    Tensor out = Tensor::zeros({b, d});
    for (int64_t i = 0; i < b; ++i) {
        if (conds[static_cast<size_t>(i)].kind != ConditionKind::style)
            detail::shape_fail("stack_style", "condition " + std::to_string(i) + " is not a style condition");
        const auto& v = conds[static_cast<size_t>(i)].style_vec.data();
        std::copy(v.begin(), v.end(), out.data().begin() + i * d);
    }
    return out;
}

inline Tensor stack_structure(const std::vector<Condition>& conds) {
    const int64_t b = static_cast<int64_t>(conds.size());
    const Shape& ms = conds[0].structure_map.shape();
    Tensor out = Tensor::zeros({b, ms[0], ms[1], ms[2]});
    const int64_t n = shape_numel(ms);
    for (int64_t i = 0; i < b; ++i) {
        if (conds[static_cast<size_t>(i)].kind != ConditionKind::structure)
            detail::shape_fail("stack_structure", "condition " + std::to_string(i) + " is not a structure condition");
        const auto& v = conds[static_cast<size_t>(i)].structure_map.data();
        std::copy(v.begin(), v.end(), out.data().begin() + i * n);
    }
    return out;
}

// ---------------------------------------------------------------------------
// shared mappers
// ---------------------------------------------------------------------------

// Single linear layer followed by layer normalization; keeps d_img.
struct StyleSharedMapper {
    LinearLayer lin;
    Tensor ln_gain, ln_bias;
};

inline StyleSharedMapper make_style_shared(int64_t d_img, RngStream& rng) {
    StyleSharedMapper m;
    m.lin = make_linear(d_img, d_img, rng, true, /*frozen=*/false);
    m.ln_gain = Tensor::full({d_img}, 1);
    m.ln_gain.set_requires_grad(true);
    m.ln_bias = Tensor::zeros({d_img}, true);
    return m;
}

// c_img: (B, d_img) -> (B, d_img)
inline Tensor map_shared_style(Graph& g, const StyleSharedMapper& m, const Tensor& c_img) {
    if (c_img.shape().back() != m.lin.in_dim())
        detail::shape_fail("map_shared_style", "input dim " + std::to_string(c_img.shape().back()) +
                                                   " != mapper dim " + std::to_string(m.lin.in_dim()));
    return layer_norm_last(g, linear_forward(g, m.lin, c_img), m.ln_gain, m.ln_bias);
}

// Stack of convolutions producing one feature map per denoiser resolution
// level: level k has resolution (H / 2^k, W / 2^k). First conv is stride 1,
// the rest stride 2, SiLU between levels.
struct StructureSharedMapper {
    std::vector<ConvLayer> convs;
    std::vector<int64_t> level_channels;
};

inline StructureSharedMapper make_structure_shared(int64_t in_channels, const std::vector<int64_t>& level_channels,
                                                   RngStream& rng) {
    StructureSharedMapper m;
    m.level_channels = level_channels;
    int64_t ci = in_channels;
    for (size_t k = 0; k < level_channels.size(); ++k) {
        const int64_t stride = k == 0 ? 1 : 2;
        m.convs.push_back(make_conv(level_channels[k], ci, 3, 3, stride, 1, rng, true, /*frozen=*/false));
        ci = level_channels[k];
    }
    return m;
}

// map: (B, C_s, H, W) -> [ (B, ch_k, H/2^k, W/2^k) for each level ]
inline std::vector<Tensor> map_shared_structure(Graph& g, const StructureSharedMapper& m, const Tensor& map) {
    const int64_t levels = static_cast<int64_t>(m.convs.size());
    const int64_t h = map.dim(2), w = map.dim(3);
    const int64_t div = int64_t(1) << (levels - 1);
    if (h % div || w % div)
        detail::shape_fail("map_shared_structure", "resolution " + std::to_string(h) + "x" + std::to_string(w) +
                                                       " not divisible by 2^" + std::to_string(levels - 1));
    std::vector<Tensor> pyramid;
    Tensor cur = map;
    for (size_t k = 0; k < m.convs.size(); ++k) {
        if (k > 0) cur = silu(g, cur);
        cur = conv_forward(g, m.convs[k], cur);
        pyramid.push_back(cur);
    }
    return pyramid;
}

// ---------------------------------------------------------------------------
// local mappers
// ---------------------------------------------------------------------------

// Style variant: two linear heads shared-dim -> r for gamma and beta, with
// gamma's bias starting at 1 and beta's at 0 so modulation begins as the
// identity. Structure variant: a single 1x1 conv level-channels -> 2r whose
// output splits into gamma and beta planes.
struct LocalMapper {
    bool spatial = false;
    int64_t rank = 0;
    LinearLayer gamma_head, beta_head;  // style
    ConvLayer conv;                      // structure
    int64_t level = 0;                   // pyramid level consumed (structure)
};

inline LocalMapper make_style_local(int64_t d_img, int64_t r, RngStream& rng) {
    LocalMapper m;
    m.spatial = false;
    m.rank = r;
    m.gamma_head = make_linear(r, d_img, rng, true, /*frozen=*/false);
    std::fill(m.gamma_head.bias.data().begin(), m.gamma_head.bias.data().end(), scalar(1));
    m.beta_head = make_linear(r, d_img, rng, true, /*frozen=*/false);
    return m;
}

inline LocalMapper make_structure_local(int64_t level_channels, int64_t r, int64_t level, RngStream& rng) {
    LocalMapper m;
    m.spatial = true;
    m.rank = r;
    m.conv = make_conv(2 * r, level_channels, 1, 1, 1, 0, rng, true, /*frozen=*/false);
    m.level = level;
    return m;
}

// shared: (B, d_img) for style, (B, ch, h, w) pyramid level for structure.
inline ModulationSignal map_local(Graph& g, const LocalMapper& m, const Tensor& shared) {
    ModulationSignal sig;
    sig.spatial = m.spatial;
    if (!m.spatial) {
        sig.gamma = linear_forward(g, m.gamma_head, shared);  // (B, r)
        sig.beta = linear_forward(g, m.beta_head, shared);
    } else {
        Tensor planes = conv_forward(g, m.conv, shared);      // (B, 2r, h, w)
        sig.gamma = slice(g, planes, 1, 0, m.rank);
        sig.beta = slice(g, planes, 1, m.rank, m.rank);
    }
    return sig;
}

}  // namespace clora
