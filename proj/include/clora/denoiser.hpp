#pragma once

// Toy U-Net noise predictor hosting the conditional adapters.
//
// Fixed block structure: four down levels, one middle block, four up levels.
// Every down/up level holds two ResNet blocks (two 3x3 convolutions each,
// plus an unadapted 1x1 shortcut where channels change); the middle block
// holds one. Self/cross attention follows each ResNet block at the
// configured levels. Layer paths are stable slash-separated strings, e.g.
// "down/2/res/0/conv/0", used by checkpoints, selectors and configs.

#include <map>
#include <set>
#include <string>
#include <vector>

#include "clora/mappers.hpp"
#include "clora/nn.hpp"
#include "clora/tensor.hpp"

namespace clora {

struct DenoiserConfig {
    int64_t image_size = 32;
    int64_t in_channels = 3;
    int64_t base_channels = 8;
    std::vector<int64_t> channel_mults = {1, 2, 2, 4};
    int64_t res_blocks_per_level = 2;
    std::vector<int64_t> attention_levels = {2, 3};
    int64_t context_dim = 256;  // cross-attention K/V width (= context token width)
    int64_t time_embed_dim = 64;
    int64_t num_classes = 3;  // label 0 is the null class

    void validate() const {
        if (channel_mults.size() != 4)
            detail::shape_fail("DenoiserConfig", "exactly 4 resolution levels required, got " +
                                                     std::to_string(channel_mults.size()));
        if (res_blocks_per_level != 2)
            detail::shape_fail("DenoiserConfig", "levels carry exactly 2 ResNet blocks");
        const int64_t div = 8;  // 2^(levels-1)
        if (image_size % div)
            detail::shape_fail("DenoiserConfig", "image size must be divisible by 8");
        for (int64_t l : attention_levels)
            if (l < 0 || l > 3) detail::shape_fail("DenoiserConfig", "attention level out of range");
    }

    int64_t channels_at(int64_t level) const {
        return base_channels * channel_mults[static_cast<size_t>(level)];
    }
    int64_t resolution_at(int64_t level) const { return image_size >> level; }
    bool has_attention(int64_t level) const {
        for (int64_t l : attention_levels)
            if (l == level) return true;
        return false;
    }
};

struct ResBlock {
    Tensor ln1_gain, ln1_bias;
    ConvLayer conv0;
    LinearLayer temb_proj;
    Tensor ln2_gain, ln2_bias;
    ConvLayer conv1;
    ConvLayer nin;  // 1x1 shortcut, only when ch_in != ch_out
    bool has_nin = false;
    int64_t ch_in = 0, ch_out = 0;
};

struct AttnBlock {
    Tensor pos;  // (tokens, C) learned additive position embedding
    Tensor ln1_gain, ln1_bias;
    AttentionLayer self_at;   // width C
    Tensor ln2_gain, ln2_bias;
    AttentionLayer cross_at;  // width context_dim, K/V from context tokens
    LinearLayer cross_out;    // context_dim -> C
    int64_t channels = 0, tokens = 0;
};

struct Level {
    std::vector<ResBlock> res;
    std::vector<AttnBlock> attn;  // parallel to res when the level has attention
};

// Site registries used by selection and adapter attachment.
struct ConvSite {
    std::string path;
    ConvLayer* layer;
    int64_t level;
};
struct AttnProjSite {
    std::string path;     // ".../self/wk" etc
    Tensor* weight;       // the projection matrix
    bool cross;
    int64_t level;
};

class Denoiser {
  public:
    Denoiser() = default;
    Denoiser(const Denoiser&) = delete;             // site registry holds
    Denoiser& operator=(const Denoiser&) = delete;  // pointers into members

    DenoiserConfig cfg;
    uint64_t seed = 0;

    ConvLayer conv_in;
    std::vector<Level> down, up;
    Level mid;
    Tensor out_ln_gain, out_ln_bias;
    ConvLayer conv_out;
    LinearLayer temb0, temb1;
    Tensor ctx_table;  // (num_classes + 2, context_dim); row 0 null, last row register token

    std::vector<std::pair<std::string, Tensor>> params;  // stable traversal order
    std::vector<ConvSite> conv_sites;
    std::vector<AttnProjSite> attn_sites;

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& [name, t] : params) n += t.numel();
        return n;
    }

    const ConvSite* find_conv(const std::string& path) const {
        for (const auto& s : conv_sites)
            if (s.path == path) return &s;
        return nullptr;
    }
    const AttnProjSite* find_attn(const std::string& path) const {
        for (const auto& s : attn_sites)
            if (s.path == path) return &s;
        return nullptr;
    }
};

namespace detail {

inline void reg(Denoiser& net, const std::string& name, const Tensor& t) {
    net.params.emplace_back(name, t);
}

inline void reg_conv(Denoiser& net, const std::string& path, ConvLayer& c, int64_t level, bool adaptable) {
    reg(net, path + "/kernel", c.kernel);
    if (c.bias.defined()) reg(net, path + "/bias", c.bias);
    if (adaptable) net.conv_sites.push_back(ConvSite{path, &c, level});
}

// Blocks are emplaced into their (pre-reserved) destination vector before
// any tensor or site registration so the registered pointers stay valid.
inline ResBlock& add_resblock(Denoiser& net, std::vector<ResBlock>& dest, const std::string& path,
                              int64_t ch_in, int64_t ch_out, int64_t time_dim, int64_t level,
                              RngStream& rng) {
    dest.emplace_back();
    ResBlock& b = dest.back();
    b.ch_in = ch_in;
    b.ch_out = ch_out;
    b.ln1_gain = Tensor::full({ch_in}, 1);
    b.ln1_bias = Tensor::zeros({ch_in});
    b.conv0 = make_conv(ch_out, ch_in, 3, 3, 1, 1, rng);
    b.temb_proj = make_linear(ch_out, time_dim, rng);
    b.ln2_gain = Tensor::full({ch_out}, 1);
    b.ln2_bias = Tensor::zeros({ch_out});
    b.conv1 = make_conv(ch_out, ch_out, 3, 3, 1, 1, rng);
    b.has_nin = ch_in != ch_out;
    if (b.has_nin) b.nin = make_conv(ch_out, ch_in, 1, 1, 1, 0, rng);

    reg(net, path + "/ln1/gain", b.ln1_gain);
    reg(net, path + "/ln1/bias", b.ln1_bias);
    reg_conv(net, path + "/conv/0", b.conv0, level, true);
    reg(net, path + "/temb/weight", b.temb_proj.weight);
    reg(net, path + "/temb/bias", b.temb_proj.bias);
    reg(net, path + "/ln2/gain", b.ln2_gain);
    reg(net, path + "/ln2/bias", b.ln2_bias);
    reg_conv(net, path + "/conv/1", b.conv1, level, true);
    if (b.has_nin) reg_conv(net, path + "/nin", b.nin, level, false);
    return b;
}

inline AttnBlock& add_attnblock(Denoiser& net, std::vector<AttnBlock>& dest, const std::string& path,
                                int64_t channels, int64_t tokens, int64_t context_dim, int64_t level,
                                RngStream& rng) {
    dest.emplace_back();
    AttnBlock& a = dest.back();
    a.channels = channels;
    a.tokens = tokens;
    a.pos = Tensor::randn({tokens, channels}, rng, scalar(0.02));
    a.ln1_gain = Tensor::full({channels}, 1);
    a.ln1_bias = Tensor::zeros({channels});
    a.self_at = make_attention(channels, channels, channels, AttentionMode::self_attn, rng);
    a.ln2_gain = Tensor::full({channels}, 1);
    a.ln2_bias = Tensor::zeros({channels});
    a.cross_at = make_attention(context_dim, channels, context_dim, AttentionMode::cross_attn, rng);
    a.cross_out = make_linear(channels, context_dim, rng);

    reg(net, path + "/pos", a.pos);
    reg(net, path + "/ln1/gain", a.ln1_gain);
    reg(net, path + "/ln1/bias", a.ln1_bias);
    reg(net, path + "/self/wq", a.self_at.wq);
    reg(net, path + "/self/wk", a.self_at.wk);
    reg(net, path + "/self/wv", a.self_at.wv);
    reg(net, path + "/ln2/gain", a.ln2_gain);
    reg(net, path + "/ln2/bias", a.ln2_bias);
    reg(net, path + "/cross/wq", a.cross_at.wq);
    reg(net, path + "/cross/wk", a.cross_at.wk);
    reg(net, path + "/cross/wv", a.cross_at.wv);
    reg(net, path + "/cross/out/weight", a.cross_out.weight);
    reg(net, path + "/cross/out/bias", a.cross_out.bias);
    net.attn_sites.push_back(AttnProjSite{path + "/self/wk", &a.self_at.wk, false, level});
    net.attn_sites.push_back(AttnProjSite{path + "/self/wv", &a.self_at.wv, false, level});
    net.attn_sites.push_back(AttnProjSite{path + "/cross/wk", &a.cross_at.wk, true, level});
    net.attn_sites.push_back(AttnProjSite{path + "/cross/wv", &a.cross_at.wv, true, level});
    return a;
}

}  // namespace detail

// Deterministic parameter init from (cfg, seed); two builds with the same
// seed are bitwise identical.
inline std::unique_ptr<Denoiser> build_denoiser(const DenoiserConfig& cfg, uint64_t seed) {
    cfg.validate();
    auto netp = std::make_unique<Denoiser>();
    Denoiser& net = *netp;
    net.cfg = cfg;
    net.seed = seed;
    RngStream rng = RngStream::child(seed, "denoiser-init");

    const int64_t c0 = cfg.channels_at(0);
    net.conv_in = make_conv(c0, cfg.in_channels, 3, 3, 1, 1, rng);
    detail::reg_conv(net, "in/conv", net.conv_in, 0, true);

    net.temb0 = make_linear(cfg.time_embed_dim, cfg.time_embed_dim, rng);
    net.temb1 = make_linear(cfg.time_embed_dim, cfg.time_embed_dim, rng);
    detail::reg(net, "temb/0/weight", net.temb0.weight);
    detail::reg(net, "temb/0/bias", net.temb0.bias);
    detail::reg(net, "temb/1/weight", net.temb1.weight);
    detail::reg(net, "temb/1/bias", net.temb1.bias);

    net.ctx_table = Tensor::randn({cfg.num_classes + 2, cfg.context_dim}, rng,
                                  scalar(1) / std::sqrt(static_cast<scalar>(cfg.context_dim)));
    // null label row stays zero
    for (int64_t j = 0; j < cfg.context_dim; ++j) net.ctx_table.data()[static_cast<size_t>(j)] = 0;
    detail::reg(net, "ctx/embed", net.ctx_table);

    // down path
    int64_t ch = c0;
    net.down.resize(4);
    net.up.resize(4);
    for (auto& lv : net.down) {
        lv.res.reserve(static_cast<size_t>(cfg.res_blocks_per_level));
        lv.attn.reserve(static_cast<size_t>(cfg.res_blocks_per_level));
    }
    for (auto& lv : net.up) {
        lv.res.reserve(static_cast<size_t>(cfg.res_blocks_per_level));
        lv.attn.reserve(static_cast<size_t>(cfg.res_blocks_per_level));
    }
    net.mid.res.reserve(1);
    net.mid.attn.reserve(1);

    for (int64_t k = 0; k < 4; ++k) {
        const int64_t co = cfg.channels_at(k);
        const int64_t res = cfg.resolution_at(k);
        Level& lv = net.down[static_cast<size_t>(k)];
        for (int64_t j = 0; j < cfg.res_blocks_per_level; ++j) {
            std::string p = "down/" + std::to_string(k) + "/res/" + std::to_string(j);
            detail::add_resblock(net, lv.res, p, ch, co, cfg.time_embed_dim, k, rng);
            ch = co;
            if (cfg.has_attention(k)) {
                std::string ap = "down/" + std::to_string(k) + "/attn/" + std::to_string(j);
                detail::add_attnblock(net, lv.attn, ap, co, res * res, cfg.context_dim, k, rng);
            }
        }
    }

    // middle block: a single ResNet block plus attention
    {
        const int64_t c3 = cfg.channels_at(3);
        const int64_t res = cfg.resolution_at(3);
        detail::add_resblock(net, net.mid.res, "mid/res/0", c3, c3, cfg.time_embed_dim, 3, rng);
        detail::add_attnblock(net, net.mid.attn, "mid/attn/0", c3, res * res, cfg.context_dim, 3, rng);
    }

    // up path, deepest level first
    for (int64_t k = 3; k >= 0; --k) {
        const int64_t co = cfg.channels_at(k);
        const int64_t res = cfg.resolution_at(k);
        const int64_t skip = cfg.channels_at(k);
        Level& lv = net.up[static_cast<size_t>(k)];
        for (int64_t j = 0; j < cfg.res_blocks_per_level; ++j) {
            const int64_t ci = j == 0 ? ch + skip : co;
            std::string p = "up/" + std::to_string(k) + "/res/" + std::to_string(j);
            detail::add_resblock(net, lv.res, p, ci, co, cfg.time_embed_dim, k, rng);
            ch = co;
            if (cfg.has_attention(k)) {
                std::string ap = "up/" + std::to_string(k) + "/attn/" + std::to_string(j);
                detail::add_attnblock(net, lv.attn, ap, co, res * res, cfg.context_dim, k, rng);
            }
        }
    }

    net.out_ln_gain = Tensor::full({c0}, 1);
    net.out_ln_bias = Tensor::zeros({c0});
    detail::reg(net, "out/ln/gain", net.out_ln_gain);
    detail::reg(net, "out/ln/bias", net.out_ln_bias);
    net.conv_out = make_conv(cfg.in_channels, c0, 3, 3, 1, 1, rng);
    detail::reg_conv(net, "out/conv", net.conv_out, 0, true);

    return netp;
}

// ---------------------------------------------------------------------------
// layer selection
// ---------------------------------------------------------------------------

struct LayerSelector {
    enum class Mode { conv_config_a, conv_config_b, cross_attention, self_attention, cross_and_self, custom };
    Mode mode = Mode::conv_config_b;
    std::vector<std::string> custom_paths;

    static Mode parse_mode(const std::string& s) {
        if (s == "conv-config-a") return Mode::conv_config_a;
        if (s == "conv-config-b") return Mode::conv_config_b;
        if (s == "cross-attention") return Mode::cross_attention;
        if (s == "self-attention") return Mode::self_attention;
        if (s == "cross-and-self") return Mode::cross_and_self;
        if (s == "custom") return Mode::custom;
        throw ConfigError("unknown layer selector: " + s);
    }
    static std::string mode_name(Mode m) {
        switch (m) {
            case Mode::conv_config_a: return "conv-config-a";
            case Mode::conv_config_b: return "conv-config-b";
            case Mode::cross_attention: return "cross-attention";
            case Mode::self_attention: return "self-attention";
            case Mode::cross_and_self: return "cross-and-self";
            case Mode::custom: return "custom";
        }
        return "?";
    }
};

// Resolves a selector to a deterministic ordered list of layer paths.
// conv-config-a: the first convolution of every down/up/middle block (9).
// conv-config-b: the first convolution of every ResNet block (17).
inline std::vector<std::string> select_layers(const Denoiser& net, const LayerSelector& sel) {
    using Mode = LayerSelector::Mode;
    std::vector<std::string> out;
    auto ends_with = [](const std::string& s, const std::string& suf) {
        return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
    };
    switch (sel.mode) {
        case Mode::conv_config_a:
            for (const auto& s : net.conv_sites)
                if (ends_with(s.path, "/res/0/conv/0")) out.push_back(s.path);
            break;
        case Mode::conv_config_b:
            for (const auto& s : net.conv_sites)
                if (ends_with(s.path, "/conv/0") && s.path.find("/res/") != std::string::npos)
                    out.push_back(s.path);
            break;
        case Mode::cross_attention:
            for (const auto& s : net.attn_sites)
                if (s.cross) out.push_back(s.path);
            break;
        case Mode::self_attention:
            for (const auto& s : net.attn_sites)
                if (!s.cross) out.push_back(s.path);
            break;
        case Mode::cross_and_self:
            for (const auto& s : net.attn_sites) out.push_back(s.path);
            break;
        case Mode::custom:
            for (const auto& p : sel.custom_paths) {
                if (!net.find_conv(p) && !net.find_attn(p))
                    detail::shape_fail("select_layers", "unknown layer path: " + p);
                out.push_back(p);
            }
            break;
    }
    if (out.empty()) detail::shape_fail("select_layers", "selector resolved to an empty layer set");
    return out;
}

// ---------------------------------------------------------------------------
// conditional adapters attached to a selection
// ---------------------------------------------------------------------------

struct MapperConfig {
    int64_t d_img = 64;
    std::vector<int64_t> structure_channels = {8, 16, 32, 64};
};

struct AdapterEntry {
    std::string path;
    bool is_conv = false;
    const ConvLayer* conv_base = nullptr;
    ConvLora conv_lora;
    const Tensor* proj_base = nullptr;
    LinearLora lin_lora;
    LocalMapper local;
    int64_t level = 0;
};

// One trained conditional adapter: LoRA factors for every selected layer,
// one shared mapper, and one local mapper per layer.
struct CondAdapter {
    ConditionKind kind = ConditionKind::style;
    LoraConfig lora_cfg;
    LayerSelector selector;
    MapperConfig mapper_cfg;
    StyleSharedMapper style_shared;
    StructureSharedMapper structure_shared;
    std::vector<AdapterEntry> entries;
    scalar lambda = 1.0;

    // Checkpoint tensor names: lora/<path>/{A,B} or {K_A,K_B}, plus
    // mapper/shared/... and mapper/local/<path>/...
    std::vector<std::pair<std::string, Tensor>> named_params() const {
        std::vector<std::pair<std::string, Tensor>> out;
        if (kind == ConditionKind::style) {
            out.emplace_back("mapper/shared/lin/weight", style_shared.lin.weight);
            out.emplace_back("mapper/shared/lin/bias", style_shared.lin.bias);
            out.emplace_back("mapper/shared/ln/gain", style_shared.ln_gain);
            out.emplace_back("mapper/shared/ln/bias", style_shared.ln_bias);
        } else {
            for (size_t k = 0; k < structure_shared.convs.size(); ++k) {
                out.emplace_back("mapper/shared/conv/" + std::to_string(k) + "/kernel",
                                 structure_shared.convs[k].kernel);
                out.emplace_back("mapper/shared/conv/" + std::to_string(k) + "/bias",
                                 structure_shared.convs[k].bias);
            }
        }
        for (const auto& e : entries) {
            if (e.is_conv) {
                out.emplace_back("lora/" + e.path + "/K_A", e.conv_lora.KA);
                out.emplace_back("lora/" + e.path + "/K_B", e.conv_lora.KB);
            } else {
                out.emplace_back("lora/" + e.path + "/A", e.lin_lora.A);
                out.emplace_back("lora/" + e.path + "/B", e.lin_lora.B);
            }
            if (e.local.spatial) {
                out.emplace_back("mapper/local/" + e.path + "/conv/kernel", e.local.conv.kernel);
                out.emplace_back("mapper/local/" + e.path + "/conv/bias", e.local.conv.bias);
            } else {
                out.emplace_back("mapper/local/" + e.path + "/gamma/weight", e.local.gamma_head.weight);
                out.emplace_back("mapper/local/" + e.path + "/gamma/bias", e.local.gamma_head.bias);
                out.emplace_back("mapper/local/" + e.path + "/beta/weight", e.local.beta_head.weight);
                out.emplace_back("mapper/local/" + e.path + "/beta/bias", e.local.beta_head.bias);
            }
        }
        return out;
    }

    int64_t trainable_param_count() const {
        int64_t n = 0;
        for (const auto& [name, t] : named_params()) n += t.numel();
        return n;
    }
};

// Builds an adapter for the given condition kind over a layer selection.
// Structure conditioning requires conv targets (spatial signals cannot
// drive attention projections); style conditioning may target both.
inline CondAdapter build_adapter(const Denoiser& net, ConditionKind kind, const LayerSelector& sel,
                                 const LoraConfig& lcfg, const MapperConfig& mcfg, uint64_t seed) {
    lcfg.validate();
    CondAdapter ad;
    ad.kind = kind;
    ad.lora_cfg = lcfg;
    ad.selector = sel;
    ad.mapper_cfg = mcfg;
    ad.lambda = lcfg.scale;
    RngStream rng = RngStream::child(seed, "adapter-init");

    if (kind == ConditionKind::style) {
        ad.style_shared = make_style_shared(mcfg.d_img, rng);
    } else {
        if (static_cast<int64_t>(mcfg.structure_channels.size()) != 4)
            detail::shape_fail("build_adapter", "structure mapper needs one channel count per level");
        ad.structure_shared = make_structure_shared(1, mcfg.structure_channels, rng);
    }

    const auto paths = select_layers(net, sel);
    for (const auto& p : paths) {
        AdapterEntry e;
        e.path = p;
        if (const ConvSite* cs = net.find_conv(p)) {
            e.is_conv = true;
            e.conv_base = cs->layer;
            e.level = cs->level;
            e.conv_lora = make_conv_lora(*cs->layer, lcfg.rank, rng);
            if (kind == ConditionKind::structure)
                e.local = make_structure_local(mcfg.structure_channels[static_cast<size_t>(cs->level)],
                                               lcfg.rank, cs->level, rng);
            else
                e.local = make_style_local(mcfg.d_img, lcfg.rank, rng);
        } else if (const AttnProjSite* as = net.find_attn(p)) {
            if (kind == ConditionKind::structure)
                detail::shape_fail("build_adapter",
                                   "structure conditioning cannot target attention projection " + p);
            e.is_conv = false;
            e.proj_base = as->weight;
            e.level = as->level;
            e.lin_lora = make_linear_lora(as->weight->dim(0), as->weight->dim(1), lcfg.rank, rng);
            e.local = make_style_local(mcfg.d_img, lcfg.rank, rng);
        } else {
            detail::shape_fail("build_adapter", "selected path not found: " + p);
        }
        ad.entries.push_back(std::move(e));
    }
    return ad;
}

// Construction-time audit: every entry's factor and local-mapper dims must
// match its layer, and structure levels must route to matching resolutions.
inline void audit_adapter(const Denoiser& net, const CondAdapter& ad) {
    for (const auto& e : ad.entries) {
        if (e.is_conv) {
            const ConvSite* cs = net.find_conv(e.path);
            if (!cs) detail::shape_fail("audit_adapter", "missing conv site " + e.path);
            const auto& ks = cs->layer->kernel.shape();
            const auto& as = e.conv_lora.KA.shape();
            if (as[1] != ks[1] || as[2] != ks[2] || as[3] != ks[3] || e.conv_lora.KB.dim(0) != ks[0])
                detail::shape_fail("audit_adapter", "factor dims do not match conv " + e.path);
            if (e.local.spatial) {
                if (e.local.level != cs->level)
                    detail::shape_fail("audit_adapter", "level routing mismatch at " + e.path);
                if (e.local.conv.kernel.dim(0) != 2 * e.conv_lora.rank())
                    detail::shape_fail("audit_adapter", "local mapper emits wrong rank at " + e.path);
            } else if (e.local.rank != e.conv_lora.rank()) {
                detail::shape_fail("audit_adapter", "local mapper rank mismatch at " + e.path);
            }
        } else {
            const AttnProjSite* as = net.find_attn(e.path);
            if (!as) detail::shape_fail("audit_adapter", "missing attention site " + e.path);
            if (e.lin_lora.A.dim(1) != as->weight->dim(1) || e.lin_lora.B.dim(0) != as->weight->dim(0))
                detail::shape_fail("audit_adapter", "factor dims do not match projection " + e.path);
            if (e.local.spatial || e.local.rank != e.lin_lora.rank())
                detail::shape_fail("audit_adapter", "local mapper mismatch at " + e.path);
        }
    }
}

// An adapter bound to the per-sample conditions of one forward pass.
struct BoundAdapter {
    const CondAdapter* adapter = nullptr;
    std::vector<Condition> conds;  // one per batch element
};

// Per-entry signals for one forward pass.
struct AdapterSignals {
    const CondAdapter* adapter = nullptr;
    std::vector<ModulationSignal> signals;
};

inline AdapterSignals compute_signals(Graph& g, const BoundAdapter& bound) {
    const CondAdapter& ad = *bound.adapter;
    AdapterSignals out;
    out.adapter = &ad;
    if (ad.kind == ConditionKind::style) {
        Tensor c = stack_style(bound.conds);                       // (B, d_img)
        Tensor shared = map_shared_style(g, ad.style_shared, c);   // (B, d_img)
        for (const auto& e : ad.entries) out.signals.push_back(map_local(g, e.local, shared));
    } else {
        Tensor m = stack_structure(bound.conds);                   // (B, 1, H, W)
        auto pyramid = map_shared_structure(g, ad.structure_shared, m);
        for (const auto& e : ad.entries)
            out.signals.push_back(map_local(g, e.local, pyramid[static_cast<size_t>(e.level)]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// forward pass
// ---------------------------------------------------------------------------

namespace detail {

struct Hooks {
    std::map<std::string, std::function<Tensor(Graph&, const ConvLayer&, const Tensor&)>> conv;
    std::map<std::string, ProjFn> attn;
};

inline Tensor run_conv(Graph& g, const Hooks* hooks, const std::string& path, const ConvLayer& c,
                       const Tensor& x) {
    if (hooks) {
        auto it = hooks->conv.find(path);
        if (it != hooks->conv.end()) return it->second(g, c, x);
    }
    return conv_forward(g, c, x);
}

inline ProjFn attn_hook(const Hooks* hooks, const std::string& path) {
    if (hooks) {
        auto it = hooks->attn.find(path);
        if (it != hooks->attn.end()) return it->second;
    }
    return nullptr;
}

inline Tensor run_resblock(Graph& g, const ResBlock& b, const std::string& path, const Tensor& x,
                           const Tensor& temb, const Hooks* hooks) {
    Tensor h = layer_norm(g, x, b.ln1_gain, b.ln1_bias, 1);
    h = silu(g, h);
    h = run_conv(g, hooks, path + "/conv/0", b.conv0, h);
    Tensor t = linear_forward(g, b.temb_proj, silu(g, temb));                 // (B, ch_out)
    h = add(g, h, reshape(g, t, {t.dim(0), t.dim(1), 1, 1}));
    h = layer_norm(g, h, b.ln2_gain, b.ln2_bias, 1);
    h = silu(g, h);
    h = run_conv(g, hooks, path + "/conv/1", b.conv1, h);
    Tensor skip = b.has_nin ? conv_forward(g, b.nin, x) : x;
    return add(g, h, skip);
}

inline Tensor run_attnblock(Graph& g, const AttnBlock& a, const std::string& path, const Tensor& x,
                            const Tensor& ctx, const Hooks* hooks) {
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor tokens = permute(g, reshape(g, x, {B, C, H * W}), {0, 2, 1});  // (B, T, C)
    tokens = add(g, tokens, a.pos);
    Tensor n1 = layer_norm_last(g, tokens, a.ln1_gain, a.ln1_bias);
    Tensor sa = attention_forward(g, a.self_at, n1, nullptr, attn_hook(hooks, path + "/self/wk"),
                                  attn_hook(hooks, path + "/self/wv"));
    tokens = add(g, tokens, sa);
    Tensor n2 = layer_norm_last(g, tokens, a.ln2_gain, a.ln2_bias);
    Tensor ca = attention_forward(g, a.cross_at, n2, &ctx, attn_hook(hooks, path + "/cross/wk"),
                                  attn_hook(hooks, path + "/cross/wv"));
    tokens = add(g, tokens, linear_forward(g, a.cross_out, ca));
    return reshape(g, permute(g, tokens, {0, 2, 1}), {B, C, H, W});
}

}  // namespace detail

// Sinusoidal embedding of integer timesteps, (B, dim). No tape involvement.
inline Tensor timestep_embedding(const std::vector<int64_t>& ts, int64_t dim) {
    const int64_t half = dim / 2;
    Tensor out = Tensor::zeros({static_cast<int64_t>(ts.size()), dim});
    for (size_t i = 0; i < ts.size(); ++i) {
        for (int64_t j = 0; j < half; ++j) {
            const scalar freq = std::exp(static_cast<scalar>(-std::log(10000.0) * static_cast<double>(j) /
                                                             static_cast<double>(half)));
            const scalar arg = static_cast<scalar>(ts[i]) * freq;
            out.data()[i * static_cast<size_t>(dim) + static_cast<size_t>(j)] = std::sin(arg);
            out.data()[i * static_cast<size_t>(dim) + static_cast<size_t>(half + j)] = std::cos(arg);
        }
    }
    return out;
}

// Context token stream from class labels: [class embedding, register token]
// per sample, (B, 2, context_dim). Label 0 is the null (unconditional) row.
inline Tensor context_tokens(Graph& g, const Denoiser& net, const std::vector<int64_t>& labels) {
    const int64_t reg_row = net.cfg.num_classes + 1;
    std::vector<int64_t> ids;
    ids.reserve(labels.size() * 2);
    for (int64_t l : labels) {
        if (l < 0 || l > net.cfg.num_classes)
            detail::shape_fail("context_tokens", "label " + std::to_string(l) + " out of range");
        ids.push_back(l);
        ids.push_back(reg_row);
    }
    Tensor flat = embed(g, net.ctx_table, ids);  // (2B, d_ctx)
    return reshape(g, flat, {static_cast<int64_t>(labels.size()), 2, net.cfg.context_dim});
}

// Noise prediction with zero or more conditional adapters attached. With no
// adapters (or freshly initialized ones) the output is the frozen base
// network's prediction.
inline Tensor denoise_forward(Graph& g, const Denoiser& net, const std::vector<BoundAdapter>& adapters,
                              const Tensor& x_t, const std::vector<int64_t>& ts,
                              const std::vector<int64_t>& labels) {
    const int64_t B = x_t.dim(0);
    if (static_cast<int64_t>(ts.size()) != B || static_cast<int64_t>(labels.size()) != B)
        detail::shape_fail("denoise_forward", "batch size mismatch between x_t, timesteps and labels");
    for (const auto& b : adapters) {
        if (static_cast<int64_t>(b.conds.size()) != B)
            detail::shape_fail("denoise_forward", "adapter condition count != batch size");
        audit_adapter(net, *b.adapter);
    }

    // signals first, then one hook per adapted layer
    detail::Hooks hooks;
    std::vector<AdapterSignals> sig;
    sig.reserve(adapters.size());
    for (const auto& b : adapters) sig.push_back(compute_signals(g, b));
    for (const auto& s : sig) {
        const CondAdapter& ad = *s.adapter;
        for (size_t i = 0; i < ad.entries.size(); ++i) {
            const AdapterEntry& e = ad.entries[i];
            const ModulationSignal& ms = s.signals[i];
            if (e.is_conv) {
                if (hooks.conv.count(e.path))
                    detail::shape_fail("denoise_forward", "two adapters target layer " + e.path);
                const ConvLora* lora = &e.conv_lora;
                const scalar lam = ad.lambda;
                hooks.conv[e.path] = [lora, ms, lam](Graph& gg, const ConvLayer& base, const Tensor& in) {
                    return cond_lora_conv_forward(gg, base, *lora, ms, lam, in);
                };
            } else {
                if (hooks.attn.count(e.path))
                    detail::shape_fail("denoise_forward", "two adapters target layer " + e.path);
                const LinearLora* lora = &e.lin_lora;
                const Tensor* w = e.proj_base;
                const scalar lam = ad.lambda;
                hooks.attn[e.path] = [lora, ms, lam, w](Graph& gg, const Tensor& kv) {
                    LinearLayer base;
                    base.weight = *w;
                    return cond_lora_linear_forward(gg, base, *lora, ms, lam, kv);
                };
            }
        }
    }

    Tensor temb = timestep_embedding(ts, net.cfg.time_embed_dim);
    temb = linear_forward(g, net.temb0, temb);
    temb = silu(g, temb);
    temb = linear_forward(g, net.temb1, temb);
    Tensor ctx = context_tokens(g, net, labels);

    Tensor h = detail::run_conv(g, &hooks, "in/conv", net.conv_in, x_t);
    std::vector<Tensor> saves;
    for (int64_t k = 0; k < 4; ++k) {
        const Level& lv = net.down[static_cast<size_t>(k)];
        for (size_t j = 0; j < lv.res.size(); ++j) {
            std::string p = "down/" + std::to_string(k) + "/res/" + std::to_string(j);
            h = detail::run_resblock(g, lv.res[j], p, h, temb, &hooks);
            if (!lv.attn.empty()) {
                std::string ap = "down/" + std::to_string(k) + "/attn/" + std::to_string(j);
                h = detail::run_attnblock(g, lv.attn[j], ap, h, ctx, &hooks);
            }
        }
        saves.push_back(h);
        if (k < 3) h = avgpool(g, h, 2);
    }

    h = detail::run_resblock(g, net.mid.res[0], "mid/res/0", h, temb, &hooks);
    h = detail::run_attnblock(g, net.mid.attn[0], "mid/attn/0", h, ctx, &hooks);

    for (int64_t k = 3; k >= 0; --k) {
        const Level& lv = net.up[static_cast<size_t>(k)];
        h = concat(g, {h, saves[static_cast<size_t>(k)]}, 1);
        for (size_t j = 0; j < lv.res.size(); ++j) {
            std::string p = "up/" + std::to_string(k) + "/res/" + std::to_string(j);
            h = detail::run_resblock(g, lv.res[j], p, h, temb, &hooks);
            if (!lv.attn.empty()) {
                std::string ap = "up/" + std::to_string(k) + "/attn/" + std::to_string(j);
                h = detail::run_attnblock(g, lv.attn[j], ap, h, ctx, &hooks);
            }
        }
        if (k > 0) h = upsample_nearest(g, h, 2);
    }

    h = layer_norm(g, h, net.out_ln_gain, net.out_ln_bias, 1);
    h = silu(g, h);
    return detail::run_conv(g, &hooks, "out/conv", net.conv_out, h);
}

}  // namespace clora
