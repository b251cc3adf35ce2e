#pragma once

// Run configuration: a nested key/value document (JSON on disk) validated
// against the known schema (unknown keys are errors), plus the canonical
// digest embedded in every run artifact.

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "clora/denoiser.hpp"
#include "clora/diffusion.hpp"
#include "clora/lora.hpp"

namespace clora {

using json = nlohmann::json;

inline json default_config_json() {
    return json{
        {"data",
         {{"dir", "data"},
          {"train_scenes", 4096},
          {"eval_scenes", 512},
          {"image_size", 32},
          {"seed", 7}}},
        {"denoiser",
         {{"base_channels", 8},
          {"channel_mults", {1, 2, 2, 4}},
          {"attention_levels", {2, 3}},
          {"context_dim", 256},
          {"time_embed_dim", 64},
          {"num_classes", 3},
          {"seed", 1}}},
        {"schedule", {{"timesteps", 1000}, {"beta_start", 1e-4}, {"beta_end", 0.02}}},
        {"adapter",
         {{"condition", "structure"},
          {"selector", "conv-config-b"},
          {"rank", 16},
          {"scale", 1.0},
          {"seed", 3},
          {"custom_paths", json::array()}}},
        {"mapper", {{"style_dim", 64}, {"structure_channels", {8, 16, 32, 64}}}},
        {"train",
         {{"steps", 2000},
          {"batch_size", 4},
          {"lr", 1e-3},
          {"weight_decay", 0.01},
          {"dropout", 0.05},
          {"seed", 11},
          {"log_every", 50},
          {"checkpoint_every", 1000}}},
        {"sample", {{"steps", 50}, {"cfg_scale", 7.5}, {"lora_scale", 1.0}, {"clip_x0", true}, {"seed", 0}}},
        {"eval", {{"protocol", "structure"}, {"max_scenes", 64}, {"samples_per_prompt", 4}, {"seed", 23}}},
    };
}

namespace detail {

inline void merge_validated(json& base, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError("config section " + (path.empty() ? "<root>" : path) + " must be an object");
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key: " + key);
        json& slot = base[it.key()];
        if (slot.is_object()) {
            merge_validated(slot, it.value(), key);
        } else {
            if (slot.is_string() != it.value().is_string() ||
                (slot.is_boolean() != it.value().is_boolean()) ||
                (slot.is_array() != it.value().is_array()) ||
                (slot.is_number() != it.value().is_number()))
                throw ConfigError("config key " + key + " has the wrong type");
            slot = it.value();
        }
    }
}

inline void flatten(const json& j, const std::string& path, std::vector<std::string>& lines) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it)
            flatten(it.value(), path.empty() ? it.key() : path + "." + it.key(), lines);
    } else {
        lines.push_back(path + "=" + j.dump());
    }
}

}  // namespace detail

// Canonicalized resolved config text: sorted "dotted.path=value" lines.
inline std::string canonical_config_text(const json& j) {
    std::vector<std::string> lines;
    detail::flatten(j, "", lines);
    std::sort(lines.begin(), lines.end());
    std::string out;
    for (const auto& l : lines) {
        out += l;
        out += '\n';
    }
    return out;
}

inline uint64_t config_digest(const json& j) { return fnv1a64(canonical_config_text(j)); }

// Digest of the frozen-architecture subset only; adapters trained against
// the same base/schedule/data geometry stay attachable together even when
// their adapter/train sections differ.
inline uint64_t arch_digest(const json& j) {
    json sub = {{"data", {{"image_size", j["data"]["image_size"]}}},
                {"denoiser", j["denoiser"]},
                {"schedule", j["schedule"]},
                {"mapper", j["mapper"]}};
    return fnv1a64(canonical_config_text(sub));
}

struct RunConfig {
    json tree;

    // typed views -------------------------------------------------------
    std::string data_dir() const { return tree["data"]["dir"]; }
    int64_t train_scenes() const { return tree["data"]["train_scenes"]; }
    int64_t eval_scenes() const { return tree["data"]["eval_scenes"]; }
    int64_t image_size() const { return tree["data"]["image_size"]; }
    uint64_t data_seed() const { return tree["data"]["seed"]; }

    DenoiserConfig denoiser() const {
        DenoiserConfig d;
        d.image_size = tree["data"]["image_size"];
        d.base_channels = tree["denoiser"]["base_channels"];
        d.channel_mults = tree["denoiser"]["channel_mults"].get<std::vector<int64_t>>();
        d.attention_levels = tree["denoiser"]["attention_levels"].get<std::vector<int64_t>>();
        d.context_dim = tree["denoiser"]["context_dim"];
        d.time_embed_dim = tree["denoiser"]["time_embed_dim"];
        d.num_classes = tree["denoiser"]["num_classes"];
        return d;
    }
    uint64_t denoiser_seed() const { return tree["denoiser"]["seed"]; }

    DiffusionSchedule schedule() const {
        return make_schedule(tree["schedule"]["timesteps"], tree["schedule"]["beta_start"],
                             tree["schedule"]["beta_end"]);
    }

    ConditionKind condition() const {
        const std::string c = tree["adapter"]["condition"];
        if (c == "style") return ConditionKind::style;
        if (c == "structure") return ConditionKind::structure;
        throw ConfigError("adapter.condition must be style or structure, got " + c);
    }
    LayerSelector selector() const {
        LayerSelector s;
        s.mode = LayerSelector::parse_mode(tree["adapter"]["selector"]);
        s.custom_paths = tree["adapter"]["custom_paths"].get<std::vector<std::string>>();
        return s;
    }
    LoraConfig lora() const {
        LoraConfig l;
        l.rank = tree["adapter"]["rank"];
        l.scale = tree["adapter"]["scale"];
        l.selector = tree["adapter"]["selector"];
        return l;
    }
    uint64_t adapter_seed() const { return tree["adapter"]["seed"]; }

    MapperConfig mapper() const {
        MapperConfig m;
        m.d_img = tree["mapper"]["style_dim"];
        m.structure_channels = tree["mapper"]["structure_channels"].get<std::vector<int64_t>>();
        return m;
    }

    SampleRequest sample_request() const {
        SampleRequest r;
        r.steps = tree["sample"]["steps"];
        r.guidance.w = tree["sample"]["cfg_scale"];
        r.seed = tree["sample"]["seed"];
        r.clip_x0 = tree["sample"]["clip_x0"];
        return r;
    }
    scalar lora_scale() const { return tree["sample"]["lora_scale"]; }

    uint64_t digest() const { return config_digest(tree); }
    uint64_t arch() const { return arch_digest(tree); }
    std::string canonical_text() const { return canonical_config_text(tree); }
};

inline RunConfig make_config(const json& user = json::object()) {
    json base = default_config_json();
    detail::merge_validated(base, user, "");
    return RunConfig{base};
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config file not found: " + path);
    json user;
    try {
        f >> user;
    } catch (const json::exception& e) {
        throw ConfigError("cannot parse config " + path + ": " + e.what());
    }
    return make_config(user);
}

// "--set a.b.c=value" overrides; values parse as JSON when possible and
// fall back to strings.
inline void apply_override(RunConfig& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override must look like key.path=value: " + kv);
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json val;
    try {
        val = json::parse(raw);
    } catch (const json::exception&) {
        val = raw;
    }
    // walk the dotted path
    std::vector<std::string> parts;
    std::string cur;
    for (char c : path) {
        if (c == '.') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    json* node = &cfg.tree;
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        if (!node->contains(parts[i])) throw ConfigError("unknown config key: " + path);
        node = &(*node)[parts[i]];
    }
    if (!node->contains(parts.back())) throw ConfigError("unknown config key: " + path);
    json& slot = (*node)[parts.back()];
    if (slot.is_number() && val.is_number()) {
        slot = val;
    } else if (slot.is_string() && val.is_string()) {
        slot = val;
    } else if (slot.is_boolean() && val.is_boolean()) {
        slot = val;
    } else if (slot.is_array() && val.is_array()) {
        slot = val;
    } else if (slot.is_string()) {
        slot = raw;  // unquoted string override
    } else {
        throw ConfigError("override for " + path + " has the wrong type");
    }
}

}  // namespace clora
