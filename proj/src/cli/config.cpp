#include "resdit/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace resdit::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

template <typename T>
T get(const json& node, const char* section, const char* key) {
    const std::string where = std::string(section) + "." + key;
    try {
        return node.at(section).at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("config key '" + where + "': " + e.what());
    }
}

template <typename T>
std::optional<T> get_optional(const json& node, const char* section, const char* key) {
    const auto& v = node.at(section).at(key);
    if (v.is_null()) return std::nullopt;
    return get<T>(node, section, key);
}

// Rejects negative values before they wrap into a size_t.
std::size_t get_count(const json& node, const char* section, const char* key) {
    const auto& v = node.at(section).at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError(std::string("config key '") + section + "." + key +
                          "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

std::optional<std::size_t> get_optional_count(const json& node, const char* section,
                                              const char* key) {
    if (node.at(section).at(key).is_null()) return std::nullopt;
    return get_count(node, section, key);
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "sgd") return OptimizerKind::Sgd;
    throw ConfigError("config key 'train.optimizer' must be \"adam\" or \"sgd\", got \"" + s + "\"");
}

MaskShape mask_from_string(const std::string& s) {
    if (s == "radial") return MaskShape::Radial;
    if (s == "rectangular") return MaskShape::Rectangular;
    throw ConfigError("config key 'fusion.mask' must be \"radial\" or \"rectangular\", got \"" + s +
                      "\"");
}

}  // namespace

ordered_json default_config_json() {
    return to_json(RunConfig{});
}

ordered_json to_json(const RunConfig& c) {
    auto opt = [](const auto& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
    ordered_json j;
    j["seed"] = c.seed;
    j["model"] = resdit::to_json(c.model);
    j["train"] = {
        {"steps", c.train.steps},
        {"batch_size", c.train.batch_size},
        {"learning_rate", c.train.learning_rate},
        {"optimizer", c.train.optimizer == OptimizerKind::Adam ? "adam" : "sgd"},
        {"grad_clip", c.train.grad_clip},
        {"class_dropout", c.train.class_dropout},
        {"log_every", c.log_every},
    };
    j["sampler"] = {
        {"steps", c.sampler.steps},
        {"global_steps", c.sampler.global_steps},
        {"local_steps", c.sampler.local_steps},
    };
    j["guidance"] = {
        {"enabled", c.guidance.enabled},
        {"scale", c.guidance.scale},
        {"label", c.guidance.label},
    };
    j["fusion"] = {
        {"cutoff", c.fusion.cutoff},
        {"mask", c.fusion.shape == MaskShape::Radial ? "radial" : "rectangular"},
    };
    j["splice"] = {{"sigma_rows", opt(c.sigma_rows)}, {"sigma_cols", opt(c.sigma_cols)}};
    j["partition"] = {{"n_rows", opt(c.n_rows)}, {"n_cols", opt(c.n_cols)}};
    j["target"] = {{"height_px", c.target_h_px}, {"width_px", c.target_w_px}};
    j["ablation"] = {
        {"vanilla_pe", c.ablation.vanilla_pe},
        {"no_splice_gaussian", c.ablation.no_splice_gaussian},
        {"no_overlap", c.ablation.no_overlap},
        {"no_fusion", c.ablation.no_fusion},
    };
    j["fig2"] = {{"seeds", c.fig2.seeds}, {"scale", c.fig2.scale}};
    j["image"] = {{"bits", c.image_bits}};
    return j;
}

void merge_config(ordered_json& base, const json& patch, const std::string& path) {
    if (!patch.is_object()) {
        throw ConfigError("config " + (path.empty() ? std::string("root") : "'" + path + "'") +
                          " must be an object");
    }
    for (const auto& [key, value] : patch.items()) {
        const std::string where = join(path, key);
        auto it = base.find(key);
        if (it == base.end()) {
            throw ConfigError("unknown config key '" + where + "'");
        }
        if (it->is_object()) {
            merge_config(*it, value, where);
        } else if (value.is_object() || value.is_array()) {
            throw ConfigError("config key '" + where + "' must be a scalar");
        } else {
            *it = value;
        }
    }
}

void apply_override(ordered_json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (value.is_discarded()) value = text;

    json patch = value;
    std::string::size_type end = key.size();
    while (true) {
        const auto dot = key.rfind('.', end - 1);
        const std::string part =
            dot == std::string::npos ? key.substr(0, end) : key.substr(dot + 1, end - dot - 1);
        if (part.empty()) {
            throw ConfigError("override key '" + key + "' has an empty component");
        }
        patch = json{{part, patch}};
        if (dot == std::string::npos) break;
        end = dot;
    }
    merge_config(config, patch);
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    try {
        const auto& seed = j.at("seed");
        if (!seed.is_number_integer() || seed.get<long long>() < 0) {
            throw ConfigError("config key 'seed' must be a non-negative integer");
        }
        c.seed = seed.get<std::uint64_t>();

        auto& m = c.model;
        m.model_dim = get_count(j, "model", "model_dim");
        m.num_heads = get_count(j, "model", "num_heads");
        m.num_blocks = get_count(j, "model", "num_blocks");
        m.mlp_ratio = get_count(j, "model", "mlp_ratio");
        m.patch_px = get_count(j, "model", "patch_px");
        m.base_h = get_count(j, "model", "base_h");
        m.base_w = get_count(j, "model", "base_w");
        m.num_classes = get_count(j, "model", "num_classes");
        m.rope_base = get<double>(j, "model", "rope_base");

        auto& t = c.train;
        t.steps = get_count(j, "train", "steps");
        t.batch_size = get_count(j, "train", "batch_size");
        t.learning_rate = get<double>(j, "train", "learning_rate");
        t.optimizer = optimizer_from_string(get<std::string>(j, "train", "optimizer"));
        t.grad_clip = get<double>(j, "train", "grad_clip");
        t.class_dropout = get<double>(j, "train", "class_dropout");
        c.log_every = get_count(j, "train", "log_every");

        c.sampler.steps = get_count(j, "sampler", "steps");
        c.sampler.global_steps = get_count(j, "sampler", "global_steps");
        c.sampler.local_steps = get_count(j, "sampler", "local_steps");

        c.guidance.enabled = get<bool>(j, "guidance", "enabled");
        c.guidance.scale = get<double>(j, "guidance", "scale");
        c.guidance.label = get<int>(j, "guidance", "label");

        c.fusion.cutoff = get<double>(j, "fusion", "cutoff");
        c.fusion.shape = mask_from_string(get<std::string>(j, "fusion", "mask"));

        c.sigma_rows = get_optional<double>(j, "splice", "sigma_rows");
        c.sigma_cols = get_optional<double>(j, "splice", "sigma_cols");
        c.n_rows = get_optional_count(j, "partition", "n_rows");
        c.n_cols = get_optional_count(j, "partition", "n_cols");

        c.target_h_px = get_count(j, "target", "height_px");
        c.target_w_px = get_count(j, "target", "width_px");

        c.ablation.vanilla_pe = get<bool>(j, "ablation", "vanilla_pe");
        c.ablation.no_splice_gaussian = get<bool>(j, "ablation", "no_splice_gaussian");
        c.ablation.no_overlap = get<bool>(j, "ablation", "no_overlap");
        c.ablation.no_fusion = get<bool>(j, "ablation", "no_fusion");

        c.fig2.seeds = get_count(j, "fig2", "seeds");
        c.fig2.scale = get_count(j, "fig2", "scale");
        c.image_bits = get<int>(j, "image", "bits");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is missing a key: ") + e.what());
    }
    return c;
}

void RunConfig::validate() const {
    // Module validators report std::invalid_argument; surface them as config errors.
    try {
        model.validate();
        train_config().validate();
        guidance.validate();
        fusion.validate();
        build_schedule(sampler.steps, sampler.global_steps, sampler.local_steps);
        sampling_options().splice.value_or(SpliceConfig{}).validate();
        if (guidance.enabled) {
            if (model.num_classes == 0) {
                throw std::invalid_argument(
                    "guidance.enabled requires a class-conditional model (model.num_classes > 0)");
            }
            if (guidance.label < 0 || static_cast<std::size_t>(guidance.label) >= model.num_classes) {
                throw std::invalid_argument("guidance.label out of range");
            }
        }
        if (model.num_classes > 2) {
            throw std::invalid_argument("model.num_classes must be 0 (timestep only) or <= 2");
        }
        if (log_every == 0) {
            throw std::invalid_argument("train.log_every must be >= 1");
        }
        const std::size_t p = model.patch_px;
        if (target_h_px % p != 0 || target_w_px % p != 0) {
            throw std::invalid_argument("target size must be divisible by model.patch_px");
        }
        if (target_h_px < model.base_h * p || target_w_px < model.base_w * p) {
            throw std::invalid_argument("target size must be at least the training resolution");
        }
        // Layout preconditions at the target resolution.
        make_context(model, target_h_px / p, target_w_px / p, sampling_options());
        if (fig2.seeds == 0 || fig2.scale == 0) {
            throw std::invalid_argument("fig2.seeds and fig2.scale must be >= 1");
        }
        if (image_bits != 8 && image_bits != 16) {
            throw std::invalid_argument("image.bits must be 8 or 16");
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
}

SamplerSchedule RunConfig::schedule() const {
    return build_schedule(sampler.steps, sampler.global_steps, sampler.local_steps);
}

SamplingOptions RunConfig::sampling_options() const {
    SamplingOptions o;
    o.global_pe = ablation.vanilla_pe ? GlobalPE::Vanilla : GlobalPE::Scaled;
    o.splice_mode = ablation.no_splice_gaussian ? SpliceMode::Hard : SpliceMode::Gaussian;
    o.fusion_mode = ablation.no_fusion ? FusionMode::Average : FusionMode::Spectral;
    o.tiles = ablation.no_overlap;
    o.fusion = fusion;
    if (sigma_rows || sigma_cols) {
        const auto def = SpliceConfig::for_patch(model.base_h, model.base_w);
        o.splice = SpliceConfig{sigma_rows.value_or(def.sigma_rows),
                                sigma_cols.value_or(def.sigma_cols)};
    }
    o.n_rows = n_rows;
    o.n_cols = n_cols;
    return o;
}

TrainConfig RunConfig::train_config() const {
    TrainConfig t = train;
    t.seed = seed;
    return t;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& overrides) {
    ordered_json config = default_config_json();
    if (file) {
        std::ifstream in(*file);
        if (!in) {
            throw ConfigError("cannot open config file " + file->string());
        }
        json loaded;
        try {
            loaded = json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
        } catch (const json::exception& e) {
            throw ConfigError("config file " + file->string() + " is not valid JSON: " + e.what());
        }
        merge_config(config, loaded);
    }
    for (const auto& o : overrides) apply_override(config, o);
    RunConfig cfg = run_config_from_json(config);
    cfg.validate();
    return cfg;
}

}  // namespace resdit::cli
