#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "resdit/dit.hpp"

namespace resdit::cli {

/// Invalid user input: unknown keys, wrong types, values outside a module's preconditions.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct AblationFlags {
    bool vanilla_pe = false;          // global branch keeps integer indices past the training range
    bool no_splice_gaussian = false;  // nearest-window hard splice
    bool no_overlap = false;          // disjoint tiles instead of the minimum-overlap layout
    bool no_fusion = false;           // spatial average of the branches instead of spectral fusion

    bool any() const { return vanilla_pe || no_splice_gaussian || no_overlap || no_fusion; }
};

struct ScheduleConfig {
    std::size_t steps = 35;
    std::size_t global_steps = 10;
    std::size_t local_steps = 15;
};

struct Fig2Config {
    std::size_t seeds = 32;
    std::size_t scale = 2;  // target = scale * training resolution
};

struct RunConfig {
    std::uint64_t seed = 7;
    ModelConfig model;
    TrainConfig train;
    std::size_t log_every = 1;
    ScheduleConfig sampler;
    GuidanceConfig guidance;
    FusionConfig fusion;
    std::optional<double> sigma_rows;
    std::optional<double> sigma_cols;
    std::optional<std::size_t> n_rows;
    std::optional<std::size_t> n_cols;
    std::size_t target_h_px = 64;
    std::size_t target_w_px = 64;
    AblationFlags ablation;
    Fig2Config fig2;
    int image_bits = 8;

    /// Checks every field against the preconditions of the module it configures.
    void validate() const;

    SamplerSchedule schedule() const;
    SamplingOptions sampling_options() const;
    TrainConfig train_config() const;
};

/// The full key tree with default values; nulls mark optional keys.
nlohmann::ordered_json default_config_json();

/// Recursively overlays `patch` onto `base`; a key absent from `base` is a ConfigError.
void merge_config(nlohmann::ordered_json& base, const nlohmann::json& patch,
                  const std::string& path = "");

/// "a.b.c=value"; the value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::ordered_json& config, const std::string& assignment);

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RunConfig& cfg);

/// Defaults, then the file (if any), then each override in order. The result is validated.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& overrides);

}  // namespace resdit::cli
