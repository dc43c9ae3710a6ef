#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "resdit/attention.hpp"
#include "resdit/grid.hpp"
#include "resdit/linalg.hpp"
#include "resdit/partition.hpp"

namespace resdit {

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct ModelConfig {
    std::size_t model_dim = 64;
    std::size_t num_heads = 4;
    std::size_t num_blocks = 4;
    std::size_t mlp_ratio = 4;
    std::size_t patch_px = 2;   // pixels per token side
    std::size_t base_h = 16;    // training grid, in tokens
    std::size_t base_w = 16;
    std::size_t num_classes = 0;  // 0: timestep conditioning only
    double rope_base = 10000.0;

    std::size_t patch_dim() const { return patch_px * patch_px; }
    std::size_t head_dim() const { return model_dim / num_heads; }
    std::size_t hidden_dim() const { return model_dim * mlp_ratio; }
    void validate() const;
};

struct Parameter {
    std::string name;
    RowMatrix value;
    RowMatrix grad;
};

/// Desk-scale DiT: patch embedding, adaLN-Zero transformer blocks with axial-RoPE attention,
/// and a modulated linear head predicting the flow-matching velocity per pixel patch.
class ToyDiT {
public:
    struct Block {
        std::size_t w_q, w_k, w_v, w_o;
        std::size_t fc1_w, fc1_b, fc2_w, fc2_b;
        std::size_t mod_w, mod_b;  // -> shift1, scale1, gate1, shift2, scale2, gate2
    };
    struct Index {
        std::size_t embed_w, embed_b;
        std::size_t t_fc1_w, t_fc1_b, t_fc2_w, t_fc2_b;
        std::optional<std::size_t> class_embed;  // num_classes + 1 rows, last row = unconditional
        std::vector<Block> blocks;
        std::size_t final_mod_w, final_mod_b;  // -> shift, scale
        std::size_t final_w, final_b;
    };

    /// Standard initialization: Xavier-uniform linears, zeroed modulation and output head.
    ToyDiT(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    const Index& index() const { return index_; }

    std::vector<Parameter>& parameters() { return params_; }
    const std::vector<Parameter>& parameters() const { return params_; }
    const RowMatrix& param(std::size_t i) const { return params_[i].value; }
    std::size_t parameter_count() const;

    AttentionWeights attention_weights(std::size_t block) const;

    void zero_grad();
    /// Every parameter ~ N(0, stddev^2); breaks the zero init for gradient checks.
    void randomize(std::uint64_t seed, double stddev);

private:
    std::size_t add(std::string name, std::size_t rows, std::size_t cols);

    ModelConfig config_;
    Index index_{};
    std::vector<Parameter> params_;
};

/// Class label for the unconditional (null) embedding.
constexpr int kUnconditional = -1;

/// Velocity prediction for `tokens` (grid of pixel patches) at time t, with every attention
/// layer run in `mode` under `ctx`. `label` selects a class embedding when the model is
/// class-conditional.
TokenGrid forward(const ToyDiT& model, const TokenGrid& tokens, double t, BranchMode mode,
                  const BranchContext& ctx, int label = kUnconditional);

/// Base-resolution forward with vanilla integer RoPE (the training-time network).
TokenGrid forward_base(const ToyDiT& model, const TokenGrid& tokens, double t,
                       int label = kUnconditional);

struct TrainExample {
    TokenGrid noisy;   // x_t, patchified
    TokenGrid target;  // eps - x0
    double t = 0.0;
    int label = kUnconditional;
};

/// Mean squared error over the batch; accumulates d(loss)/d(param) into Parameter::grad.
double loss_and_grad(ToyDiT& model, const std::vector<TrainExample>& batch);

/// Same loss without gradients.
double batch_loss(const ToyDiT& model, const std::vector<TrainExample>& batch);

// ---------------------------------------------------------------------------
// Pixels <-> tokens
// ---------------------------------------------------------------------------

/// (H x W x 1) pixels -> (H/p x W/p x p*p) tokens, row-major within each patch.
TokenGrid patchify(const TokenGrid& image, std::size_t patch_px);
TokenGrid unpatchify(const TokenGrid& tokens, std::size_t patch_px);

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

struct DiskSample {
    TokenGrid image;  // h x w x 1, values in [0, 1]
    double center_row = 0.0;  // pixel units, frame spans [0, h]
    double center_col = 0.0;
    double radius = 0.0;
};

/// Bright anti-aliased disk on a dark background. Center uniform in the central 60% of the
/// frame, radius uniform in [0.15, 0.25] * min(h, w).
DiskSample synth_disk(std::mt19937_64& rng, std::size_t h_px, std::size_t w_px);

/// Same placement, drawn as a ring of width 0.35 * radius (second class for guidance).
DiskSample synth_ring(std::mt19937_64& rng, std::size_t h_px, std::size_t w_px);

struct DiskStats {
    double area_fraction = 0.0;
    double centroid_row = 0.5;  // normalized to [0, 1]
    double centroid_col = 0.5;
    double seam_energy = 0.0;
};

/// Thresholded (> 0.5) area, intensity centroid (frame center for a black image), and mean
/// squared pixel difference across the interior window edges of `layout` (token units,
/// scaled by patch_px). Without a layout the seam energy is 0.
DiskStats disk_stats(const TokenGrid& image, const PatchLayout* layout = nullptr,
                     std::size_t patch_px = 1);

double seam_energy(const TokenGrid& image, const PatchLayout& layout, std::size_t patch_px);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
    std::size_t steps = 2000;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double grad_clip = 1.0;  // global norm; 0 disables
    double class_dropout = 0.1;  // probability of training a conditional example unconditionally
    std::uint64_t seed = 7;

    void validate() const;
};

class Optimizer {
public:
    explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}
    void step(std::vector<Parameter>& params);

private:
    TrainConfig cfg_;
    std::size_t t_ = 0;
    std::vector<RowMatrix> m_;
    std::vector<RowMatrix> v_;
};

/// Draws a flow-matching batch: x_t = (1 - t) x0 + t eps with t ~ U(0, 1), target eps - x0.
std::vector<TrainExample> make_batch(const ModelConfig& model_cfg, const TrainConfig& cfg,
                                     std::mt19937_64& rng);

class Trainer {
public:
    Trainer(ToyDiT& model, const TrainConfig& cfg);

    /// One optimizer step on a fresh batch. Throws DivergenceError on a non-finite loss.
    double train_step();
    /// One optimizer step on the given batch.
    double train_step(const std::vector<TrainExample>& batch);

    std::size_t steps_done() const { return step_; }

private:
    ToyDiT& model_;
    TrainConfig cfg_;
    Optimizer optimizer_;
    std::mt19937_64 rng_;
    std::size_t step_ = 0;
};

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

struct SamplerSchedule {
    std::vector<BranchMode> modes;
    std::size_t total() const { return modes.size(); }
};

/// [Global] x global_steps ++ [Fused] x rest ++ [Local] x local_steps.
SamplerSchedule build_schedule(std::size_t total, std::size_t global_steps, std::size_t local_steps);

struct GuidanceConfig {
    double scale = 3.5;
    bool enabled = false;
    int label = 0;

    void validate() const;
};

struct SamplingOptions {
    GlobalPE global_pe = GlobalPE::Scaled;
    SpliceMode splice_mode = SpliceMode::Gaussian;
    FusionMode fusion_mode = FusionMode::Spectral;
    bool tiles = false;  // disjoint tiles instead of the minimum-overlap layout
    FusionConfig fusion;
    std::optional<SpliceConfig> splice;  // default: patch size / 2
    std::optional<std::size_t> n_rows;
    std::optional<std::size_t> n_cols;
};

BranchContext make_context(const ModelConfig& cfg, std::size_t grid_h, std::size_t grid_w,
                           const SamplingOptions& opts);

/// Euler integration of the learned flow from seeded noise at t = 1 down to t = 0 on the grid
/// t_i = 1 - i / total. Returns the decoded (target_h_px x target_w_px x 1) image in [0, 1].
TokenGrid sample(const ToyDiT& model, const SamplerSchedule& schedule, std::size_t target_h_px,
                 std::size_t target_w_px, std::uint64_t seed, const GuidanceConfig& guidance,
                 const SamplingOptions& opts = {});

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Single file: a one-line JSON manifest (parameter names, shapes, and `run_config`) followed
/// by one raw tensor record per parameter in manifest order.
void save_checkpoint(const std::filesystem::path& path, const ToyDiT& model,
                     const nlohmann::json& run_config);

struct LoadedCheckpoint {
    ToyDiT model;
    nlohmann::json run_config;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace resdit
