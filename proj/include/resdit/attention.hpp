#pragma once

#include <cstddef>
#include <random>
#include <string_view>
#include <vector>

#include "resdit/grid.hpp"
#include "resdit/linalg.hpp"
#include "resdit/partition.hpp"
#include "resdit/rope.hpp"
#include "resdit/spectral.hpp"

namespace resdit {

/// Q/K/V/O projections of one self-attention layer, x * W convention (model_dim x model_dim).
struct AttentionWeights {
    std::size_t num_heads = 1;
    RowMatrix w_q;
    RowMatrix w_k;
    RowMatrix w_v;
    RowMatrix w_o;

    std::size_t model_dim() const { return static_cast<std::size_t>(w_q.rows()); }
    std::size_t head_dim() const { return model_dim() / num_heads; }
    void validate() const;

    /// Gaussian init with standard deviation `stddev`.
    static AttentionWeights random(std::size_t model_dim, std::size_t num_heads, std::mt19937_64& rng,
                                   double stddev);
};

enum class BranchMode { Global, Local, Fused };

/// Positional indices fed to the global branch.
enum class GlobalPE {
    Scaled,   // rectified into the training range
    Vanilla,  // integer indices continued past the training range
    Tiled,    // base-resolution indices repeated across the canvas
};

enum class SpliceMode { Gaussian, Hard };
enum class FusionMode { Spectral, Average };

std::string_view to_string(BranchMode mode);
BranchMode branch_mode_from_string(std::string_view name);

/// Everything resdit_attention needs besides the input and the weights.
struct BranchContext {
    ScaleFactors scale;
    PatchLayout layout;
    SpliceConfig splice;
    FusionConfig fusion;
    GlobalPE global_pe = GlobalPE::Scaled;
    SpliceMode splice_mode = SpliceMode::Gaussian;
    FusionMode fusion_mode = FusionMode::Spectral;
    double rope_base = 10000.0;

    /// Context for a target grid: scale from target/base and a minimum-overlap layout of
    /// base-sized patches (or disjoint tiles when `tiles` is set).
    static BranchContext for_grid(std::size_t target_h, std::size_t target_w, std::size_t base_h,
                                  std::size_t base_w, bool tiles = false);
};

/// softmax(Q K^T / sqrt(d_k)) V per head over the flattened token sequence.
TokenGrid attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                    std::size_t num_heads);

/// Project, rotate Q and K by `field`, attend over all tokens, project with W_O.
/// `x` is (tokens x model_dim).
RowMatrix rotary_self_attention(const RowMatrix& x, const AttentionWeights& w,
                                const RotaryField& field);

PositionGrid global_positions(std::size_t rows, std::size_t cols, const ScaleFactors& scale,
                              GlobalPE pe);

/// Full attention over the whole grid with rectified (by default) positional indices.
TokenGrid global_branch(const TokenGrid& x, const AttentionWeights& w, const ScaleFactors& scale,
                        GlobalPE pe = GlobalPE::Scaled, double rope_base = 10000.0);

/// Per-window attention with patch-local integer positions; outputs are not spliced.
std::vector<TokenGrid> local_patch_outputs(const TokenGrid& x, const AttentionWeights& w,
                                           const PatchLayout& layout, double rope_base = 10000.0);

TokenGrid local_branch(const TokenGrid& x, const AttentionWeights& w, const PatchLayout& layout,
                       const SpliceConfig& splice_cfg, SpliceMode splice_mode = SpliceMode::Gaussian,
                       double rope_base = 10000.0);

/// Global, Local, or both branches combined patch-wise in the frequency domain.
TokenGrid resdit_attention(const TokenGrid& x, const AttentionWeights& w, BranchMode mode,
                           const BranchContext& ctx);

/// Splices per-window outputs according to the context's splice mode.
TokenGrid splice_with(std::span<const TokenGrid> patches, const BranchContext& ctx);

/// Combines aligned global/local patches per the context's fusion mode and splices the result.
TokenGrid fuse_branches(const TokenGrid& global_out, std::span<const TokenGrid> local_patches,
                        const BranchContext& ctx);

}  // namespace resdit
