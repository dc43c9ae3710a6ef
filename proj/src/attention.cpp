#include "resdit/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace resdit {

namespace {

void softmax_rows(RowMatrix& s) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        auto row = s.row(i).array();
        row = (row - row.maxCoeff()).exp();
        row /= row.sum();
    }
}

// Multi-head scaled dot-product attention on already-projected (and rotated) Q, K, V.
RowMatrix multi_head(const RowMatrix& q, const RowMatrix& k, const RowMatrix& v,
                     std::size_t num_heads) {
    const Eigen::Index d = q.cols() / static_cast<Eigen::Index>(num_heads);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    RowMatrix out(q.rows(), q.cols());
    RowMatrix scores;
    for (Eigen::Index h = 0; h < static_cast<Eigen::Index>(num_heads); ++h) {
        scores.noalias() = q.middleCols(h * d, d) * k.middleCols(h * d, d).transpose();
        scores *= inv_sqrt_d;
        softmax_rows(scores);
        out.middleCols(h * d, d).noalias() = scores * v.middleCols(h * d, d);
    }
    return out;
}

}  // namespace

void AttentionWeights::validate() const {
    const auto dim = w_q.rows();
    if (num_heads == 0 || dim == 0 || static_cast<std::size_t>(dim) % num_heads != 0) {
        throw std::invalid_argument("AttentionWeights: model_dim must be a multiple of num_heads");
    }
    if (head_dim() % 4 != 0) {
        throw std::invalid_argument("AttentionWeights: head_dim must be a multiple of 4");
    }
    for (const RowMatrix* m : {&w_q, &w_k, &w_v, &w_o}) {
        if (m->rows() != dim || m->cols() != dim) {
            throw std::invalid_argument("AttentionWeights: projections must be model_dim square");
        }
        if (!m->allFinite()) {
            throw std::invalid_argument("AttentionWeights: non-finite entry");
        }
    }
}

AttentionWeights AttentionWeights::random(std::size_t model_dim, std::size_t num_heads,
                                          std::mt19937_64& rng, double stddev) {
    std::normal_distribution<double> normal(0.0, stddev);
    const auto n = static_cast<Eigen::Index>(model_dim);
    auto draw = [&] {
        RowMatrix m(n, n);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
        return m;
    };
    AttentionWeights w;
    w.num_heads = num_heads;
    w.w_q = draw();
    w.w_k = draw();
    w.w_v = draw();
    w.w_o = draw();
    w.validate();
    return w;
}

std::string_view to_string(BranchMode mode) {
    switch (mode) {
        case BranchMode::Global: return "global";
        case BranchMode::Local: return "local";
        case BranchMode::Fused: return "fused";
    }
    return "?";
}

BranchMode branch_mode_from_string(std::string_view name) {
    if (name == "global") return BranchMode::Global;
    if (name == "local") return BranchMode::Local;
    if (name == "fused") return BranchMode::Fused;
    throw std::invalid_argument("unknown branch mode '" + std::string(name) + "'");
}

BranchContext BranchContext::for_grid(std::size_t target_h, std::size_t target_w,
                                      std::size_t base_h, std::size_t base_w, bool tiles) {
    BranchContext ctx;
    ctx.scale = ScaleFactors::from_dims(target_h, target_w, base_h, base_w);
    ctx.layout = tiles ? make_tiled_layout(target_h, target_w, base_h, base_w)
                       : make_layout(target_h, target_w, base_h, base_w);
    ctx.splice = SpliceConfig::for_patch(base_h, base_w);
    return ctx;
}

TokenGrid attention(const TokenGrid& q, const TokenGrid& k, const TokenGrid& v,
                    std::size_t num_heads) {
    if (!q.same_shape(k) || !q.same_shape(v)) {
        throw std::invalid_argument("attention: q, k, v must share one shape");
    }
    if (num_heads == 0 || q.channels() % num_heads != 0) {
        throw std::invalid_argument("attention: channels must be divisible by num_heads");
    }
    const RowMatrix out = multi_head(as_matrix(q), as_matrix(k), as_matrix(v), num_heads);
    return to_grid(out, q.height(), q.width());
}

RowMatrix rotary_self_attention(const RowMatrix& x, const AttentionWeights& w,
                                const RotaryField& field) {
    if (static_cast<std::size_t>(x.cols()) != w.model_dim()) {
        throw std::invalid_argument("attention input width " + std::to_string(x.cols()) +
                                    " != model_dim " + std::to_string(w.model_dim()));
    }
    if (field.head_dim != w.head_dim() ||
        field.rows * field.cols != static_cast<std::size_t>(x.rows())) {
        throw std::invalid_argument("rotary field does not match attention input");
    }
    RowMatrix q = x * w.w_q;
    RowMatrix k = x * w.w_k;
    const RowMatrix v = x * w.w_v;
    rotate_heads(q.data(), static_cast<std::size_t>(q.rows()), w.num_heads, field);
    rotate_heads(k.data(), static_cast<std::size_t>(k.rows()), w.num_heads, field);
    return multi_head(q, k, v, w.num_heads) * w.w_o;
}

PositionGrid global_positions(std::size_t rows, std::size_t cols, const ScaleFactors& scale,
                              GlobalPE pe) {
    switch (pe) {
        case GlobalPE::Scaled: {
            const auto expected = ScaleFactors::from_dims(rows, cols, scale.base_h, scale.base_w);
            if (expected.s_h != scale.s_h || expected.s_w != scale.s_w) {
                throw std::invalid_argument("global_branch: scale factors do not match the grid");
            }
            return scaled_indices(rows, cols, scale.base_h, scale.base_w);
        }
        case GlobalPE::Vanilla: return vanilla_indices(rows, cols);
        case GlobalPE::Tiled: return tiled_indices(rows, cols, scale.base_h, scale.base_w);
    }
    throw std::invalid_argument("global_branch: unknown positional mode");
}

TokenGrid global_branch(const TokenGrid& x, const AttentionWeights& w, const ScaleFactors& scale,
                        GlobalPE pe, double rope_base) {
    const auto field = rotary_field(global_positions(x.height(), x.width(), scale, pe),
                                    w.head_dim(), rope_base);
    const RowMatrix out = rotary_self_attention(as_matrix(x), w, field);
    return to_grid(out, x.height(), x.width());
}

std::vector<TokenGrid> local_patch_outputs(const TokenGrid& x, const AttentionWeights& w,
                                           const PatchLayout& layout, double rope_base) {
    if (x.height() != layout.grid_h || x.width() != layout.grid_w) {
        throw std::invalid_argument("local_branch: layout does not match the grid");
    }
    // Every window has the same size, hence the same positional field.
    const auto field = rotary_field(patchwise_indices(layout.patch_h, layout.patch_w),
                                    w.head_dim(), rope_base);
    std::vector<TokenGrid> outputs;
    outputs.reserve(layout.size());
    for (const auto& win : layout.windows) {
        const TokenGrid patch = extract_patch(x, win);
        outputs.push_back(
            to_grid(rotary_self_attention(as_matrix(patch), w, field), win.height, win.width));
    }
    return outputs;
}

TokenGrid local_branch(const TokenGrid& x, const AttentionWeights& w, const PatchLayout& layout,
                       const SpliceConfig& splice_cfg, SpliceMode splice_mode, double rope_base) {
    const auto outputs = local_patch_outputs(x, w, layout, rope_base);
    return splice_mode == SpliceMode::Gaussian ? splice(outputs, layout, splice_cfg)
                                               : splice_hard(outputs, layout);
}

TokenGrid splice_with(std::span<const TokenGrid> patches, const BranchContext& ctx) {
    return ctx.splice_mode == SpliceMode::Gaussian ? splice(patches, ctx.layout, ctx.splice)
                                                   : splice_hard(patches, ctx.layout);
}

TokenGrid fuse_branches(const TokenGrid& global_out, std::span<const TokenGrid> local_patches,
                        const BranchContext& ctx) {
    if (ctx.fusion_mode == FusionMode::Spectral && ctx.splice_mode == SpliceMode::Gaussian) {
        return spectral_fusion(global_out, local_patches, ctx.layout, ctx.fusion, ctx.splice);
    }
    if (local_patches.size() != ctx.layout.size()) {
        throw std::invalid_argument("fuse_branches: local patches do not align with layout");
    }
    const auto global_patches = extract_all(global_out, ctx.layout);
    std::vector<TokenGrid> fused;
    fused.reserve(global_patches.size());
    if (ctx.fusion_mode == FusionMode::Spectral) {
        ctx.fusion.validate();
        const auto mask =
            lowpass_mask(ctx.layout.patch_h, ctx.layout.patch_w, ctx.fusion.cutoff, ctx.fusion.shape);
        for (std::size_t i = 0; i < global_patches.size(); ++i) {
            fused.push_back(fuse_patch(global_patches[i], local_patches[i], mask));
        }
    } else {
        for (std::size_t i = 0; i < global_patches.size(); ++i) {
            if (!global_patches[i].same_shape(local_patches[i])) {
                throw std::invalid_argument("fuse_branches: patch shape mismatch");
            }
            TokenGrid avg = global_patches[i];
            as_matrix(avg) = 0.5 * (as_matrix(global_patches[i]) + as_matrix(local_patches[i]));
            fused.push_back(std::move(avg));
        }
    }
    return splice_with(fused, ctx);
}

TokenGrid resdit_attention(const TokenGrid& x, const AttentionWeights& w, BranchMode mode,
                           const BranchContext& ctx) {
    switch (mode) {
        case BranchMode::Global:
            return global_branch(x, w, ctx.scale, ctx.global_pe, ctx.rope_base);
        case BranchMode::Local:
            return splice_with(local_patch_outputs(x, w, ctx.layout, ctx.rope_base), ctx);
        case BranchMode::Fused: {
            const TokenGrid global_out = global_branch(x, w, ctx.scale, ctx.global_pe, ctx.rope_base);
            const auto local_out = local_patch_outputs(x, w, ctx.layout, ctx.rope_base);
            return fuse_branches(global_out, local_out, ctx);
        }
    }
    throw std::invalid_argument("resdit_attention: unknown branch mode");
}

}  // namespace resdit
