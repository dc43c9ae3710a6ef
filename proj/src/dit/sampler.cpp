#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "resdit/dit.hpp"

namespace resdit {

SamplerSchedule build_schedule(std::size_t total, std::size_t global_steps,
                               std::size_t local_steps) {
    if (total == 0) {
        throw std::invalid_argument("schedule: total steps must be >= 1");
    }
    if (global_steps + local_steps > total) {
        throw std::invalid_argument("schedule: global + local steps exceed the total");
    }
    SamplerSchedule schedule;
    schedule.modes.assign(global_steps, BranchMode::Global);
    schedule.modes.insert(schedule.modes.end(), total - global_steps - local_steps,
                          BranchMode::Fused);
    schedule.modes.insert(schedule.modes.end(), local_steps, BranchMode::Local);
    return schedule;
}

void GuidanceConfig::validate() const {
    if (!(scale >= 0.0) || !std::isfinite(scale)) {
        throw std::invalid_argument("guidance scale must be finite and >= 0");
    }
}

BranchContext make_context(const ModelConfig& cfg, std::size_t grid_h, std::size_t grid_w,
                           const SamplingOptions& opts) {
    BranchContext ctx;
    ctx.scale = ScaleFactors::from_dims(grid_h, grid_w, cfg.base_h, cfg.base_w);
    ctx.layout = opts.tiles ? make_tiled_layout(grid_h, grid_w, cfg.base_h, cfg.base_w)
                            : make_layout(grid_h, grid_w, cfg.base_h, cfg.base_w, opts.n_rows,
                                          opts.n_cols);
    ctx.splice = opts.splice.value_or(SpliceConfig::for_patch(cfg.base_h, cfg.base_w));
    ctx.splice.validate();
    ctx.fusion = opts.fusion;
    ctx.fusion.validate();
    ctx.global_pe = opts.global_pe;
    ctx.splice_mode = opts.splice_mode;
    ctx.fusion_mode = opts.fusion_mode;
    ctx.rope_base = cfg.rope_base;
    return ctx;
}

TokenGrid sample(const ToyDiT& model, const SamplerSchedule& schedule, std::size_t target_h_px,
                 std::size_t target_w_px, std::uint64_t seed, const GuidanceConfig& guidance,
                 const SamplingOptions& opts) {
    const auto& cfg = model.config();
    const std::size_t p = cfg.patch_px;
    if (target_h_px % p != 0 || target_w_px % p != 0) {
        throw std::invalid_argument("sample: target size must be divisible by the patch size");
    }
    if (target_h_px < cfg.base_h * p || target_w_px < cfg.base_w * p) {
        throw std::invalid_argument("sample: target size below the training resolution");
    }
    if (schedule.total() == 0) {
        throw std::invalid_argument("sample: empty schedule");
    }
    guidance.validate();
    if (guidance.enabled && cfg.num_classes == 0) {
        throw std::invalid_argument("sample: guidance requires a class-conditional model");
    }
    if (guidance.enabled &&
        (guidance.label < 0 || static_cast<std::size_t>(guidance.label) >= cfg.num_classes)) {
        throw std::invalid_argument("sample: guidance label out of range");
    }

    const std::size_t gh = target_h_px / p, gw = target_w_px / p;
    const BranchContext ctx = make_context(cfg, gh, gw, opts);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    TokenGrid x(gh, gw, cfg.patch_dim());
    for (double& v : x.data()) v = normal(rng);

    const double n = static_cast<double>(schedule.total());
    for (std::size_t i = 0; i < schedule.total(); ++i) {
        const double t = 1.0 - static_cast<double>(i) / n;
        const BranchMode mode = schedule.modes[i];
        TokenGrid v;
        if (guidance.enabled) {
            const TokenGrid v_cond = forward(model, x, t, mode, ctx, guidance.label);
            v = forward(model, x, t, mode, ctx, kUnconditional);
            as_matrix(v) += guidance.scale * (as_matrix(v_cond) - as_matrix(v));
        } else {
            v = forward(model, x, t, mode, ctx, kUnconditional);
        }
        as_matrix(x) -= (1.0 / n) * as_matrix(v);
        if (!all_finite(x)) {
            throw DivergenceError("sampling diverged at step " + std::to_string(i));
        }
    }

    TokenGrid image = unpatchify(x, p);
    for (double& v : image.data()) v = std::clamp(0.5 * (v + 1.0), 0.0, 1.0);
    return image;
}

}  // namespace resdit
