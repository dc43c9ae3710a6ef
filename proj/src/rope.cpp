#include "resdit/rope.hpp"

#include <cmath>
#include <stdexcept>

namespace resdit {

ScaleFactors ScaleFactors::from_dims(std::size_t target_h, std::size_t target_w,
                                     std::size_t base_h, std::size_t base_w) {
    if (target_h == 0 || target_w == 0 || base_h == 0 || base_w == 0) {
        throw std::invalid_argument("ScaleFactors: dimensions must be >= 1");
    }
    if (target_h < base_h || target_w < base_w) {
        throw std::invalid_argument("ScaleFactors: target smaller than base (downscaling unsupported)");
    }
    return ScaleFactors{static_cast<double>(target_h) / static_cast<double>(base_h),
                        static_cast<double>(target_w) / static_cast<double>(base_w), base_h,
                        base_w};
}

PositionGrid scaled_indices(std::size_t target_h, std::size_t target_w, std::size_t base_h,
                            std::size_t base_w) {
    const auto scale = ScaleFactors::from_dims(target_h, target_w, base_h, base_w);
    PositionGrid pos{target_h, target_w, {}, {}};
    pos.pos_h.resize(target_h * target_w);
    pos.pos_w.resize(target_h * target_w);
    for (std::size_t r = 0; r < target_h; ++r) {
        for (std::size_t c = 0; c < target_w; ++c) {
            pos.pos_h[r * target_w + c] = static_cast<double>(r) / scale.s_h;
            pos.pos_w[r * target_w + c] = static_cast<double>(c) / scale.s_w;
        }
    }
    return pos;
}

PositionGrid vanilla_indices(std::size_t rows, std::size_t cols) {
    return tiled_indices(rows, cols, rows, cols);
}

PositionGrid patchwise_indices(std::size_t patch_h, std::size_t patch_w) {
    return vanilla_indices(patch_h, patch_w);
}

PositionGrid tiled_indices(std::size_t rows, std::size_t cols, std::size_t tile_h,
                           std::size_t tile_w) {
    if (rows == 0 || cols == 0 || tile_h == 0 || tile_w == 0) {
        throw std::invalid_argument("position grid dimensions must be >= 1");
    }
    PositionGrid pos{rows, cols, {}, {}};
    pos.pos_h.resize(rows * cols);
    pos.pos_w.resize(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            pos.pos_h[r * cols + c] = static_cast<double>(r % tile_h);
            pos.pos_w[r * cols + c] = static_cast<double>(c % tile_w);
        }
    }
    return pos;
}

PositionGrid shifted(const PositionGrid& pos, double delta_h, double delta_w) {
    PositionGrid out = pos;
    for (auto& p : out.pos_h) p += delta_h;
    for (auto& p : out.pos_w) p += delta_w;
    return out;
}

RotaryField rotary_field(const PositionGrid& pos, std::size_t head_dim, double base) {
    if (head_dim == 0 || head_dim % 4 != 0) {
        throw std::invalid_argument("rotary_field: head_dim must be a positive multiple of 4");
    }
    if (!(base > 1.0) || !std::isfinite(base)) {
        throw std::invalid_argument("rotary_field: frequency base must be > 1");
    }
    if (pos.pos_h.size() != pos.rows * pos.cols || pos.pos_w.size() != pos.rows * pos.cols) {
        throw std::invalid_argument("rotary_field: malformed position grid");
    }
    RotaryField field{pos.rows, pos.cols, head_dim, base, {}, {}};
    const std::size_t nf = field.freqs_per_axis();
    const std::size_t tokens = pos.rows * pos.cols;
    std::vector<double> inv_freq(nf);
    for (std::size_t j = 0; j < nf; ++j) {
        inv_freq[j] = std::pow(base, -4.0 * static_cast<double>(j) / static_cast<double>(head_dim));
    }
    field.cos.resize(tokens * 2 * nf);
    field.sin.resize(tokens * 2 * nf);
    for (std::size_t t = 0; t < tokens; ++t) {
        const double p[2] = {pos.pos_h[t], pos.pos_w[t]};
        for (std::size_t axis = 0; axis < 2; ++axis) {
            for (std::size_t j = 0; j < nf; ++j) {
                const double angle = p[axis] * inv_freq[j];
                field.cos[field.offset(t, axis, j)] = std::cos(angle);
                field.sin[field.offset(t, axis, j)] = std::sin(angle);
            }
        }
    }
    return field;
}

void rotate_heads(double* data, std::size_t tokens, std::size_t num_heads,
                  const RotaryField& field, bool inverse) {
    const std::size_t head_dim = field.head_dim;
    const std::size_t nf = field.freqs_per_axis();
    const std::size_t stride = num_heads * head_dim;
    const double sign = inverse ? -1.0 : 1.0;
    for (std::size_t t = 0; t < tokens; ++t) {
        for (std::size_t h = 0; h < num_heads; ++h) {
            double* v = data + t * stride + h * head_dim;
            // pair k in [0, head_dim/2): axis = k / nf, freq = k % nf
            for (std::size_t k = 0; k < head_dim / 2; ++k) {
                const std::size_t at = field.offset(t, k / nf, k % nf);
                const double c = field.cos[at];
                const double s = sign * field.sin[at];
                const double x0 = v[2 * k];
                const double x1 = v[2 * k + 1];
                v[2 * k] = x0 * c - x1 * s;
                v[2 * k + 1] = x0 * s + x1 * c;
            }
        }
    }
}

TokenGrid apply_rotary(const TokenGrid& vectors, const RotaryField& field) {
    if (vectors.channels() != field.head_dim || vectors.height() != field.rows ||
        vectors.width() != field.cols) {
        throw std::invalid_argument("apply_rotary: vectors do not match the rotary field");
    }
    TokenGrid out = vectors;
    rotate_heads(out.data().data(), out.tokens(), 1, field);
    return out;
}

}  // namespace resdit
