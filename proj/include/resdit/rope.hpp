#pragma once

#include <cstddef>
#include <vector>

#include "resdit/grid.hpp"

namespace resdit {

/// Per-token (possibly fractional) 2D position indices, row-major over the token grid.
struct PositionGrid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> pos_h;
    std::vector<double> pos_w;

    double row_pos(std::size_t r, std::size_t c) const { return pos_h[r * cols + c]; }
    double col_pos(std::size_t r, std::size_t c) const { return pos_w[r * cols + c]; }

    friend bool operator==(const PositionGrid&, const PositionGrid&) = default;
};

/// Ratio between the inference grid and the training grid along each axis.
struct ScaleFactors {
    double s_h = 1.0;
    double s_w = 1.0;
    std::size_t base_h = 1;
    std::size_t base_w = 1;

    static ScaleFactors from_dims(std::size_t target_h, std::size_t target_w, std::size_t base_h,
                                  std::size_t base_w);
};

/// Indices r / s_h, c / s_w that squeeze a target_h x target_w grid into the
/// training range [0, base_h) x [0, base_w).
PositionGrid scaled_indices(std::size_t target_h, std::size_t target_w, std::size_t base_h,
                            std::size_t base_w);

/// Plain integer indices 0..h-1 x 0..w-1. Every patch of the same size gets the same grid.
PositionGrid patchwise_indices(std::size_t patch_h, std::size_t patch_w);

/// Integer indices continued past the training range (no rectification).
PositionGrid vanilla_indices(std::size_t rows, std::size_t cols);

/// Base-resolution integer indices repeated across the canvas: (r mod tile_h, c mod tile_w).
PositionGrid tiled_indices(std::size_t rows, std::size_t cols, std::size_t tile_h,
                           std::size_t tile_w);

/// Adds `delta` to every row and column index.
PositionGrid shifted(const PositionGrid& pos, double delta_h, double delta_w);

/// Cos/sin tables for axial 2D RoPE. The first head_dim/2 channels are rotated by the
/// row position and the remaining head_dim/2 by the column position; each axis uses
/// head_dim/4 frequencies base^(-4j/head_dim).
/// Table layout: [token][axis][frequency].
struct RotaryField {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t head_dim = 0;
    double base = 10000.0;
    std::vector<double> cos;
    std::vector<double> sin;

    std::size_t freqs_per_axis() const { return head_dim / 4; }
    std::size_t offset(std::size_t token, std::size_t axis, std::size_t freq) const {
        return (token * 2 + axis) * freqs_per_axis() + freq;
    }
};

RotaryField rotary_field(const PositionGrid& pos, std::size_t head_dim, double base = 10000.0);

/// Rotates each channel pair (2k, 2k+1) of every token by its axis/frequency angle.
TokenGrid apply_rotary(const TokenGrid& vectors, const RotaryField& field);

/// In-place rotation of a row-major (tokens x num_heads*head_dim) buffer, each head
/// sharing the same field. `inverse` rotates by the negated angles (the transpose).
void rotate_heads(double* data, std::size_t tokens, std::size_t num_heads,
                  const RotaryField& field, bool inverse = false);

}  // namespace resdit
