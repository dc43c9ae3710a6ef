#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "resdit/grid.hpp"

namespace resdit {

using Coord = std::array<double, 2>;  // (row, col)

/// Overlapping patch windows covering a grid, row-major over the n_rows x n_cols patch grid.
struct PatchLayout {
    std::size_t grid_h = 0;
    std::size_t grid_w = 0;
    std::size_t patch_h = 0;
    std::size_t patch_w = 0;
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<std::size_t> row_starts;
    std::vector<std::size_t> col_starts;
    std::vector<Window> windows;
    std::vector<Coord> centers;

    std::size_t size() const { return windows.size(); }
};

struct SpliceConfig {
    double sigma_rows = 1.0;
    double sigma_cols = 1.0;

    /// sigma = patch size / 2 on each axis.
    static SpliceConfig for_patch(std::size_t patch_h, std::size_t patch_w);
    void validate() const;
};

/// Smallest n with n * patch > length (1 when the patch spans the axis).
std::size_t min_n(std::size_t length, std::size_t patch);

/// Starts round(k (length - patch) / (n - 1)), k = 0..n-1, endpoints pinned to 0 and
/// length - patch. Requires n * patch > length whenever length > patch.
std::vector<std::size_t> axis_starts(std::size_t length, std::size_t patch, std::size_t n);

/// Cartesian product of per-axis minimum-overlap starts; n defaults to min_n per axis.
PatchLayout make_layout(std::size_t grid_h, std::size_t grid_w, std::size_t patch_h,
                        std::size_t patch_w, std::optional<std::size_t> n_rows = std::nullopt,
                        std::optional<std::size_t> n_cols = std::nullopt);

/// Fewest patches that cover each axis, ceil(length / patch). When the patch divides the
/// axis the windows are disjoint tiles.
PatchLayout make_tiled_layout(std::size_t grid_h, std::size_t grid_w, std::size_t patch_h,
                              std::size_t patch_w);

double gaussian_weight(const Coord& p, const Coord& center, const SpliceConfig& cfg);

std::vector<TokenGrid> extract_all(const TokenGrid& grid, const PatchLayout& layout);

/// Gaussian-weighted average of overlapping patches at every token.
TokenGrid splice(std::span<const TokenGrid> patches, const PatchLayout& layout,
                 const SpliceConfig& cfg);

/// Each token copies the covering patch whose center is nearest (first in layout order on ties).
TokenGrid splice_hard(std::span<const TokenGrid> patches, const PatchLayout& layout);

/// Interior window edges along one axis: every start > 0 and every end < length, sorted, unique.
std::vector<std::size_t> boundary_lines(const std::vector<std::size_t>& starts, std::size_t patch,
                                        std::size_t length);

}  // namespace resdit
