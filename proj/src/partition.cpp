#include "resdit/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace resdit {

namespace {

// round(k * span / (n - 1)) in exact integer arithmetic, halves rounded up.
std::vector<std::size_t> spaced_starts(std::size_t length, std::size_t patch, std::size_t n) {
    std::vector<std::size_t> starts(n, 0);
    if (n == 1) {
        return starts;
    }
    const std::size_t span = length - patch;
    const std::size_t denom = n - 1;
    for (std::size_t k = 0; k < n; ++k) {
        starts[k] = (2 * k * span + denom) / (2 * denom);
    }
    starts.back() = span;
    return starts;
}

void check_axis(std::size_t length, std::size_t patch) {
    if (length == 0 || patch == 0) {
        throw std::invalid_argument("axis length and patch size must be >= 1");
    }
    if (patch > length) {
        throw std::invalid_argument("patch size " + std::to_string(patch) +
                                    " exceeds axis length " + std::to_string(length));
    }
}

PatchLayout layout_from_starts(std::size_t grid_h, std::size_t grid_w, std::size_t patch_h,
                               std::size_t patch_w, std::vector<std::size_t> rows,
                               std::vector<std::size_t> cols) {
    PatchLayout layout;
    layout.grid_h = grid_h;
    layout.grid_w = grid_w;
    layout.patch_h = patch_h;
    layout.patch_w = patch_w;
    layout.n_rows = rows.size();
    layout.n_cols = cols.size();
    layout.row_starts = std::move(rows);
    layout.col_starts = std::move(cols);
    for (std::size_t r : layout.row_starts) {
        for (std::size_t c : layout.col_starts) {
            layout.windows.push_back(Window{r, c, patch_h, patch_w});
            layout.centers.push_back(Coord{static_cast<double>(r) + (patch_h - 1) / 2.0,
                                           static_cast<double>(c) + (patch_w - 1) / 2.0});
        }
    }
    return layout;
}

void check_patches(std::span<const TokenGrid> patches, const PatchLayout& layout) {
    if (patches.size() != layout.size() || patches.empty()) {
        throw std::invalid_argument("splice: expected " + std::to_string(layout.size()) +
                                    " patches, got " + std::to_string(patches.size()));
    }
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto& win = layout.windows[i];
        if (patches[i].height() != win.height || patches[i].width() != win.width ||
            patches[i].channels() != patches[0].channels()) {
            throw std::invalid_argument("splice: patch " + std::to_string(i) +
                                        " does not match its window");
        }
    }
}

}  // namespace

SpliceConfig SpliceConfig::for_patch(std::size_t patch_h, std::size_t patch_w) {
    return SpliceConfig{patch_h / 2.0, patch_w / 2.0};
}

void SpliceConfig::validate() const {
    if (!(sigma_rows > 0.0) || !(sigma_cols > 0.0) || !std::isfinite(sigma_rows) ||
        !std::isfinite(sigma_cols)) {
        throw std::invalid_argument("SpliceConfig: sigmas must be finite and > 0");
    }
}

std::size_t min_n(std::size_t length, std::size_t patch) {
    check_axis(length, patch);
    if (length == patch) {
        return 1;
    }
    return length / patch + 1;
}

std::vector<std::size_t> axis_starts(std::size_t length, std::size_t patch, std::size_t n) {
    check_axis(length, patch);
    if (n == 0) {
        throw std::invalid_argument("axis_starts: n must be >= 1");
    }
    if (length > patch && n * patch <= length) {
        throw std::invalid_argument("axis_starts: n = " + std::to_string(n) + " patches of " +
                                    std::to_string(patch) + " cannot overlap-cover length " +
                                    std::to_string(length));
    }
    return spaced_starts(length, patch, n);
}

PatchLayout make_layout(std::size_t grid_h, std::size_t grid_w, std::size_t patch_h,
                        std::size_t patch_w, std::optional<std::size_t> n_rows,
                        std::optional<std::size_t> n_cols) {
    const std::size_t nr = n_rows.value_or(min_n(grid_h, patch_h));
    const std::size_t nc = n_cols.value_or(min_n(grid_w, patch_w));
    return layout_from_starts(grid_h, grid_w, patch_h, patch_w, axis_starts(grid_h, patch_h, nr),
                              axis_starts(grid_w, patch_w, nc));
}

PatchLayout make_tiled_layout(std::size_t grid_h, std::size_t grid_w, std::size_t patch_h,
                              std::size_t patch_w) {
    check_axis(grid_h, patch_h);
    check_axis(grid_w, patch_w);
    const std::size_t nr = (grid_h + patch_h - 1) / patch_h;
    const std::size_t nc = (grid_w + patch_w - 1) / patch_w;
    return layout_from_starts(grid_h, grid_w, patch_h, patch_w,
                              spaced_starts(grid_h, patch_h, nr),
                              spaced_starts(grid_w, patch_w, nc));
}

double gaussian_weight(const Coord& p, const Coord& center, const SpliceConfig& cfg) {
    const double dr = (p[0] - center[0]) / cfg.sigma_rows;
    const double dc = (p[1] - center[1]) / cfg.sigma_cols;
    return std::exp(-0.5 * (dr * dr + dc * dc));
}

std::vector<TokenGrid> extract_all(const TokenGrid& grid, const PatchLayout& layout) {
    if (grid.height() != layout.grid_h || grid.width() != layout.grid_w) {
        throw std::invalid_argument("extract_all: grid does not match layout");
    }
    std::vector<TokenGrid> patches;
    patches.reserve(layout.size());
    for (const auto& win : layout.windows) {
        patches.push_back(extract_patch(grid, win));
    }
    return patches;
}

TokenGrid splice(std::span<const TokenGrid> patches, const PatchLayout& layout,
                 const SpliceConfig& cfg) {
    cfg.validate();
    check_patches(patches, layout);

    std::vector<std::vector<double>> weights(layout.size());
    TokenGrid denom(layout.grid_h, layout.grid_w, 1, 0.0);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& win = layout.windows[i];
        weights[i].resize(win.height * win.width);
        for (std::size_t r = 0; r < win.height; ++r) {
            for (std::size_t c = 0; c < win.width; ++c) {
                const Coord p{static_cast<double>(win.row_start + r),
                              static_cast<double>(win.col_start + c)};
                const double w = gaussian_weight(p, layout.centers[i], cfg);
                weights[i][r * win.width + c] = w;
                denom.at(win.row_start + r, win.col_start + c, 0) += w;
            }
        }
    }

    // Normalizing before accumulation keeps singly-covered tokens exact (w / w == 1).
    TokenGrid out(layout.grid_h, layout.grid_w, patches[0].channels(), 0.0);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& win = layout.windows[i];
        for (std::size_t r = 0; r < win.height; ++r) {
            for (std::size_t c = 0; c < win.width; ++c) {
                weights[i][r * win.width + c] /= denom.at(win.row_start + r, win.col_start + c, 0);
            }
        }
        accumulate_patch(out, win, patches[i], weights[i]);
    }
    return out;
}

TokenGrid splice_hard(std::span<const TokenGrid> patches, const PatchLayout& layout) {
    check_patches(patches, layout);
    TokenGrid out(layout.grid_h, layout.grid_w, patches[0].channels(), 0.0);
    std::vector<double> best(layout.grid_h * layout.grid_w, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> owner(layout.grid_h * layout.grid_w, 0);
    for (std::size_t i = 0; i < layout.size(); ++i) {
        const auto& win = layout.windows[i];
        for (std::size_t r = win.row_start; r < win.row_end(); ++r) {
            for (std::size_t c = win.col_start; c < win.col_end(); ++c) {
                const double dr = static_cast<double>(r) - layout.centers[i][0];
                const double dc = static_cast<double>(c) - layout.centers[i][1];
                const double d2 = dr * dr + dc * dc;
                if (d2 < best[r * layout.grid_w + c]) {
                    best[r * layout.grid_w + c] = d2;
                    owner[r * layout.grid_w + c] = i;
                }
            }
        }
    }
    for (std::size_t r = 0; r < layout.grid_h; ++r) {
        for (std::size_t c = 0; c < layout.grid_w; ++c) {
            const std::size_t i = owner[r * layout.grid_w + c];
            const auto& win = layout.windows[i];
            auto src = patches[i].token(r - win.row_start, c - win.col_start);
            std::copy(src.begin(), src.end(), out.token(r, c).begin());
        }
    }
    return out;
}

std::vector<std::size_t> boundary_lines(const std::vector<std::size_t>& starts, std::size_t patch,
                                        std::size_t length) {
    std::vector<std::size_t> lines;
    for (std::size_t s : starts) {
        if (s > 0) lines.push_back(s);
        if (s + patch < length) lines.push_back(s + patch);
    }
    std::sort(lines.begin(), lines.end());
    lines.erase(std::unique(lines.begin(), lines.end()), lines.end());
    return lines;
}

}  // namespace resdit
