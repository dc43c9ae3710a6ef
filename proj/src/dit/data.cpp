#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "resdit/dit.hpp"

namespace resdit {

namespace {

struct Placement {
    double row, col, radius;
};

Placement draw_placement(std::mt19937_64& rng, std::size_t h_px, std::size_t w_px) {
    if (h_px < 8 || w_px < 8) {
        throw std::invalid_argument("synthetic images need both sides >= 8 pixels");
    }
    const double h = static_cast<double>(h_px), w = static_cast<double>(w_px);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Placement p{};
    p.row = h * (0.2 + 0.6 * unit(rng));
    p.col = w * (0.2 + 0.6 * unit(rng));
    p.radius = std::min(h, w) * (0.15 + 0.10 * unit(rng));
    return p;
}

// Coverage approximated by clamping signed distance; pixel (i, j) is centered at (i+0.5, j+0.5).
template <typename Profile>
DiskSample render(const Placement& p, std::size_t h_px, std::size_t w_px, Profile profile) {
    DiskSample s{TokenGrid(h_px, w_px, 1, 0.0), p.row, p.col, p.radius};
    for (std::size_t i = 0; i < h_px; ++i) {
        for (std::size_t j = 0; j < w_px; ++j) {
            const double d = std::hypot(i + 0.5 - p.row, j + 0.5 - p.col);
            s.image.at(i, j, 0) = std::clamp(profile(d) + 0.5, 0.0, 1.0);
        }
    }
    return s;
}

}  // namespace

DiskSample synth_disk(std::mt19937_64& rng, std::size_t h_px, std::size_t w_px) {
    const auto p = draw_placement(rng, h_px, w_px);
    return render(p, h_px, w_px, [&](double d) { return p.radius - d; });
}

DiskSample synth_ring(std::mt19937_64& rng, std::size_t h_px, std::size_t w_px) {
    const auto p = draw_placement(rng, h_px, w_px);
    const double half_width = 0.175 * p.radius;
    return render(p, h_px, w_px, [&](double d) { return half_width - std::abs(d - p.radius); });
}

double seam_energy(const TokenGrid& image, const PatchLayout& layout, std::size_t patch_px) {
    if (image.height() != layout.grid_h * patch_px || image.width() != layout.grid_w * patch_px) {
        throw std::invalid_argument("seam_energy: layout does not match the image");
    }
    const auto rows = boundary_lines(layout.row_starts, layout.patch_h, layout.grid_h);
    const auto cols = boundary_lines(layout.col_starts, layout.patch_w, layout.grid_w);
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t line : rows) {
        const std::size_t r = line * patch_px;
        for (std::size_t c = 0; c < image.width(); ++c) {
            for (std::size_t ch = 0; ch < image.channels(); ++ch) {
                const double d = image.at(r, c, ch) - image.at(r - 1, c, ch);
                sum += d * d;
                ++count;
            }
        }
    }
    for (std::size_t line : cols) {
        const std::size_t c = line * patch_px;
        for (std::size_t r = 0; r < image.height(); ++r) {
            for (std::size_t ch = 0; ch < image.channels(); ++ch) {
                const double d = image.at(r, c, ch) - image.at(r, c - 1, ch);
                sum += d * d;
                ++count;
            }
        }
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

DiskStats disk_stats(const TokenGrid& image, const PatchLayout* layout, std::size_t patch_px) {
    if (image.channels() != 1) {
        throw std::invalid_argument("disk_stats: grayscale image required");
    }
    DiskStats stats;
    double mass = 0.0, row_moment = 0.0, col_moment = 0.0;
    std::size_t above = 0;
    for (std::size_t i = 0; i < image.height(); ++i) {
        for (std::size_t j = 0; j < image.width(); ++j) {
            const double v = image.at(i, j, 0);
            if (v > 0.5) ++above;
            mass += v;
            row_moment += v * (i + 0.5);
            col_moment += v * (j + 0.5);
        }
    }
    stats.area_fraction = static_cast<double>(above) / static_cast<double>(image.tokens());
    if (mass > 0.0) {
        stats.centroid_row = row_moment / mass / static_cast<double>(image.height());
        stats.centroid_col = col_moment / mass / static_cast<double>(image.width());
    }
    if (layout != nullptr) {
        stats.seam_energy = seam_energy(image, *layout, patch_px);
    }
    return stats;
}

}  // namespace resdit
