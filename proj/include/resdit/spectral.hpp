#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "resdit/grid.hpp"
#include "resdit/partition.hpp"

namespace resdit {

/// Raised when an inverse transform leaves a non-negligible imaginary part, which
/// means the spectrum was not conjugate-symmetric (e.g. an asymmetric mask).
class ConsistencyError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Per-channel 2D spectrum in DC-centered order: index i along an axis of length n holds
/// the integer frequency u = i - n/2 (integer division), so DC sits at (rows/2, cols/2).
/// Layout: [freq_row][freq_col][channel].
struct Spectrum {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t channels = 0;
    std::vector<std::complex<double>> data;

    std::complex<double>& at(std::size_t u, std::size_t v, std::size_t ch) {
        return data[(u * cols + v) * channels + ch];
    }
    const std::complex<double>& at(std::size_t u, std::size_t v, std::size_t ch) const {
        return data[(u * cols + v) * channels + ch];
    }
};

/// Signed frequency stored at centered index i of an axis of length n.
inline long centered_frequency(std::size_t i, std::size_t n) {
    return static_cast<long>(i) - static_cast<long>(n / 2);
}

enum class MaskShape { Radial, Rectangular };

struct SpectralMask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double cutoff = 0.2;
    std::vector<std::uint8_t> values;  // row-major over centered frequencies

    std::uint8_t at(std::size_t u, std::size_t v) const { return values[u * cols + v]; }
    std::size_t count_ones() const;
};

struct FusionConfig {
    double cutoff = 0.2;
    MaskShape shape = MaskShape::Radial;

    void validate() const;
};

Spectrum fft2(const TokenGrid& patch);

/// Inverse of fft2. Throws ConsistencyError if the imaginary residue exceeds
/// 1e-5 of the real part's norm.
TokenGrid ifft2(const Spectrum& spec);

/// Radial: M(u, v) = 1 iff (u/(rows/2))^2 + (v/(cols/2))^2 <= cutoff^2.
/// Rectangular: |u|/(rows/2) <= cutoff and |v|/(cols/2) <= cutoff.
SpectralMask lowpass_mask(std::size_t rows, std::size_t cols, double cutoff,
                          MaskShape shape = MaskShape::Radial);

/// ifft2(M * fft2(global) + (1 - M) * fft2(local)).
TokenGrid fuse_patch(const TokenGrid& global_patch, const TokenGrid& local_patch,
                     const SpectralMask& mask);

/// Low band of each global-branch patch plus high band of the aligned local patch,
/// Gaussian-spliced back onto the full grid.
TokenGrid spectral_fusion(const TokenGrid& global_grid, std::span<const TokenGrid> local_patches,
                          const PatchLayout& layout, const FusionConfig& cfg,
                          const SpliceConfig& splice_cfg);

/// Sum of |x|^2 over all entries.
double energy(const TokenGrid& grid);
double energy(const Spectrum& spec);

}  // namespace resdit
