#include "resdit/spectral.hpp"

#include <cmath>
#include <map>
#include <string>
#include <tuple>

#include <fftw3.h>

namespace resdit {

namespace {

// Plans are cached per (rows, cols, channels, direction). FFTW's planner is not
// thread-safe; callers transform from one thread.
class PlanCache {
public:
    ~PlanCache() {
        for (auto& [key, plan] : plans_) {
            fftw_destroy_plan(plan);
        }
    }

    fftw_plan get(std::size_t rows, std::size_t cols, std::size_t channels, int sign) {
        const auto key = std::make_tuple(rows, cols, channels, sign);
        if (auto it = plans_.find(key); it != plans_.end()) {
            return it->second;
        }
        const int n[2] = {static_cast<int>(rows), static_cast<int>(cols)};
        const int howmany = static_cast<int>(channels);
        std::vector<std::complex<double>> scratch(rows * cols * channels);
        auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
        fftw_plan plan = fftw_plan_many_dft(2, n, howmany, buf, nullptr, howmany, 1, buf, nullptr,
                                            howmany, 1, sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (plan == nullptr) {
            throw std::runtime_error("fftw: failed to create plan");
        }
        plans_.emplace(key, plan);
        return plan;
    }

private:
    std::map<std::tuple<std::size_t, std::size_t, std::size_t, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
    static PlanCache cache;
    return cache;
}

void transform(std::vector<std::complex<double>>& buf, std::size_t rows, std::size_t cols,
               std::size_t channels, int sign) {
    auto* p = reinterpret_cast<fftw_complex*>(buf.data());
    fftw_execute_dft(plan_cache().get(rows, cols, channels, sign), p, p);
}

// natural (FFT output) index for centered index i
std::size_t natural_index(std::size_t i, std::size_t n) { return (i + n - n / 2) % n; }

}  // namespace

std::size_t SpectralMask::count_ones() const {
    std::size_t ones = 0;
    for (auto v : values) ones += v;
    return ones;
}

void FusionConfig::validate() const {
    if (!(cutoff > 0.0 && cutoff <= 1.0)) {
        throw std::invalid_argument("FusionConfig: cutoff must lie in (0, 1]");
    }
}

Spectrum fft2(const TokenGrid& patch) {
    if (patch.empty()) {
        throw std::invalid_argument("fft2: empty patch");
    }
    const std::size_t rows = patch.height(), cols = patch.width(), ch = patch.channels();
    std::vector<std::complex<double>> buf(patch.size());
    for (std::size_t i = 0; i < patch.size(); ++i) {
        buf[i] = patch.data()[i];
    }
    transform(buf, rows, cols, ch, FFTW_FORWARD);

    Spectrum spec{rows, cols, ch, std::vector<std::complex<double>>(buf.size())};
    for (std::size_t u = 0; u < rows; ++u) {
        const std::size_t nu = natural_index(u, rows);
        for (std::size_t v = 0; v < cols; ++v) {
            const std::size_t nv = natural_index(v, cols);
            for (std::size_t c = 0; c < ch; ++c) {
                spec.at(u, v, c) = buf[(nu * cols + nv) * ch + c];
            }
        }
    }
    return spec;
}

TokenGrid ifft2(const Spectrum& spec) {
    if (spec.rows == 0 || spec.cols == 0 || spec.channels == 0 ||
        spec.data.size() != spec.rows * spec.cols * spec.channels) {
        throw std::invalid_argument("ifft2: malformed spectrum");
    }
    const std::size_t rows = spec.rows, cols = spec.cols, ch = spec.channels;
    std::vector<std::complex<double>> buf(spec.data.size());
    for (std::size_t u = 0; u < rows; ++u) {
        const std::size_t nu = natural_index(u, rows);
        for (std::size_t v = 0; v < cols; ++v) {
            const std::size_t nv = natural_index(v, cols);
            for (std::size_t c = 0; c < ch; ++c) {
                buf[(nu * cols + nv) * ch + c] = spec.at(u, v, c);
            }
        }
    }
    transform(buf, rows, cols, ch, FFTW_BACKWARD);

    const double scale = 1.0 / static_cast<double>(rows * cols);
    TokenGrid out(rows, cols, ch);
    double real_sq = 0.0, imag_sq = 0.0;
    for (std::size_t i = 0; i < buf.size(); ++i) {
        const double re = buf[i].real() * scale;
        const double im = buf[i].imag() * scale;
        out.data()[i] = re;
        real_sq += re * re;
        imag_sq += im * im;
    }
    if (std::sqrt(imag_sq) > 1e-5 * std::sqrt(real_sq) + 1e-12) {
        throw ConsistencyError("ifft2: imaginary residue " + std::to_string(std::sqrt(imag_sq)) +
                               " exceeds tolerance (spectrum not conjugate-symmetric)");
    }
    return out;
}

SpectralMask lowpass_mask(std::size_t rows, std::size_t cols, double cutoff, MaskShape shape) {
    if (rows == 0 || cols == 0) {
        throw std::invalid_argument("lowpass_mask: dimensions must be >= 1");
    }
    FusionConfig{cutoff, shape}.validate();
    SpectralMask mask{rows, cols, cutoff, std::vector<std::uint8_t>(rows * cols, 0)};
    const double u_max = rows / 2.0;
    const double v_max = cols / 2.0;
    for (std::size_t i = 0; i < rows; ++i) {
        const double fu = static_cast<double>(centered_frequency(i, rows)) / u_max;
        for (std::size_t j = 0; j < cols; ++j) {
            const double fv = static_cast<double>(centered_frequency(j, cols)) / v_max;
            const bool pass = shape == MaskShape::Radial
                                  ? fu * fu + fv * fv <= cutoff * cutoff
                                  : std::abs(fu) <= cutoff && std::abs(fv) <= cutoff;
            mask.values[i * cols + j] = pass ? 1 : 0;
        }
    }
    return mask;
}

TokenGrid fuse_patch(const TokenGrid& global_patch, const TokenGrid& local_patch,
                     const SpectralMask& mask) {
    if (!global_patch.same_shape(local_patch)) {
        throw std::invalid_argument("fuse_patch: global and local patches differ in shape");
    }
    if (mask.rows != global_patch.height() || mask.cols != global_patch.width()) {
        throw std::invalid_argument("fuse_patch: mask shape does not match patch");
    }
    const Spectrum g = fft2(global_patch);
    Spectrum fused = fft2(local_patch);
    for (std::size_t u = 0; u < fused.rows; ++u) {
        for (std::size_t v = 0; v < fused.cols; ++v) {
            if (mask.at(u, v) == 0) continue;
            for (std::size_t c = 0; c < fused.channels; ++c) {
                fused.at(u, v, c) = g.at(u, v, c);
            }
        }
    }
    return ifft2(fused);
}

TokenGrid spectral_fusion(const TokenGrid& global_grid, std::span<const TokenGrid> local_patches,
                          const PatchLayout& layout, const FusionConfig& cfg,
                          const SpliceConfig& splice_cfg) {
    cfg.validate();
    if (local_patches.size() != layout.size()) {
        throw std::invalid_argument("spectral_fusion: local patches do not align with layout");
    }
    const auto global_patches = extract_all(global_grid, layout);
    const auto mask = lowpass_mask(layout.patch_h, layout.patch_w, cfg.cutoff, cfg.shape);
    std::vector<TokenGrid> fused;
    fused.reserve(layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i) {
        fused.push_back(fuse_patch(global_patches[i], local_patches[i], mask));
    }
    return splice(fused, layout, splice_cfg);
}

double energy(const TokenGrid& grid) {
    double e = 0.0;
    for (double v : grid.data()) e += v * v;
    return e;
}

double energy(const Spectrum& spec) {
    double e = 0.0;
    for (const auto& z : spec.data) e += std::norm(z);
    return e;
}

}  // namespace resdit
