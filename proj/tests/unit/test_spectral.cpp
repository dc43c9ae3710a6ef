#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "random.hpp"
#include "resdit/partition.hpp"
#include "resdit/spectral.hpp"

using namespace resdit;
using testing_support::random_grid;
using testing_support::uniform_int;

namespace {

double rel_err(const TokenGrid& a, const TokenGrid& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
        den += b.data()[i] * b.data()[i];
    }
    return std::sqrt(num / std::max(den, 1e-300));
}

// Centered index holding the negated frequency (the Nyquist bin maps to itself).
std::size_t mirror(std::size_t i, std::size_t n) {
    const long f = -centered_frequency(i, n), len = static_cast<long>(n);
    return static_cast<std::size_t>(((f + len / 2) % len + len) % len);
}

SpectralMask constant_mask(std::size_t rows, std::size_t cols, std::uint8_t v) {
    return SpectralMask{rows, cols, 0.5, std::vector<std::uint8_t>(rows * cols, v)};
}

}  // namespace

TEST(Fft2, ConstantHasOnlyDc) {
    const Spectrum s = fft2(TokenGrid(6, 8, 1, 2.5));
    for (std::size_t u = 0; u < 6; ++u) {
        for (std::size_t v = 0; v < 8; ++v) {
            if (u == 3 && v == 4) {
                EXPECT_NEAR(s.at(u, v, 0).real(), 6 * 8 * 2.5, 1e-12);
                EXPECT_NEAR(s.at(u, v, 0).imag(), 0.0, 1e-12);
            } else {
                EXPECT_NEAR(std::abs(s.at(u, v, 0)), 0.0, 1e-12);
            }
        }
    }
}

TEST(Fft2, ImpulseIsFlat) {
    TokenGrid x(5, 4, 1);
    x.at(0, 0, 0) = 1.0;
    const Spectrum s = fft2(x);
    for (const auto& c : s.data) EXPECT_NEAR(std::abs(c), 1.0, 1e-12);
}

TEST(Fft2, MatchesNaiveDft) {
    std::mt19937_64 rng(1);
    for (auto [h, w] : {std::pair{8, 8}, {5, 7}, {1, 6}, {4, 1}}) {
        const TokenGrid x = random_grid(h, w, 3, rng);
        const Spectrum s = fft2(x);
        const auto ref = oracle::dft2(x);
        ASSERT_EQ(s.data.size(), ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_LE(std::abs(s.data[i] - ref[i]), 1e-10);
    }
}

TEST(Ifft2, RoundTrip) {
    std::mt19937_64 rng(2);
    const TokenGrid x = random_grid(8, 8, 2, rng);
    EXPECT_LE(rel_err(ifft2(fft2(x)), x), 1e-6);
}

TEST(Ifft2, DcOnlyIsConstant) {
    Spectrum s{4, 6, 1, std::vector<std::complex<double>>(24, 0.0)};
    s.at(2, 3, 0) = 4.0 * 6.0 * 0.75;
    const TokenGrid x = ifft2(s);
    for (double v : x.data()) EXPECT_NEAR(v, 0.75, 1e-12);
}

TEST(Ifft2, AsymmetricSpectrumRejected) {
    Spectrum s{4, 4, 1, std::vector<std::complex<double>>(16, 0.0)};
    s.at(2, 3, 0) = 1.0;  // +1 column frequency without its conjugate partner
    EXPECT_THROW(ifft2(s), ConsistencyError);
}

TEST(LowpassMask, CutoffOneDropsCorners) {
    const SpectralMask m = lowpass_mask(8, 8, 1.0);
    EXPECT_EQ(m.at(0, 0), 0);  // (-4, -4): radius sqrt(2)
    EXPECT_EQ(m.at(4, 0), 1);  // (0, -4): radius 1
    EXPECT_EQ(m.at(4, 4), 1);
}

TEST(LowpassMask, TinyCutoffOnlyDc) {
    const SpectralMask m = lowpass_mask(16, 12, 1e-9);
    EXPECT_EQ(m.count_ones(), 1u);
    EXPECT_EQ(m.at(8, 6), 1);
}

TEST(LowpassMask, CountMatchesEnumeration) {
    const SpectralMask m = lowpass_mask(64, 64, 0.2);
    const auto ref = oracle::radial_mask(64, 64, 0.2);
    std::size_t ones = 0;
    for (int v : ref) ones += static_cast<std::size_t>(v);
    EXPECT_EQ(m.count_ones(), ones);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_EQ(m.values[i], ref[i]);
}

TEST(LowpassMask, RectangularAllPass) {
    EXPECT_EQ(lowpass_mask(8, 6, 1.0, MaskShape::Rectangular).count_ones(), 48u);
}

TEST(LowpassMask, InvalidCutoff) {
    EXPECT_THROW(lowpass_mask(8, 8, 0.0), std::invalid_argument);
    EXPECT_THROW(lowpass_mask(8, 8, 1.5), std::invalid_argument);
    EXPECT_THROW(lowpass_mask(8, 8, NAN), std::invalid_argument);
}

TEST(FusePatch, EqualInputsPassThrough) {
    std::mt19937_64 rng(3);
    const TokenGrid x = random_grid(8, 8, 3, rng);
    EXPECT_LE(max_abs_diff(fuse_patch(x, x, lowpass_mask(8, 8, 0.2)), x), 1e-5);
}

TEST(FusePatch, AllOnesGivesGlobal) {
    std::mt19937_64 rng(4);
    const TokenGrid g = random_grid(8, 6, 2, rng), l = random_grid(8, 6, 2, rng);
    EXPECT_LE(max_abs_diff(fuse_patch(g, l, constant_mask(8, 6, 1)), g), 1e-5);
}

TEST(FusePatch, AllZerosGivesLocal) {
    std::mt19937_64 rng(5);
    const TokenGrid g = random_grid(8, 6, 2, rng), l = random_grid(8, 6, 2, rng);
    EXPECT_LE(max_abs_diff(fuse_patch(g, l, constant_mask(8, 6, 0)), l), 1e-5);
}

TEST(FusePatch, ShapeMismatch) {
    EXPECT_THROW(fuse_patch(TokenGrid(4, 4, 1), TokenGrid(4, 5, 1), lowpass_mask(4, 4, 0.5)),
                 std::invalid_argument);
    EXPECT_THROW(fuse_patch(TokenGrid(4, 4, 1), TokenGrid(4, 4, 1), lowpass_mask(4, 5, 0.5)),
                 std::invalid_argument);
}

TEST(SpectralFusion, SelfLocalIsIdentity) {
    std::mt19937_64 rng(6);
    const TokenGrid g = random_grid(24, 24, 4, rng);
    const PatchLayout l = make_layout(24, 24, 16, 16);
    const auto local = extract_all(g, l);
    EXPECT_LE(max_abs_diff(spectral_fusion(g, local, l, FusionConfig{0.2},
                                           SpliceConfig::for_patch(16, 16)),
                           g),
              1e-5);
}

TEST(SpectralFusion, AllPassKeepsGlobal) {
    std::mt19937_64 rng(7);
    const TokenGrid g = random_grid(24, 24, 2, rng);
    const PatchLayout l = make_layout(24, 24, 16, 16);
    std::vector<TokenGrid> local;
    for (std::size_t i = 0; i < l.size(); ++i) local.push_back(random_grid(16, 16, 2, rng));
    const TokenGrid out = spectral_fusion(g, local, l, FusionConfig{1.0, MaskShape::Rectangular},
                                          SpliceConfig::for_patch(16, 16));
    EXPECT_LE(max_abs_diff(out, g), 1e-5);
}

TEST(SpectralFusion, MatchesNaivePipeline) {
    std::mt19937_64 rng(8);
    const TokenGrid g = random_grid(16, 16, 2, rng);
    const PatchLayout l = make_layout(16, 16, 10, 10);
    ASSERT_EQ(l.size(), 4u);
    std::vector<TokenGrid> local;
    for (std::size_t i = 0; i < l.size(); ++i) local.push_back(random_grid(10, 10, 2, rng));
    const SpliceConfig sc = SpliceConfig::for_patch(10, 10);
    const TokenGrid out = spectral_fusion(g, local, l, FusionConfig{0.2}, sc);
    const TokenGrid ref =
        oracle::spectral_fusion(g, local, l.windows, 0.2, sc.sigma_rows, sc.sigma_cols);
    EXPECT_LE(max_abs_diff(out, ref), 1e-6);
}

// Properties

TEST(SpectralProperty, ParsevalAndRoundTrip) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t h = uniform_int(rng, 1, 24), w = uniform_int(rng, 1, 24);
        const TokenGrid x = random_grid(h, w, uniform_int(rng, 1, 4), rng);
        const Spectrum s = fft2(x);
        EXPECT_NEAR(energy(s) / (static_cast<double>(h * w) * energy(x)), 1.0, 1e-6);
        EXPECT_LE(rel_err(ifft2(s), x), 1e-6);
    }
}

TEST(SpectralProperty, MaskSymmetricAndDcPasses) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t h = uniform_int(rng, 1, 40), w = uniform_int(rng, 1, 40);
        const double cutoff = std::uniform_real_distribution<double>(1e-6, 1.0)(rng);
        for (MaskShape shape : {MaskShape::Radial, MaskShape::Rectangular}) {
            const SpectralMask m = lowpass_mask(h, w, cutoff, shape);
            EXPECT_EQ(m.at(h / 2, w / 2), 1);
            for (std::size_t u = 0; u < h; ++u) {
                for (std::size_t v = 0; v < w; ++v) {
                    const std::size_t nu = mirror(u, h), nv = mirror(v, w);
                    EXPECT_EQ(m.at(u, v), m.at(nu, nv)) << h << "x" << w << " " << u << "," << v;
                    EXPECT_TRUE(m.at(u, v) == 0 || m.at(u, v) == 1);
                }
            }
        }
    }
}

TEST(SpectralProperty, ComplementarityAndEnergySplit) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t h = uniform_int(rng, 2, 16), w = uniform_int(rng, 2, 16);
        const TokenGrid g = random_grid(h, w, 2, rng), l = random_grid(h, w, 2, rng);
        const SpectralMask m =
            lowpass_mask(h, w, std::uniform_real_distribution<double>(0.05, 1.0)(rng));
        const TokenGrid fused = fuse_patch(g, l, m);
        const Spectrum sf = fft2(fused), sg = fft2(g), sl = fft2(l);
        double low = 0.0, high = 0.0, err_low = 0.0, err_high = 0.0;
        for (std::size_t u = 0; u < h; ++u) {
            for (std::size_t v = 0; v < w; ++v) {
                for (std::size_t c = 0; c < 2; ++c) {
                    if (m.at(u, v)) {
                        err_low = std::max(err_low, std::abs(sf.at(u, v, c) - sg.at(u, v, c)));
                        low += std::norm(sg.at(u, v, c));
                    } else {
                        err_high = std::max(err_high, std::abs(sf.at(u, v, c) - sl.at(u, v, c)));
                        high += std::norm(sl.at(u, v, c));
                    }
                }
            }
        }
        const double scale = std::sqrt(energy(sg) + energy(sl));
        EXPECT_LE(err_low / scale, 1e-5);
        EXPECT_LE(err_high / scale, 1e-5);
        const double fused_energy = static_cast<double>(h * w) * energy(fused);
        EXPECT_NEAR(fused_energy / (low + high), 1.0, 1e-9);
    }
}
