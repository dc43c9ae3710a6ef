#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "random.hpp"
#include "resdit/attention.hpp"

using namespace resdit;
using testing_support::random_grid;
using testing_support::uniform_int;

namespace {

AttentionWeights weights(std::size_t dim, std::size_t heads, std::uint64_t seed,
                         double stddev = 0.3) {
    std::mt19937_64 rng(seed);
    return AttentionWeights::random(dim, heads, rng, stddev);
}

TokenGrid permute_tokens(const TokenGrid& x, const std::vector<std::size_t>& perm) {
    TokenGrid out(1, x.tokens(), x.channels());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        const std::size_t src = perm[i];
        for (std::size_t c = 0; c < x.channels(); ++c)
            out.at(0, i, c) = x.at(src / x.width(), src % x.width(), c);
    }
    return out;
}

}  // namespace

TEST(Attention, SingleTokenReturnsValue) {
    std::mt19937_64 rng(1);
    const TokenGrid q = random_grid(1, 1, 4, rng), k = random_grid(1, 1, 4, rng);
    const TokenGrid v = random_grid(1, 1, 4, rng);
    EXPECT_LE(max_abs_diff(attention(q, k, v, 1), v), 1e-15);
}

TEST(Attention, IdenticalKeysAverageValues) {
    std::mt19937_64 rng(2);
    const TokenGrid q = random_grid(1, 3, 2, rng);
    TokenGrid k(1, 3, 2, 0.7);
    TokenGrid v(1, 3, 2);
    v.at(0, 0, 0) = 1.0;
    v.at(0, 1, 0) = 2.0;
    v.at(0, 2, 0) = 6.0;
    const TokenGrid out = attention(q, k, v, 1);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(out.at(0, i, 0), 3.0, 1e-12);
        EXPECT_NEAR(out.at(0, i, 1), 0.0, 1e-12);
    }
}

TEST(Attention, MatchesOracleFourTokens) {
    std::mt19937_64 rng(3);
    const TokenGrid q = random_grid(2, 2, 8, rng), k = random_grid(2, 2, 8, rng);
    const TokenGrid v = random_grid(2, 2, 8, rng);
    EXPECT_LE(max_abs_diff(attention(q, k, v, 2), oracle::attention(q, k, v, 2)), 1e-12);
}

TEST(Attention, ShapeChecks) {
    EXPECT_THROW(attention(TokenGrid(2, 2, 4), TokenGrid(2, 2, 4), TokenGrid(2, 3, 4), 1),
                 std::invalid_argument);
    EXPECT_THROW(attention(TokenGrid(2, 2, 6), TokenGrid(2, 2, 6), TokenGrid(2, 2, 6), 4),
                 std::invalid_argument);
}

TEST(Weights, ValidateRejectsBadShapes) {
    AttentionWeights w = weights(8, 2, 4);
    EXPECT_NO_THROW(w.validate());
    w.num_heads = 3;
    EXPECT_THROW(w.validate(), std::invalid_argument);
    // head_dim 2 cannot hold two rotary axes
    EXPECT_THROW(weights(8, 4, 4).validate(), std::invalid_argument);
}

TEST(GlobalBranch, BaseResolutionEqualsVanilla) {
    std::mt19937_64 rng(5);
    const auto w = weights(16, 2, 5);
    const TokenGrid x = random_grid(6, 6, 16, rng);
    const auto scale = ScaleFactors::from_dims(6, 6, 6, 6);
    EXPECT_EQ(global_branch(x, w, scale, GlobalPE::Scaled),
              global_branch(x, w, scale, GlobalPE::Vanilla));
}

TEST(GlobalBranch, MatchesOracle) {
    std::mt19937_64 rng(6);
    const auto w = weights(16, 2, 6);
    const TokenGrid x = random_grid(8, 8, 16, rng);
    const TokenGrid out = global_branch(x, w, ScaleFactors::from_dims(8, 8, 4, 4));
    EXPECT_LE(max_abs_diff(out, oracle::global_branch(x, w, 4, 4)), 1e-9);
}

TEST(GlobalBranch, MismatchedScaleRejected) {
    const auto w = weights(8, 1, 7);
    EXPECT_THROW(global_branch(TokenGrid(8, 8, 8), w, ScaleFactors::from_dims(16, 16, 4, 4)),
                 std::invalid_argument);
}

TEST(GlobalBranch, TiledMatchesOracle) {
    std::mt19937_64 rng(8);
    const auto w = weights(8, 1, 8);
    const TokenGrid x = random_grid(8, 4, 8, rng);
    const PositionGrid p = tiled_indices(8, 4, 4, 4);
    EXPECT_LE(max_abs_diff(global_branch(x, w, ScaleFactors::from_dims(8, 4, 4, 4), GlobalPE::Tiled),
                           oracle::rotary_attention(x, w, p.pos_h, p.pos_w)),
              1e-9);
}

TEST(LocalBranch, SingleWindowIsPlainAttention) {
    std::mt19937_64 rng(9);
    const auto w = weights(16, 2, 9);
    const TokenGrid x = random_grid(6, 6, 16, rng);
    const PatchLayout l = make_layout(6, 6, 6, 6);
    const TokenGrid out = local_branch(x, w, l, SpliceConfig::for_patch(6, 6));
    EXPECT_LE(max_abs_diff(out, global_branch(x, w, ScaleFactors::from_dims(6, 6, 6, 6))), 1e-12);
}

TEST(LocalBranch, MatchesOracle) {
    std::mt19937_64 rng(10);
    const auto w = weights(16, 2, 10);
    const TokenGrid x = random_grid(16, 16, 16, rng);
    const PatchLayout l = make_layout(16, 16, 10, 10);
    ASSERT_EQ(l.size(), 4u);
    const auto patches = local_patch_outputs(x, w, l);
    const auto ref = oracle::local_patches(x, w, l.windows);
    for (std::size_t i = 0; i < l.size(); ++i) EXPECT_LE(max_abs_diff(patches[i], ref[i]), 1e-9);
    const SpliceConfig sc = SpliceConfig::for_patch(10, 10);
    EXPECT_LE(max_abs_diff(local_branch(x, w, l, sc),
                           oracle::splice(ref, l.windows, sc.sigma_rows, sc.sigma_cols, 16, 16)),
              1e-9);
}

TEST(LocalBranch, OutsideWindowHasNoInfluence) {
    std::mt19937_64 rng(11);
    const auto w = weights(8, 1, 11);
    TokenGrid x = random_grid(12, 12, 8, rng);
    const PatchLayout l = make_layout(12, 12, 8, 8);
    const auto before = local_patch_outputs(x, w, l);
    // (0, 11) lies only in the top-right window
    for (double& v : x.token(0, 11)) v += 5.0;
    const auto after = local_patch_outputs(x, w, l);
    for (std::size_t i = 0; i < l.size(); ++i) {
        if (l.windows[i].contains(0, 11)) {
            EXPECT_GT(max_abs_diff(before[i], after[i]), 1e-6);
        } else {
            EXPECT_EQ(before[i], after[i]);
        }
    }
}

TEST(LocalBranch, LayoutMustMatchGrid) {
    const auto w = weights(8, 1, 12);
    EXPECT_THROW(local_patch_outputs(TokenGrid(8, 8, 8), w, make_layout(10, 10, 8, 8)),
                 std::invalid_argument);
}

TEST(ResditAttention, ModesDispatch) {
    std::mt19937_64 rng(13);
    const auto w = weights(16, 2, 13);
    const TokenGrid x = random_grid(12, 12, 16, rng);
    const BranchContext ctx = BranchContext::for_grid(12, 12, 8, 8);
    EXPECT_EQ(resdit_attention(x, w, BranchMode::Global, ctx), global_branch(x, w, ctx.scale));
    EXPECT_EQ(resdit_attention(x, w, BranchMode::Local, ctx),
              local_branch(x, w, ctx.layout, ctx.splice));
}

TEST(ResditAttention, AllPassFusionIsGlobal) {
    std::mt19937_64 rng(14);
    const auto w = weights(16, 2, 14);
    const TokenGrid x = random_grid(12, 12, 16, rng);
    BranchContext ctx = BranchContext::for_grid(12, 12, 8, 8);
    ctx.fusion = FusionConfig{1.0, MaskShape::Rectangular};
    EXPECT_LE(max_abs_diff(resdit_attention(x, w, BranchMode::Fused, ctx),
                           resdit_attention(x, w, BranchMode::Global, ctx)),
              1e-6);
}

TEST(ResditAttention, FusedMatchesOracle) {
    std::mt19937_64 rng(15);
    const auto w = weights(16, 2, 15);
    const TokenGrid x = random_grid(16, 16, 16, rng);
    const BranchContext ctx = BranchContext::for_grid(16, 16, 10, 10);
    const TokenGrid ref =
        oracle::spectral_fusion(oracle::global_branch(x, w, 10, 10),
                                oracle::local_patches(x, w, ctx.layout.windows), ctx.layout.windows,
                                ctx.fusion.cutoff, ctx.splice.sigma_rows, ctx.splice.sigma_cols);
    EXPECT_LE(max_abs_diff(resdit_attention(x, w, BranchMode::Fused, ctx), ref), 1e-6);
}

TEST(ResditAttention, BaseResolutionCollapsesToStandard) {
    std::mt19937_64 rng(16);
    const auto w = weights(16, 2, 16);
    const TokenGrid x = random_grid(8, 8, 16, rng);
    const BranchContext ctx = BranchContext::for_grid(8, 8, 8, 8);
    const PositionGrid p = vanilla_indices(8, 8);
    const TokenGrid standard = oracle::rotary_attention(x, w, p.pos_h, p.pos_w);
    for (BranchMode mode : {BranchMode::Global, BranchMode::Local, BranchMode::Fused})
        EXPECT_LE(max_abs_diff(resdit_attention(x, w, mode, ctx), standard), 1e-6)
            << to_string(mode);
}

TEST(ResditAttention, AverageFusionAndHardSplice) {
    std::mt19937_64 rng(17);
    const auto w = weights(8, 1, 17);
    const TokenGrid x = random_grid(12, 12, 8, rng);
    BranchContext ctx = BranchContext::for_grid(12, 12, 8, 8);
    ctx.fusion_mode = FusionMode::Average;
    const TokenGrid g = global_branch(x, w, ctx.scale);
    const auto local = local_patch_outputs(x, w, ctx.layout);
    std::vector<TokenGrid> avg;
    const auto gp = extract_all(g, ctx.layout);
    for (std::size_t i = 0; i < gp.size(); ++i) {
        TokenGrid a = gp[i];
        for (std::size_t j = 0; j < a.size(); ++j) a.data()[j] = 0.5 * (gp[i].data()[j] + local[i].data()[j]);
        avg.push_back(std::move(a));
    }
    EXPECT_LE(max_abs_diff(resdit_attention(x, w, BranchMode::Fused, ctx),
                           splice(avg, ctx.layout, ctx.splice)),
              1e-12);
    ctx.fusion_mode = FusionMode::Spectral;
    ctx.splice_mode = SpliceMode::Hard;
    EXPECT_EQ(resdit_attention(x, w, BranchMode::Local, ctx), splice_hard(local, ctx.layout));
}

TEST(BranchMode, StringRoundTrip) {
    for (BranchMode m : {BranchMode::Global, BranchMode::Local, BranchMode::Fused})
        EXPECT_EQ(branch_mode_from_string(to_string(m)), m);
    EXPECT_THROW(branch_mode_from_string("sideways"), std::invalid_argument);
}

// Properties

TEST(AttentionProperty, SoftmaxRowsAreConvex) {
    // With one-hot values, each output is the softmax row itself.
    std::mt19937_64 rng(18);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = uniform_int(rng, 1, 12);
        const TokenGrid q = random_grid(1, n, n, rng, 3.0), k = random_grid(1, n, n, rng, 3.0);
        TokenGrid v(1, n, n);
        for (std::size_t i = 0; i < n; ++i) v.at(0, i, i) = 1.0;
        const TokenGrid out = attention(q, k, v, 1);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                EXPECT_GE(out.at(0, i, j), 0.0);
                sum += out.at(0, i, j);
            }
            EXPECT_NEAR(sum, 1.0, 1e-12);
        }
    }
}

TEST(AttentionProperty, PermutationEquivariant) {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = uniform_int(rng, 2, 16);
        const TokenGrid q = random_grid(1, n, 8, rng), k = random_grid(1, n, 8, rng);
        const TokenGrid v = random_grid(1, n, 8, rng);
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        const TokenGrid out = attention(permute_tokens(q, perm), permute_tokens(k, perm),
                                        permute_tokens(v, perm), 2);
        EXPECT_LE(max_abs_diff(out, permute_tokens(attention(q, k, v, 2), perm)), 1e-12);
    }
}

TEST(AttentionProperty, GlobalShiftEquivariant) {
    // Shifting every rotary index by a constant leaves the rotary attention output unchanged.
    std::mt19937_64 rng(20);
    for (int trial = 0; trial < 10; ++trial) {
        const auto w = weights(16, 2, 100 + trial);
        const TokenGrid x = random_grid(4, 5, 16, rng);
        const PositionGrid p = scaled_indices(4, 5, 2, 3);
        const double dh = std::uniform_real_distribution<double>(-50, 50)(rng);
        const double dw = std::uniform_real_distribution<double>(-50, 50)(rng);
        const PositionGrid moved = shifted(p, dh, dw);
        const RowMatrix a = rotary_self_attention(as_matrix(x), w, rotary_field(p, 8));
        const RowMatrix b = rotary_self_attention(as_matrix(x), w, rotary_field(moved, 8));
        EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(AttentionProperty, LocalEqualsOracleOnRandomLayouts) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t g = uniform_int(rng, 6, 14), p = uniform_int(rng, g / 2 + 1, g);
        const auto w = weights(8, 2, 200 + trial);
        const TokenGrid x = random_grid(g, g, 8, rng);
        const PatchLayout l = make_layout(g, g, p, p);
        const auto patches = local_patch_outputs(x, w, l);
        const auto ref = oracle::local_patches(x, w, l.windows);
        for (std::size_t i = 0; i < l.size(); ++i) EXPECT_LE(max_abs_diff(patches[i], ref[i]), 1e-9);
    }
}
