// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include <gtest/gtest.h>

#include "attnkit/decode.hpp"
#include "attnkit/error.hpp"
#include "attnkit/latent.hpp"
#include "attnkit/selftest.hpp"

using namespace attnkit;

namespace {

/// d=32, h=4, d_h=8, d_hR=4, d_c=32, d_cq=16.
AttnConfig tiny(std::string_view name) {
  AttnConfig cfg = variant_from_name(name);
  cfg.d = 32;
  cfg.h = 4;
  cfg.d_h = 8;
  cfg.d_hR = 4;
  cfg.d_c = 32;
  cfg.d_cq = 16;
  return cfg;
}

Tensor hidden(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_init({n, d}, 1.0, rng);
}

Tensor head_row(const Tensor& O, std::size_t t, std::size_t i) {
  Tensor r({1, O.dim(2)});
  for (std::size_t c = 0; c < O.dim(2); ++c) r.at(0, c) = O.at(t, i, c);
  return r;
}

}  // namespace

TEST(GroupMap, Examples) {
  EXPECT_EQ(group_map(0, 8), (std::pair<std::size_t, std::size_t>{0, 0}));
  EXPECT_EQ(group_map(5, 8), (std::pair<std::size_t, std::size_t>{1, 1}));
  for (std::size_t h : {2, 4, 6, 16}) EXPECT_EQ(group_map(h / 2, h), (std::pair<std::size_t, std::size_t>{1, 0}));
}

TEST(LatentLayout, Variants) {
  const LatentLayout mla = latent_layout(tiny("mla"));
  EXPECT_EQ(mla.groups, 1u);
  EXPECT_EQ(mla.blocks, 1u);
  const LatentLayout m4 = latent_layout(tiny("mlra4"));
  EXPECT_EQ(m4.blocks, 4u);
  EXPECT_EQ(m4.block_width, 8u);
  const LatentLayout m2 = latent_layout(tiny("mlra2"));
  EXPECT_EQ(m2.groups, 2u);
  EXPECT_EQ(m2.blocks, 2u);
  EXPECT_EQ(m2.block_width, 8u);
  EXPECT_TRUE(m2.grouped_norm);
  const LatentLayout g2 = latent_layout(tiny("gla2"));
  EXPECT_EQ(g2.groups, 2u);
  EXPECT_EQ(g2.group_width, 16u);
  EXPECT_THROW(latent_layout(tiny("gqa")), RoutingError);
}

TEST(BlockReconstruct, IdentityBlocksSumLatentBlocks) {
  Rng rng(1);
  const std::size_t dh = 3;
  const Tensor C = gaussian_init({5, 4 * dh}, 1.0, rng);
  const Tensor I = concat_rows(std::vector<Tensor>(4, Tensor::identity(dh)));
  auto [k, v] = block_reconstruct(C, I, I, 4, 0, dh);
  Tensor want = slice_cols(C, 0, dh);
  for (std::size_t b = 1; b < 4; ++b) want = add(want, slice_cols(C, b * dh, (b + 1) * dh));
  EXPECT_LE(max_abs_diff(k, want), 1e-15);
  EXPECT_LE(max_abs_diff(v, want), 1e-15);
}

TEST(BlockReconstruct, MatchesFullProduct) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const std::size_t dh = 8, h = 4, dc = 32;
    const Tensor C = gaussian_init({6, dc}, 1.0, rng);
    const Tensor Wk = gaussian_init({dc, h * dh}, 1.0, rng), Wv = gaussian_init({dc, h * dh}, 1.0, rng);
    for (std::size_t blocks : {2, 4}) {
      for (std::size_t i = 0; i < h; ++i) {
        auto [k, v] = block_reconstruct(C, Wk, Wv, blocks, i, dh);
        EXPECT_LE(max_abs_diff(k, matmul(C, slice_cols(Wk, i * dh, (i + 1) * dh))), 1e-12);
        EXPECT_LE(max_abs_diff(v, matmul(C, slice_cols(Wv, i * dh, (i + 1) * dh))), 1e-12);
      }
    }
  }
}

TEST(BlockReconstruct, SingleBlockIsPlainProduct) {
  Rng rng(3);
  const Tensor C = gaussian_init({4, 16}, 1.0, rng), W = gaussian_init({16, 8}, 1.0, rng);
  auto [k, v] = block_reconstruct(C, W, W, 1, 1, 4);
  EXPECT_EQ(max_abs_diff(k, matmul(C, slice_cols(W, 4, 8))), 0.0);
}

TEST(ScaleFactors, MainConfigs) {
  const ScaleFactors mla = calib_factors(presets::main_config("MLA").attn);
  EXPECT_EQ(mla.q_sq, Rational(2));
  EXPECT_EQ(mla.kv_sq, Rational(6));
  EXPECT_EQ(mla.alpha_q_symbol(), "√2");
  EXPECT_EQ(mla.alpha_kv_symbol(), "√6");
  const ScaleFactors m4 = calib_factors(presets::main_config("MLRA-4").attn);
  EXPECT_EQ(m4.q_sq, Rational(3));
  EXPECT_EQ(m4.kv_sq, Rational(24));
  EXPECT_EQ(m4.attn_sq, Rational(1, 4));
  EXPECT_EQ(m4.alpha_attn_symbol(), "1/2");
  EXPECT_EQ(calib_factors(presets::main_config("GLA-2").attn).kv_sq, Rational(12));
}

TEST(ScaleFactors, DisabledMeansOne) {
  AttnConfig cfg = tiny("mlra4");
  cfg.scaling_enabled = false;
  const ScaleFactors f = calib_factors(cfg);
  EXPECT_EQ(f.alpha_q(), 1.0);
  EXPECT_EQ(f.alpha_kv(), 1.0);
  EXPECT_EQ(f.alpha_attn(), 1.0);
}

TEST(Mlra, DeadBranchesContributeNothing) {
  AttnConfig cfg = tiny("mlra4");
  cfg.scaling_enabled = false;
  WeightSet w = build_weights(cfg, 0.3, Rng(4));
  Tensor& wuv = w.at("W_UV");
  for (std::size_t r = cfg.d_c / 4; r < cfg.d_c; ++r) {
    for (double& x : wuv.row(r)) x = 0.0;
  }
  const Tensor H = hidden(6, cfg.d, 5);
  const LatentBranches br = latent_branches(cfg, w, H);
  for (std::size_t b = 1; b < 4; ++b) EXPECT_EQ(max_abs(br.O[b]), 0.0);
  EXPECT_EQ(max_abs_diff(latent_prefill(cfg, w, H).O, br.O[0]), 0.0);
}

TEST(Mlra, SingleTokenSumsBranchValues) {
  const AttnConfig cfg = tiny("mlra4");
  const WeightSet w = build_weights(cfg, 0.3, Rng(6));
  const Tensor H = hidden(1, cfg.d, 7);
  const PrefillOutput out = latent_prefill(cfg, w, H);
  const WeightView view = WeightView::of(w);
  const Tensor C = latent_rows(cfg, view, H);
  const double alpha = calib_factors(cfg).alpha_attn();
  for (std::size_t i = 0; i < cfg.h; ++i) {
    Tensor sum({1, cfg.d_h});
    for (std::size_t b = 0; b < 4; ++b) {
      sum = add(sum, matmul(slice_cols(C, b * 8, (b + 1) * 8), up_block(cfg, view, "W_UV", i, b)));
    }
    EXPECT_LE(max_abs_diff(head_row(out.O, 0, i), scale(sum, alpha)), 1e-14);
  }
}

TEST(Mlra, DiffersFromMlaWithSharedWeights) {
  AttnConfig mla = tiny("mla");
  mla.scaling_enabled = false;
  AttnConfig m4 = mla;
  m4.variant = Variant::MLRA;
  m4.branches = 4;
  const WeightSet w = build_weights(mla, 0.3, Rng(8));
  const Tensor H = hidden(6, mla.d, 9);
  const PrefillOutput a = latent_prefill(mla, w, H);
  EXPECT_GT(max_abs_diff(a.O, latent_prefill(m4, w, H).O), 1e-3);
  const Tensor C = a.cache.get("C_KV").read(0, mla.d_c);
  for (std::size_t i = 0; i < mla.h; ++i) {
    auto [k, v] = block_reconstruct(C, w.at("W_UK"), w.at("W_UV"), 4, i, mla.d_h);
    EXPECT_LE(max_abs_diff(k, matmul(C, slice_cols(w.at("W_UK"), i * 8, (i + 1) * 8))), 1e-12);
  }
}

TEST(Mlra, SeparationHoldsOnRandomConfigs) {
  const CriterionResult r = check_mlra_separation(11, 40);
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(LatentRows, GroupedNormNormalizesEachGroup) {
  AttnConfig cfg = tiny("gla2");
  cfg.scaling_enabled = false;
  const WeightSet w = build_weights(cfg, 0.3, Rng(12));
  const Tensor C = latent_rows(cfg, WeightView::of(w), hidden(3, cfg.d, 13));
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t g = 0; g < 2; ++g) {
      double ms = 0.0;
      for (std::size_t c = g * 16; c < (g + 1) * 16; ++c) ms += C.at(t, c) * C.at(t, c);
      EXPECT_NEAR(ms / 16.0, 1.0, 1e-4);
    }
  }
}
