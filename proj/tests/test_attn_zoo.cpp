// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include <cmath>

#include <gtest/gtest.h>

#include "attnkit/attn_zoo.hpp"
#include "attnkit/block.hpp"
#include "attnkit/decode.hpp"
#include "attnkit/error.hpp"
#include "attnkit/rope.hpp"
#include "attnkit/weights.hpp"

using namespace attnkit;

namespace {

AttnConfig small(std::string_view name) {
  AttnConfig cfg = variant_from_name(name);
  cfg.h = 4;
  cfg.d = 16;
  cfg.d_h = 4;
  cfg.d_hR = 2;
  cfg.d_cq = 8;
  if (cfg.variant == Variant::GQA || cfg.variant == Variant::GTA) cfg.g = 2;
  if (cfg.variant == Variant::TPA) cfg.beta_q = cfg.beta_kv = 2;
  return cfg;
}

Tensor hidden(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_init({n, d}, 1.0, rng);
}

Tensor head_of(const Tensor& O, std::size_t t, std::size_t i) {
  Tensor r({1, O.dim(2)});
  for (std::size_t c = 0; c < O.dim(2); ++c) r.at(0, c) = O.at(t, i, c);
  return r;
}

}  // namespace

TEST(WeightShapes, MlaUpProjection) {
  AttnConfig cfg = variant_from_name("mla");
  cfg.d = 3072;
  cfg.h = 24;
  cfg.d_h = 128;
  cfg.d_hR = 64;
  cfg.d_cq = 1536;
  cfg.d_c = 512;
  for (const auto& [name, shape] : weight_shapes(cfg)) {
    if (name == "W_UK") {
      EXPECT_EQ(shape, (Shape{512, 3072}));
    }
  }
}

TEST(WeightShapes, MqaSingleKeyHead) {
  AttnConfig cfg = small("mqa");
  for (const auto& [name, shape] : weight_shapes(cfg)) {
    if (name == "W_K") {
      EXPECT_EQ(shape, (Shape{cfg.d, cfg.d_h}));
    }
  }
}

TEST(WeightShapes, TpaKeyComponents) {
  AttnConfig cfg = variant_from_name("tpa");
  cfg.d = 64;
  cfg.h = 24;
  cfg.d_h = 128;
  cfg.beta_q = 6;
  cfg.beta_kv = 2;
  bool seen = false;
  for (const auto& [name, shape] : weight_shapes(cfg)) {
    if (name == "W_CK") {
      EXPECT_EQ(shape, (Shape{64, 256}));
      seen = true;
    }
  }
  EXPECT_TRUE(seen);
}

TEST(Config, MissingFieldsNamed) {
  AttnConfig cfg = variant_from_name("gqa");
  cfg.h = 4;
  cfg.d = 8;
  cfg.d_h = 2;
  try {
    validate(cfg);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("g"), std::string::npos);
  }
}

TEST(Config, UnknownVariantRejected) { EXPECT_THROW(variant_from_name("xyz"), ConfigError); }

TEST(Config, LatentDefaults) {
  AttnConfig cfg = variant_from_name("mla");
  cfg.d_h = 128;
  cfg = with_latent_defaults(cfg);
  EXPECT_EQ(cfg.d_c, 512u);
  EXPECT_EQ(cfg.d_hR, 64u);
}

class BaselineVariant : public ::testing::TestWithParam<const char*> {};

TEST_P(BaselineVariant, SingleTokenReturnsOwnValue) {
  const AttnConfig cfg = small(GetParam());
  const WeightSet w = build_weights(cfg, 0.3, Rng(1));
  const Tensor H = hidden(1, cfg.d, 2);
  const PrefillOutput out = prefill(cfg, w, H);
  for (std::size_t i = 0; i < cfg.h; ++i) {
    auto [k, v] = baseline_head_kv(cfg, out.cache, i, 1);
    EXPECT_LE(max_abs_diff(head_of(out.O, 0, i), v), 1e-15) << "head " << i;
  }
}

TEST_P(BaselineVariant, DecodeMatchesPrefillRows) {
  const AttnConfig cfg = small(GetParam());
  const WeightSet w = build_weights(cfg, 0.3, Rng(3));
  const Tensor H = hidden(5, cfg.d, 4);
  const PrefillOutput ref = prefill(cfg, w, H);
  KvCache cache = empty_cache(cfg);
  for (std::size_t t = 0; t < H.rows(); ++t) {
    const Tensor o = decode_step(cfg, w, cache, H.row(t));
    for (std::size_t i = 0; i < cfg.h; ++i) {
      Tensor row({1, o.cols()});
      for (std::size_t c = 0; c < o.cols(); ++c) row.at(0, c) = o.at(i, c);
      EXPECT_LE(max_rel_diff(row, head_of(ref.O, t, i), 1e-30), 1e-12);
    }
  }
  EXPECT_EQ(cache.checksum(), ref.cache.checksum());
}

TEST_P(BaselineVariant, LatentPathRejectsBaseline) {
  const AttnConfig cfg = small(GetParam());
  const WeightSet w = build_weights(cfg, 0.3, Rng(5));
  KvCache cache = empty_cache(cfg);
  const Tensor H = hidden(1, cfg.d, 6);
  EXPECT_THROW(naive_decode_step(cfg, w, cache, H.row(0)), RoutingError);
}

INSTANTIATE_TEST_SUITE_P(AllBaselines, BaselineVariant, ::testing::Values("mha", "mqa", "gqa", "mfa", "tpa", "gta"));

TEST(Gqa, EqualsMhaWithReplicatedKvHeads) {
  AttnConfig gqa = small("gqa");
  AttnConfig mha = gqa;
  mha.variant = Variant::MHA;
  mha.g = 0;
  const WeightSet wg = build_weights(gqa, 0.3, Rng(7));
  WeightSet wm = build_weights(mha, 0.3, Rng(8));
  wm.at("W_Q") = wg.at("W_Q");
  wm.at("W_O") = wg.at("W_O");
  const std::size_t hpk = gqa.h / gqa.g, dh = gqa.d_h;
  for (const char* name : {"W_K", "W_V"}) {
    std::vector<Tensor> parts;
    for (std::size_t i = 0; i < gqa.h; ++i) parts.push_back(slice_cols(wg.at(name), (i / hpk) * dh, (i / hpk + 1) * dh));
    wm.at(name) = concat_cols(parts);
  }
  const Tensor H = hidden(6, gqa.d, 9);
  EXPECT_EQ(max_abs_diff(prefill(gqa, wg, H).O, prefill(mha, wm, H).O), 0.0);
}

TEST(Tpa, AllOnesCoefficientsGiveOneSharedHead) {
  AttnConfig cfg = small("tpa");
  cfg.beta_q = cfg.beta_kv = 1;
  WeightSet w = build_weights(cfg, 0.3, Rng(10));
  for (const char* name : {"W_AQ", "W_AK", "W_AV"}) w.at(name) = Tensor::full(w.at(name).shape(), 1.0);
  const Tensor H = hidden(5, cfg.d, 11);
  const PrefillOutput out = prefill(cfg, w, H);

  Tensor a({H.rows(), 1});
  for (std::size_t t = 0; t < H.rows(); ++t) {
    for (double x : H.row(t)) a.at(t, 0) += x;
  }
  auto rowscale = [&](const Tensor& m) {
    Tensor r = m;
    for (std::size_t t = 0; t < r.rows(); ++t) {
      for (double& x : r.row(t)) x *= a.at(t, 0);
    }
    return r;
  };
  RopeParams rp{cfg.d_h, cfg.rope_base, iota_positions(H.rows()), 0};
  const Tensor q = rowscale(rope_apply(matmul(H, w.at("W_CQ")), rp));
  const Tensor k = rowscale(rope_apply(matmul(H, w.at("W_CK")), rp));
  const Tensor v = rowscale(matmul(H, w.at("W_CV")));
  const Tensor shared = causal_attention(q, k, v, score_scale(cfg), 0);
  for (std::size_t i = 0; i < cfg.h; ++i) {
    for (std::size_t t = 0; t < H.rows(); ++t) {
      Tensor row({1, cfg.d_h});
      for (std::size_t c = 0; c < cfg.d_h; ++c) row.at(0, c) = shared.at(t, c);
      EXPECT_LE(max_rel_diff(head_of(out.O, t, i), row, 1e-30), 1e-12);
    }
  }
}

TEST(Gating, ZeroGateHalvesOutput) {
  Rng rng(12);
  const Tensor H = gaussian_init({3, 4}, 1.0, rng), O = gaussian_init({3, 6}, 1.0, rng);
  const Tensor out = gated_output(H, O, Tensor::zeros({4, 6}));
  EXPECT_LE(max_abs_diff(out, scale(O, 0.5)), 1e-15);
}

TEST(Gating, LargeGateSaturates) {
  Rng rng(13);
  const Tensor O = gaussian_init({2, 3}, 1.0, rng);
  const Tensor out = gated_output(Tensor::full({2, 1}, 1.0), O, Tensor::full({1, 3}, 100.0));
  EXPECT_LE(max_abs_diff(out, O), 1e-12);
}

TEST(Gating, MatchesElementwiseOracle) {
  Rng rng(14);
  const Tensor H = gaussian_init({3, 4}, 1.0, rng), O = gaussian_init({3, 5}, 1.0, rng);
  const Tensor W = gaussian_init({4, 5}, 1.0, rng);
  const Tensor out = gated_output(H, O, W);
  const Tensor z = matmul(H, W);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t c = 0; c < 5; ++c) {
      EXPECT_NEAR(out.at(t, c), O.at(t, c) / (1.0 + std::exp(-z.at(t, c))), 1e-14);
    }
  }
}

TEST(Block, ResidualShapeAndDeterminism) {
  AttnConfig cfg = small("mla");
  cfg.d_c = 16;
  cfg.gated = true;
  const WeightSet w = build_weights(cfg, 0.05, Rng(15));
  const MlpWeights mlp = build_mlp(cfg.d, 24, 0.05, Rng(16));
  const Tensor X = hidden(4, cfg.d, 17);
  const Tensor Y = block_forward(cfg, w, mlp, X);
  EXPECT_EQ(Y.shape(), X.shape());
  EXPECT_EQ(max_abs_diff(Y, block_forward(cfg, w, mlp, X)), 0.0);
}

TEST(Block, ZeroWeightsGiveIdentity) {
  const AttnConfig cfg = small("gqa");
  const WeightSet w = build_weights(cfg, 0.3, Rng(18), true);
  const MlpWeights mlp = build_mlp(cfg.d, 24, 0.0, Rng(19));
  const Tensor X = hidden(3, cfg.d, 20);
  EXPECT_EQ(max_abs_diff(block_forward(cfg, w, mlp, X), X), 0.0);
}
