// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include <gtest/gtest.h>

#include "attnkit/decode.hpp"
#include "attnkit/error.hpp"
#include "attnkit/latent.hpp"
#include "attnkit/selftest.hpp"

using namespace attnkit;

namespace {

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

Tensor row_of(const Tensor& o, std::size_t i) {
  Tensor r({1, o.cols()});
  for (std::size_t c = 0; c < o.cols(); ++c) r.at(0, c) = o.at(i, c);
  return r;
}

}  // namespace

class LatentVariant : public ::testing::TestWithParam<const char*> {};

TEST_P(LatentVariant, NaiveEqualsAbsorbed) {
  const AttnConfig cfg = tiny(GetParam());
  const WeightSet w = build_weights(cfg, 0.3, Rng(1));
  const Tensor H = hidden(7, cfg.d, 2);
  KvCache a = empty_cache(cfg), b = empty_cache(cfg);
  for (std::size_t t = 0; t < H.rows(); ++t) {
    const Tensor x = naive_decode_step(cfg, w, a, H.row(t));
    const Tensor y = absorbed_decode_step(cfg, w, b, H.row(t));
    EXPECT_LE(max_rel_diff(y, x, 1e-30), 1e-10) << "step " << t;
  }
}

TEST_P(LatentVariant, SingleTokenPrefixIsExact) {
  const AttnConfig cfg = tiny(GetParam());
  const WeightSet w = build_weights(cfg, 0.3, Rng(3));
  const Tensor H = hidden(1, cfg.d, 4);
  KvCache a = empty_cache(cfg), b = empty_cache(cfg);
  const Tensor x = naive_decode_step(cfg, w, a, H.row(0));
  const Tensor y = absorbed_decode_step(cfg, w, b, H.row(0));
  EXPECT_LE(max_abs_diff(x, y), 1e-15);
}

TEST_P(LatentVariant, DecodeMatchesPrefill) {
  const AttnConfig cfg = tiny(GetParam());
  const WeightSet w = build_weights(cfg, 0.3, Rng(5));
  const Tensor H = hidden(6, cfg.d, 6);
  const PrefillOutput ref = latent_prefill(cfg, w, H);
  for (DecodeMode mode : {DecodeMode::Naive, DecodeMode::Absorbed}) {
    KvCache cache = empty_cache(cfg);
    for (std::size_t t = 0; t < H.rows(); ++t) {
      const Tensor o = decode_step(cfg, w, cache, H.row(t), mode);
      for (std::size_t i = 0; i < cfg.h; ++i) {
        EXPECT_LE(max_rel_diff(row_of(o, i), head_row(ref.O, t, i), 1e-30), 1e-10);
      }
    }
    EXPECT_EQ(cache.checksum(), ref.cache.checksum());
  }
}

TEST_P(LatentVariant, CacheGrowsOneTokenAtATime) {
  const AttnConfig cfg = tiny(GetParam());
  const WeightSet w = build_weights(cfg, 0.3, Rng(7));
  const Tensor H = hidden(3, cfg.d, 8);
  KvCache cache = empty_cache(cfg);
  EXPECT_EQ(cache.stored_per_token(), cfg.d_c + cfg.d_hR);
  for (std::size_t t = 0; t < H.rows(); ++t) {
    absorbed_decode_step(cfg, w, cache, H.row(t));
    EXPECT_EQ(cache.length(), t + 1);
  }
}

INSTANTIATE_TEST_SUITE_P(Latent, LatentVariant, ::testing::Values("mla", "gla2", "mlra2", "mlra4"));

TEST(Decode, FirstTokenMlaReturnsOwnValue) {
  const AttnConfig cfg = tiny("mla");
  const WeightSet w = build_weights(cfg, 0.3, Rng(9));
  const Tensor H = hidden(1, cfg.d, 10);
  KvCache cache = empty_cache(cfg);
  const Tensor o = absorbed_decode_step(cfg, w, cache, H.row(0));
  const Tensor V = matmul(latent_rows(cfg, WeightView::of(w), H), w.at("W_UV"));
  for (std::size_t i = 0; i < cfg.h; ++i) {
    EXPECT_LE(max_abs_diff(row_of(o, i), slice_cols(V, i * 8, (i + 1) * 8)), 1e-14);
  }
}

TEST(AbsorbQuery, IdentityUpProjectionPassesQueryThrough) {
  Rng rng(11);
  const Tensor q = gaussian_init({3, 4}, 1.0, rng), qr = gaussian_init({3, 2}, 1.0, rng);
  Tensor W({3, 4, 4});
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t p = 0; p < 4; ++p) W.at(i, p, p) = 1.0;
  }
  const AbsorbedQuery a = absorb_query(q, qr, W);
  EXPECT_EQ(max_abs_diff(a.nope, q), 0.0);
  EXPECT_EQ(a.logit_dim(), 6u);
}

TEST(AbsorbQuery, MatchesPerHeadLoop) {
  Rng rng(12);
  const Tensor q = gaussian_init({4, 8}, 1.0, rng), qr = gaussian_init({4, 4}, 1.0, rng);
  const Tensor W = gaussian_init({4, 8, 32}, 1.0, rng);
  const AbsorbedQuery a = absorb_query(q, qr, W);
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor Wi({8, 32});
    for (std::size_t p = 0; p < 8; ++p) {
      for (std::size_t c = 0; c < 32; ++c) Wi.at(p, c) = W.at(i, p, c);
    }
    EXPECT_LE(max_abs_diff(row_of(a.nope, i), matmul(row_of(q, i), Wi)), 1e-13);
  }
}

TEST(AbsorbQuery, MlraFourHasFourNarrowQueriesPerHead) {
  const AttnConfig cfg = tiny("mlra4");
  const WeightSet w = build_weights(cfg, 0.3, Rng(13));
  const WeightView view = WeightView::of(w);
  Rng rng(14);
  const Tensor q = gaussian_init({cfg.h, cfg.d_h}, 1.0, rng), qr = gaussian_init({cfg.h, cfg.d_hR}, 1.0, rng);
  for (std::size_t b = 0; b < 4; ++b) {
    const Tensor Wt = absorbed_weights(cfg, view, "W_UK", 0, cfg.h, b);
    EXPECT_EQ(Wt.shape(), (Shape{cfg.h, cfg.d_h, cfg.d_c / 4}));
    EXPECT_EQ(absorb_query(q, qr, Wt).logit_dim(), cfg.d_c / 4 + cfg.d_hR);
  }
}

TEST(Decode, ReadCountsFollowLoading) {
  for (const char* name : {"mla", "mlra4"}) {
    const AttnConfig cfg = tiny(name);
    const WeightSet w = build_weights(cfg, 0.3, Rng(15));
    const Tensor H = hidden(5, cfg.d, 16);
    KvCache cache = empty_cache(cfg);
    for (std::size_t t = 0; t < H.rows(); ++t) {
      ReadCounter rc;
      absorbed_decode_step(cfg, w, cache, H.row(t), &rc);
      EXPECT_EQ(rc.total(), (t + 1) * (cfg.d_c + cfg.d_hR)) << name;
    }
  }
  const AttnConfig cfg = tiny("mlra4");
  const WeightSet w = build_weights(cfg, 0.3, Rng(17));
  const Tensor H = hidden(4, cfg.d, 18);
  KvCache cache = empty_cache(cfg);
  const WeightView view = WeightView::of(w);
  for (std::size_t t = 0; t < H.rows(); ++t) {
    ReadCounter rc;
    latent_decode_scoped(cfg, view, Scope{0, cfg.h, 2, 3}, cache, H.row(t), DecodeMode::Absorbed, &rc);
    EXPECT_EQ(rc.total(), (t + 1) * (cfg.d_c / 4 + cfg.d_hR));
  }
}

TEST(Decode, WrongHiddenWidthThrows) {
  const AttnConfig cfg = tiny("mla");
  const WeightSet w = build_weights(cfg, 0.3, Rng(19));
  KvCache cache = empty_cache(cfg);
  const std::vector<double> h(cfg.d + 1, 0.0);
  EXPECT_THROW(absorbed_decode_step(cfg, w, cache, h), DimensionError);
}

TEST(Decode, RandomizedSuiteWithinTolerance) {
  const AbsorptionSuite s = absorption_suite({"mla", "gla2", "mlra2", "mlra4"}, 21, 200);
  EXPECT_LE(s.max_rel_err, 1e-10) << "worst trial " << s.worst_trial << " seed 21";
}
