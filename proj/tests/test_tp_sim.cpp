// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include <gtest/gtest.h>

#include "attnkit/cost_model.hpp"
#include "attnkit/error.hpp"
#include "attnkit/latent.hpp"
#include "attnkit/selftest.hpp"
#include "attnkit/tp_sim.hpp"

using namespace attnkit;

namespace {

Tensor hidden(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  return gaussian_init({n, d}, 1.0, rng);
}

std::size_t owned_width(const DeviceShard& s, const char* name) { return s.cache.get(name).owned().size(); }

}  // namespace

TEST(Shards, MlraFourOwnsOneLatentBlockPerDevice) {
  const AttnConfig cfg = ledger_context("mlra4");
  const WeightSet w = build_weights(cfg, 0.05, Rng(1));
  const ShardPlan plan = make_shards(cfg, w, 4);
  ASSERT_EQ(plan.shards.size(), 4u);
  EXPECT_EQ(plan.expected, ReductionKind::Sum);
  for (std::size_t b = 0; b < 4; ++b) {
    const DeviceShard& s = plan.shards[b];
    EXPECT_EQ(s.scope.block_begin, b);
    EXPECT_EQ(owned_width(s, "C_KV"), cfg.d_c / 4);
    EXPECT_EQ(s.cache.get("C_KV").owned().front(), b * cfg.d_c / 4);
    EXPECT_EQ(owned_width(s, "K_R"), cfg.d_hR);
  }
  verify_shards(plan, w);
}

TEST(Shards, MlaReplicatesTheWholeLatent) {
  const AttnConfig cfg = ledger_context("mla");
  const WeightSet w = build_weights(cfg, 0.05, Rng(2));
  const ShardPlan plan = make_shards(cfg, w, 4);
  EXPECT_EQ(plan.expected, ReductionKind::Concat);
  for (const auto& s : plan.shards) {
    EXPECT_EQ(owned_width(s, "C_KV"), cfg.d_c);
    EXPECT_EQ(s.scope.heads(), cfg.h / 4);
  }
}

TEST(Shards, SingleDeviceOwnsEverything) {
  const AttnConfig cfg = ledger_context("gqa");
  const WeightSet w = build_weights(cfg, 0.05, Rng(3));
  const ShardPlan plan = make_shards(cfg, w, 1);
  ASSERT_EQ(plan.shards.size(), 1u);
  EXPECT_EQ(plan.shards[0].cache.stored_per_token(), plan.shards[0].cache.width_per_token());
}

TEST(Shards, UnsupportedDegreeRejected) {
  const AttnConfig cfg = ledger_context("mla");
  const WeightSet w = build_weights(cfg, 0.05, Rng(4));
  EXPECT_THROW(make_shards(cfg, w, 16), ConfigError);
}

TEST(Shards, StaleWeightDetected) {
  const AttnConfig cfg = ledger_context("gla2");
  WeightSet w = build_weights(cfg, 0.05, Rng(5));
  const ShardPlan plan = make_shards(cfg, w, 2);
  w.at("W_UK").data()[0] += 1.0;
  EXPECT_THROW(verify_shards(plan, w), IntegrityError);
}

TEST(SimDecode, MlraFourMatchesSingleDevice) {
  Rng rng(6);
  const AttnConfig cfg = random_tiny_config("mlra4", rng, 8);
  const WeightSet w = build_weights(cfg, kTinySigma, Rng(7));
  ShardPlan plan = make_shards(cfg, w, 4);
  KvCache single = make_cache(cfg);
  const Tensor H = hidden(5, cfg.d, 8);
  for (std::size_t t = 0; t < H.rows(); ++t) {
    const SimResult r = sim_decode(plan, H.row(t));
    EXPECT_EQ(r.kind, ReductionKind::Sum);
    EXPECT_LE(max_rel_diff(r.o, single_device_decode(cfg, w, single, H.row(t)), 1e-30), 1e-10);
  }
}

TEST(SimDecode, LedgerMatchesCostModel) {
  struct Case {
    const char* name;
    std::size_t phi;
    Rational load;
  };
  for (const Case& c : {Case{"mla", 1, Rational(9, 2)}, Case{"mla", 2, Rational(9, 2)}, Case{"mla", 4, Rational(9, 2)},
                        Case{"mla", 8, Rational(9, 2)}, Case{"gqa", 4, Rational(4)}, Case{"mlra4", 4, Rational(3, 2)}}) {
    const AttnConfig cfg = ledger_context(c.name);
    const WeightSet w = build_weights(cfg, 0.05, Rng(9));
    ShardPlan plan = make_shards(cfg, w, c.phi);
    const Tensor H = hidden(3, cfg.d, 10);
    for (std::size_t t = 0; t < H.rows(); ++t) {
      const SimResult r = sim_decode(plan, H.row(t));
      for (auto reads : r.ledger.reads) {
        EXPECT_EQ(Rational(static_cast<std::int64_t>(reads), static_cast<std::int64_t>(cfg.d_h * r.ledger.n)), c.load)
            << c.name << " TP=" << c.phi;
      }
    }
  }
}

TEST(SimDecode, MlaTensorParallelReplicatesLatentReads) {
  const AttnConfig cfg = ledger_context("mla");
  const WeightSet w = build_weights(cfg, 0.05, Rng(11));
  ShardPlan plan = make_shards(cfg, w, 4);
  const SimResult r = sim_decode(plan, hidden(1, cfg.d, 12).row(0));
  EXPECT_EQ(r.ledger.readers.at("C_KV").size(), 4u);
  EXPECT_NE(std::find(r.ledger.replicated.begin(), r.ledger.replicated.end(), "C_KV"), r.ledger.replicated.end());
}

TEST(SimDecode, EveryPairMatches) {
  const CriterionResult r = check_tensor_parallel(13, 1);
  EXPECT_TRUE(r.pass) << r.detail;
}
