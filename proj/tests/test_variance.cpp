// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include <gtest/gtest.h>

#include "attnkit/error.hpp"
#include "attnkit/variance.hpp"

using namespace attnkit;

TEST(VarianceConfig, KeepsRatios) {
  const AttnConfig cfg = variance_config("mla");
  const AttnConfig full = presets::main_config("mla").attn;
  EXPECT_EQ(cfg.d * full.d_c, full.d * cfg.d_c);
  EXPECT_EQ(cfg.d * full.d_cq, full.d * cfg.d_cq);
  EXPECT_EQ(cfg.h, 4u);
  EXPECT_THROW(variance_config("gqa"), ConfigError);
}

TEST(Variance, RopeKeyMatchesFormula) {
  AttnConfig cfg = variance_config("mla");
  cfg.d = 256;
  const VarianceReport r = estimate_variances(cfg, 0.02, 100000, Rng(1));
  EXPECT_NEAR(r.component("K_RoPE").sample, 256 * 4e-4, 0.03 * 256 * 4e-4);
}

TEST(Variance, ZeroWeightsGiveZeroVariance) {
  const VarianceReport r = estimate_variances(variance_config("mla"), 0.0, 10000, Rng(2));
  for (const auto& c : r.components) EXPECT_EQ(c.sample, 0.0) << c.name;
}

TEST(Variance, UncalibratedMismatchIsDOverDc) {
  const AttnConfig cfg = variance_config("mla");
  const VarianceReport r = estimate_variances(cfg, 0.02, 100000, Rng(3));
  const VarianceRatio& q = r.ratio("K_RoPE/K_NoPE");
  EXPECT_DOUBLE_EQ(q.target, static_cast<double>(cfg.d) / static_cast<double>(cfg.d_c));
  EXPECT_TRUE(q.within()) << q.value;
  EXPECT_FALSE(r.calibrated);
}

TEST(Variance, CalibratedRatiosNearOne) {
  const VarianceReport r = verify_calibration(variance_config("mla"), 0.02, 100000, Rng(4));
  EXPECT_TRUE(r.calibrated);
  for (const auto& q : r.ratios) {
    EXPECT_GE(q.value, 0.95) << q.name;
    EXPECT_LE(q.value, 1.05) << q.name;
  }
}

TEST(Variance, MlraFourBranchParity) {
  const VarianceReport r = verify_calibration(variance_config("mlra4"), 0.02, 100000, Rng(5));
  EXPECT_TRUE(r.ratio("O_branch_sum/O_branch").within()) << r.ratio("O_branch_sum/O_branch").value;
  EXPECT_TRUE(r.ratio("alpha_attn^2*O_branch_sum/O_branch").within());
}

TEST(Variance, TooFewTrialsRejected) {
  EXPECT_THROW(estimate_variances(variance_config("mla"), 0.02, 100, Rng(6)), ConfigError);
}

TEST(Variance, SeededAndDeterministic) {
  const AttnConfig cfg = variance_config("gla2");
  EXPECT_EQ(estimate_variances(cfg, 0.02, 10000, Rng(7)).to_json(),
            estimate_variances(cfg, 0.02, 10000, Rng(7)).to_json());
}
