// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include <gtest/gtest.h>

#include "attnkit/cost_model.hpp"
#include "attnkit/error.hpp"
#include "attnkit/selftest.hpp"
#include "attnkit/weights.hpp"

using namespace attnkit;

namespace {

AttnConfig ctx(std::string_view name) { return presets::table1_context(name); }

}  // namespace

TEST(Params, MhaClosedForm) {
  AttnConfig cfg = variant_from_name("mha");
  cfg.d = 3072;
  cfg.h = 24;
  cfg.d_h = 128;
  EXPECT_EQ(param_count(cfg), 37748736);
  EXPECT_EQ(enumerated_param_count(cfg), 37748736);
}

TEST(Params, FormulaMatchesEnumerationForEveryConfig) {
  for (const auto& name : presets::main_rows()) {
    const AttnConfig cfg = presets::main_config(name).attn;
    std::int64_t sum = 0;
    for (const auto& [w, shape] : weight_shapes(cfg)) sum += static_cast<std::int64_t>(shape_size(shape));
    EXPECT_EQ(param_count(cfg), sum) << name;
  }
}

TEST(Params, MlraTwoMatchesGlaTwo) {
  EXPECT_EQ(param_count(presets::main_config("MLRA-2").attn), param_count(presets::main_config("GLA-2").attn));
}

TEST(Params, SelftestCriterion) {
  const CriterionResult r = check_param_formulas();
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Loading, TableCells) {
  EXPECT_EQ(per_device_load(ctx("mla"), 8), Rational(9, 2));
  EXPECT_EQ(per_device_load(ctx("mlra4"), 4), Rational(3, 2));
  EXPECT_EQ(per_device_load(ctx("tpa"), 2), Rational(5));
  for (const auto& name : presets::table1_rows()) EXPECT_EQ(per_device_load(ctx(name), 1), kv_cache_per_token(ctx(name)));
  const CriterionResult r = check_table1_loading();
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Loading, ElementsScaleWithHeadDim) {
  EXPECT_EQ(per_device_load_elements(ctx("mla"), 4), 576);
  EXPECT_EQ(per_device_load_elements(ctx("gqa"), 4), 512);
}

TEST(Loading, UnsupportedDegree) {
  EXPECT_THROW(per_device_load(ctx("mla"), 16), ConfigError);
  EXPECT_THROW(per_device_load(ctx("mla"), 3), ConfigError);
}

TEST(Intensity, Examples) {
  for (std::int64_t n : {1, 17, 100000}) EXPECT_EQ(arithmetic_intensity(ctx("mha"), n), Rational(1));
  EXPECT_EQ(arithmetic_intensity(ctx("gqa"), 9), Rational(64, 8));
  EXPECT_EQ(arithmetic_intensity(ctx("mla"), 9), Rational(17 * 64, 9));
  EXPECT_EQ(ai_asymptotic(ctx("mla")), "2h");
  EXPECT_EQ(ai_asymptotic(ctx("gqa")), "h/g");
  const CriterionResult r = check_arithmetic_intensity();
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Roofline, BalancePointGivesEqualTimes) {
  const HardwareModel hw;
  const double bytes = 1e9, flops = bytes / hw.hbm_bandwidth * hw.peak_flops;
  const RooflineTime t = roofline_decode_time(bytes, flops, hw);
  EXPECT_DOUBLE_EQ(t.memory_seconds, t.compute_seconds);
  EXPECT_DOUBLE_EQ(t.seconds, t.memory_seconds);
}

TEST(Roofline, ZeroFlopsIsPureBandwidth) {
  const HardwareModel hw;
  const RooflineTime t = roofline_decode_time(3.35e9, 0.0, hw);
  EXPECT_DOUBLE_EQ(t.seconds, 1e-3);
  EXPECT_EQ(t.regime, Regime::MemoryBound);
}

TEST(Roofline, MlaOverMlraFourIsThree) {
  const HardwareModel hw;
  const auto a = project_decode(ctx("mla"), 4, 4096, hw), b = project_decode(ctx("mlra4"), 4, 4096, hw);
  EXPECT_EQ(memory_time_ratio(a, b), Rational(3));
  EXPECT_EQ(a.time.regime, Regime::MemoryBound);
  const CriterionResult r = check_roofline();
  EXPECT_TRUE(r.pass) << r.detail;
}

TEST(Roofline, BadHardwareRejected) {
  HardwareModel hw;
  hw.hbm_bandwidth = 0.0;
  EXPECT_THROW(hw.validate(), ConfigError);
}

TEST(Tables, CsvHasUnitHeaders) {
  std::vector<AttnConfig> rows;
  for (const auto& n : presets::table1_rows()) rows.push_back(ctx(n));
  const std::string t1 = table1_csv(rows), t2 = table2_csv(rows);
  EXPECT_NE(t1.find("elements of d_h"), std::string::npos);
  EXPECT_NE(t2.find("flops per element"), std::string::npos);
  EXPECT_NE(t1.find("MLA,101122048,4.5,4.5,4.5,4.5,4.5"), std::string::npos);
  EXPECT_NE(table1_json(rows).find("\"tp4\": \"3/2\""), std::string::npos);
}

TEST(Tables, CsvQuoting) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}

TEST(Placement, PresetsCoverEightDevices) {
  for (const auto& p : placement_presets()) {
    EXPECT_EQ(p.tp * p.dp, 8u) << p.label;
    const PlacementReport r = placement_report(p);
    EXPECT_GT(r.weights_per_device, 0);
    EXPECT_EQ(r.load, per_device_load(p.cfg, p.tp));
  }
}
