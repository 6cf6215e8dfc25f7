// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "attnkit/config.hpp"
#include "attnkit/rng.hpp"

namespace attnkit {

struct CriterionResult {
  int id = 0;
  std::string title;
  bool pass = false;
  std::string detail;
};

/// Small random config for `name`: h in {2, 4, 6, 8} (times h_multiple
/// when given), d_h in {4, 8}, d_hR in {2, 4}, d_c = 4 d_h, d in {16, 32}.
AttnConfig random_tiny_config(std::string_view name, Rng& rng, std::size_t h_multiple = 1);

/// Table 1 context with d = 16 (and d_cq = 32 where used) so that full
/// decode steps stay cheap. Cache widths are unchanged.
AttnConfig ledger_context(std::string_view name);

/// Weight scale used for the randomized equivalence suites.
inline constexpr double kTinySigma = 0.3;

struct AbsorptionSuite {
  std::uint64_t seed = 0;
  std::size_t trials = 0;
  std::size_t steps = 0;
  double max_rel_err = 0.0;
  std::size_t worst_trial = 0;
  std::string worst_variant;
};

/// Naive against absorbed decoding. Trial t draws a tiny config for
/// names[t % names.size()] unless `fixed` is given, then 1 to 8 decode steps.
AbsorptionSuite absorption_suite(const std::vector<std::string>& names, std::uint64_t seed, std::size_t trials,
                                 const std::optional<AttnConfig>& fixed = std::nullopt);

/// Table 1 loading cells: 10 rows x 4 TP degrees, exact.
CriterionResult check_table1_loading();
/// Closed-form parameter counts against weight-shape enumeration.
CriterionResult check_param_formulas();
/// Table 2 intensities.
CriterionResult check_arithmetic_intensity();
/// Naive vs absorbed decoding over MLA, GLA-2, MLRA-2 and MLRA-4.
CriterionResult check_absorption(std::uint64_t seed, std::size_t trials = 1000);
/// Four- and two-block reconstruction identities.
CriterionResult check_block_identities(std::uint64_t seed, std::size_t trials = 500);
/// MLRA-4 and MLA with shared weights give different outputs.
CriterionResult check_mlra_separation(std::uint64_t seed, std::size_t configs = 200);
/// RoPE translation equivariance and its failure after a projection.
CriterionResult check_rope(std::uint64_t seed, std::size_t trials = 1000);
/// Monte Carlo variance calibration and symbolic scaling factors.
CriterionResult check_variance(std::uint64_t seed, std::size_t trials = 100000);
/// Distributed decode equality, traffic ledger and reduction kinds.
CriterionResult check_tensor_parallel(std::uint64_t seed, std::size_t trials_per_pair = 5);
/// Memory-bound decode-time ratio MLA : MLRA-4 at TP=4.
CriterionResult check_roofline();

struct SelftestReport {
  std::uint64_t seed = 0;
  std::vector<CriterionResult> results;

  bool all_pass() const;
  /// One "PASS"/"FAIL" line per criterion plus its detail.
  std::string to_text() const;
  std::string to_json() const;
};

/// Criteria 1 to 10 in order. Output depends only on the seed.
SelftestReport run_selftest(std::uint64_t seed);

}  // namespace attnkit
