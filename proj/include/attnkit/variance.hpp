// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "attnkit/config.hpp"
#include "attnkit/rng.hpp"

namespace attnkit {

/// Minimum sample count accepted by the Monte Carlo estimators.
inline constexpr std::size_t kMinVarianceTrials = 10000;

struct VarianceComponent {
  std::string name;
  double sample = 0.0;
  double predicted = 0.0;
  /// |sample - predicted| / predicted, or 0 when both are 0.
  double rel_dev = 0.0;
  std::size_t samples = 0;
};

struct VarianceRatio {
  std::string name;
  double value = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  bool within() const;
};

struct VarianceReport {
  std::string variant;
  double sigma_w = 0.0;
  bool calibrated = false;
  std::size_t trials = 0;
  /// Weight draws used.
  std::size_t draws = 0;
  std::vector<VarianceComponent> components;
  std::vector<VarianceRatio> ratios;

  const VarianceComponent& component(std::string_view name) const;
  const VarianceRatio& ratio(std::string_view name) const;
  bool all_within() const;
  std::string to_json() const;
};

/// Latent config with the full-size ratios (d/d_c, d/d_cq, d_h^R/d_h) kept
/// and every width divided by 8, h = 4.
AttnConfig variance_config(std::string_view name);

/// Sample variances of K_RoPE, K_NoPE, V, Q_NoPE and Q_RoPE without the
/// rescaling factors. Weights are N(0, sigma_w^2); H rows are Gaussian then
/// RMS-normalized. Draws continue until every component has `trials`
/// samples. Adds the ratio K_RoPE/K_NoPE with target d / block width.
VarianceReport estimate_variances(const AttnConfig& cfg, double sigma_w, std::size_t trials, const Rng& rng);

/// Same measurement with alpha_q and alpha_kv applied; every NoPE and RoPE
/// component should match Var(K_RoPE) within 5%. MLRA also gets the branch
/// output check: Var(sum of branches) against branches x Var(branch), and
/// the alpha_attn-scaled sum against one branch, within 10%.
VarianceReport verify_calibration(const AttnConfig& cfg, double sigma_w, std::size_t trials, const Rng& rng);

}  // namespace attnkit
