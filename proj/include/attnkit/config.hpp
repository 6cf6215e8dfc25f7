// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace attnkit {

enum class Variant { MHA, MQA, GQA, MLA, MFA, TPA, GLA, GTA, MLRA };

/// Architecture hyperparameters. A zero dimension means "not set".
struct AttnConfig {
  Variant variant = Variant::MHA;
  std::size_t h = 0;
  std::size_t d = 0;
  std::size_t d_h = 0;
  /// Partial-RoPE width.
  std::size_t d_hR = 0;
  /// Latent KV width.
  std::size_t d_c = 0;
  /// Latent query width.
  std::size_t d_cq = 0;
  /// KV heads (GQA/GTA) or latent groups (GLA).
  std::size_t g = 0;
  std::size_t beta_q = 0;
  std::size_t beta_kv = 0;
  /// MLRA branch count, 2 or 4.
  std::size_t branches = 0;
  bool scaling_enabled = true;
  bool gated = false;
  double rope_base = 10000.0;
  double eps = 1e-6;

  bool operator==(const AttnConfig&) const = default;
};

bool is_latent(Variant v);

/// Display name such as "GLA-2" or "MLRA-4".
std::string variant_label(const AttnConfig& cfg);

/// Parses "mha", "gla2", "GLA-4", "mlra-2", ... into a config with only
/// the variant and its group/branch count set.
AttnConfig variant_from_name(std::string_view name);

/// Every spelling accepted by variant_from_name, in canonical form.
std::vector<std::string> variant_names();

/// Fills d_c = 4 d_h and d_hR = d_h / 2 where unset.
AttnConfig with_latent_defaults(AttnConfig cfg);

/// Throws ConfigError listing missing or inconsistent fields.
void validate(const AttnConfig& cfg);

/// Softmax temperature tau.
double score_scale(const AttnConfig& cfg);

/// Per-head attention output width (2 d_h for MFA).
std::size_t head_out_dim(const AttnConfig& cfg);

/// Number of cached K/V heads for head-cache variants and GTA.
std::size_t kv_heads(const AttnConfig& cfg);

/// Query heads served by one KV head.
std::size_t heads_per_kv(const AttnConfig& cfg);

namespace presets {

/// Table-style context: h=64, g=8, d_h=128, d_hR=64, d_c=512, beta_kv=2.
AttnConfig table1_context(std::string_view name);
std::vector<std::string> table1_rows();

/// Full-size 24-layer configurations used for parameter accounting.
struct ModelConfig {
  AttnConfig attn;
  std::size_t layers = 0;
  std::size_t d_f = 0;
  std::size_t vocab = 0;
  /// Reported total in millions, two decimals.
  double reported_millions = 0.0;
};
ModelConfig main_config(std::string_view name);
std::vector<std::string> main_rows();

}  // namespace presets

}  // namespace attnkit
