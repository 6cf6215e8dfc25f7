// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "attnkit/config.hpp"
#include "attnkit/rational.hpp"

namespace attnkit {

/// Supported tensor-parallel degrees.
inline constexpr std::array<std::size_t, 4> kTpDegrees{1, 2, 4, 8};

/// Throws ConfigError "unsupported TP degree" for anything outside kTpDegrees.
void check_tp_degree(std::size_t phi);

/// Attention parameters of one layer from the closed-form count. A gated
/// config adds the d x (h * head width) gate.
std::int64_t param_count(const AttnConfig& cfg);

/// The same quantity by summing the element counts of weight_shapes().
std::int64_t enumerated_param_count(const AttnConfig& cfg);

/// Whole-model parameters: embeddings (tied), per-layer attention, SwiGLU
/// MLP, RMSNorm gains and the final norm.
std::int64_t model_param_count(const presets::ModelConfig& m);

/// KV cache elements per token, in units of d_h.
Rational kv_cache_per_token(const AttnConfig& cfg);

/// Cache elements one device reads per past token, in units of d_h.
Rational per_device_load(const AttnConfig& cfg, std::size_t phi);

/// per_device_load as an integer element count.
std::int64_t per_device_load_elements(const AttnConfig& cfg, std::size_t phi);

/// Decode arithmetic intensity (flops per cache element) over a context of n tokens.
Rational arithmetic_intensity(const AttnConfig& cfg, std::int64_t n);

/// Leading-order form of the intensity, e.g. "2h" or "h/g".
std::string ai_asymptotic(const AttnConfig& cfg);

struct HardwareModel {
  double hbm_bandwidth = 3.35e12;  // bytes/s
  double peak_flops = 989e12;      // flops/s
  int bytes_per_element = 2;

  void validate() const;
};

enum class Regime { MemoryBound, ComputeBound };
const char* regime_name(Regime r);

struct RooflineTime {
  double seconds = 0.0;
  double memory_seconds = 0.0;
  double compute_seconds = 0.0;
  Regime regime = Regime::MemoryBound;
};

/// max(bytes / bandwidth, flops / peak); ties count as memory-bound.
RooflineTime roofline_decode_time(double bytes_moved, double flops, const HardwareModel& hw);

/// One decode step of attention on one device over n cached tokens.
struct DecodeProjection {
  std::string variant;
  std::size_t phi = 1;
  std::int64_t n = 0;
  std::int64_t elements = 0;
  /// Exact byte count per device.
  std::int64_t bytes = 0;
  /// Flops per device: intensity times elements read.
  Rational flops{0};
  RooflineTime time;
};

DecodeProjection project_decode(const AttnConfig& cfg, std::size_t phi, std::int64_t n, const HardwareModel& hw);

/// Memory-bound time ratio a / b from exact byte counts.
Rational memory_time_ratio(const DecodeProjection& a, const DecodeProjection& b);

struct CostReport {
  std::string variant;
  std::int64_t params_per_layer = 0;
  Rational kv_cache{0};
  std::array<Rational, 4> load{};
  Rational ai{0};
  std::string ai_tag;
};

CostReport cost_report(const AttnConfig& cfg);

/// A TP x DP deployment on tp * dp devices.
struct Placement {
  std::string label;
  AttnConfig cfg;
  std::size_t tp = 1;
  std::size_t dp = 1;
};

struct PlacementReport {
  std::string label;
  std::size_t tp = 1;
  std::size_t dp = 1;
  /// Attention weight elements held by one device.
  std::int64_t weights_per_device = 0;
  Rational load{0};
};

/// MLA DP=8, GLA-2 TP=2/DP=4, MLRA-4 TP=4/DP=2 and GQA TP=8 on an
/// h=128, d=7168 model.
std::vector<Placement> placement_presets();
PlacementReport placement_report(const Placement& p);

// Serialization. CSV headers carry units; JSON keys keep insertion order.
std::string table1_csv(const std::vector<AttnConfig>& rows);
std::string table2_csv(const std::vector<AttnConfig>& rows);
std::string table1_json(const std::vector<AttnConfig>& rows);
std::string table2_json(const std::vector<AttnConfig>& rows);

/// Quotes a CSV field when it holds a comma, quote or newline.
std::string csv_field(const std::string& s);

}  // namespace attnkit
