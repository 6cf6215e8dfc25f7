// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/cost_model.hpp"

#include <algorithm>

#include <fmt/format.h>
#include <json.hpp>

#include "attnkit/error.hpp"
#include "attnkit/weights.hpp"

namespace attnkit {

namespace {

using I = std::int64_t;

I i64(std::size_t v) { return static_cast<I>(v); }

Rational q(std::size_t v) { return Rational(i64(v)); }

/// Latent width read by one device per branch under TP degree phi.
Rational latent_share(const AttnConfig& cfg, std::size_t phi) {
  std::size_t parts = 1;
  if (cfg.variant == Variant::GLA) parts = std::min(phi, cfg.g);
  if (cfg.variant == Variant::MLRA) parts = std::min<std::size_t>(phi, 4);
  return Rational(i64(cfg.d_c), i64(parts));
}

}  // namespace

void check_tp_degree(std::size_t phi) {
  if (std::find(kTpDegrees.begin(), kTpDegrees.end(), phi) == kTpDegrees.end()) {
    throw ConfigError(fmt::format("unsupported TP degree {} (expected one of 1, 2, 4, 8)", phi));
  }
}

std::int64_t param_count(const AttnConfig& cfg) {
  validate(cfg);
  const I d = i64(cfg.d), h = i64(cfg.h), dh = i64(cfg.d_h), dr = i64(cfg.d_hR), dc = i64(cfg.d_c),
          dcq = i64(cfg.d_cq), g = i64(cfg.g);
  I p = 0;
  switch (cfg.variant) {
    case Variant::MHA:
      p = 4 * d * h * dh;
      break;
    case Variant::MQA:
      p = 2 * d * dh * (h + 1);
      break;
    case Variant::GQA:
      p = 2 * d * dh * (h + g);
      break;
    case Variant::MLA:
      p = dcq * (d + h * dh + h * dr) + d * dr + dc * (d + 2 * h * dh) + d * h * dh;
      break;
    case Variant::MFA:
      p = dcq * (d + h * 2 * dh) + 2 * d * 2 * dh + d * h * 2 * dh;
      break;
    case Variant::TPA:
      p = d * (i64(cfg.beta_q) + 2 * i64(cfg.beta_kv)) * (h + dh) + d * h * dh;
      break;
    case Variant::GLA:
      p = dcq * (d + h * dh + h * dr) + d * dr + dc * (d + 2 * h * dh / g) + d * h * dh;
      break;
    case Variant::GTA:
      p = d * h * dh + d * g * dh + d * dr + d * h * dh;
      break;
    case Variant::MLRA:
      p = dcq * (d + h * dh + h * dr) + d * dr + dc * (d + (cfg.branches == 4 ? 2 : 1) * h * dh) + d * h * dh;
      break;
  }
  if (cfg.gated) p += d * h * i64(head_out_dim(cfg));
  return p;
}

std::int64_t enumerated_param_count(const AttnConfig& cfg) {
  I total = 0;
  for (const auto& [name, shape] : weight_shapes(cfg)) total += i64(shape_size(shape));
  return total;
}

std::int64_t model_param_count(const presets::ModelConfig& m) {
  const AttnConfig& a = m.attn;
  const I d = i64(a.d);
  I latent_norms = 0;
  if (is_latent(a.variant)) latent_norms = i64(a.d_cq + a.d_c);
  if (a.variant == Variant::MFA) latent_norms = i64(a.d_cq);
  const I per_layer = param_count(a) + 3 * d * i64(m.d_f) + 2 * d + latent_norms;
  return i64(m.vocab) * d + i64(m.layers) * per_layer + d;
}

Rational kv_cache_per_token(const AttnConfig& cfg) {
  validate(cfg);
  const Rational dh = q(cfg.d_h);
  switch (cfg.variant) {
    case Variant::MHA:
      return Rational(2 * i64(cfg.h));
    case Variant::MQA:
      return Rational(2);
    case Variant::GQA:
      return Rational(2 * i64(cfg.g));
    case Variant::MFA:
      return Rational(4);
    case Variant::TPA:
      return Rational(2 * i64(cfg.beta_kv) * i64(cfg.h + cfg.d_h)) / dh;
    case Variant::GTA:
      return (q(cfg.g * cfg.d_h) + q(cfg.d_hR)) / dh;
    case Variant::MLA:
    case Variant::GLA:
    case Variant::MLRA:
      return (q(cfg.d_c) + q(cfg.d_hR)) / dh;
  }
  return Rational(0);
}

Rational per_device_load(const AttnConfig& cfg, std::size_t phi) {
  check_tp_degree(phi);
  validate(cfg);
  const Rational dh = q(cfg.d_h);
  switch (cfg.variant) {
    case Variant::MHA:
      return Rational(2 * i64(cfg.h), i64(phi));
    case Variant::MQA:
      return Rational(2);
    case Variant::GQA:
      return Rational(2 * i64(cfg.g), i64(std::min(phi, cfg.g)));
    case Variant::MFA:
      return Rational(4);
    case Variant::TPA:
      return Rational(2 * i64(cfg.beta_kv)) + Rational(2 * i64(cfg.beta_kv) * i64(cfg.h), i64(phi * cfg.d_h));
    case Variant::GTA:
      return Rational(i64(cfg.g), i64(std::min(phi, cfg.g))) + q(cfg.d_hR) / dh;
    case Variant::MLA:
    case Variant::GLA:
    case Variant::MLRA:
      return (latent_share(cfg, phi) + q(cfg.d_hR)) / dh;
  }
  return Rational(0);
}

std::int64_t per_device_load_elements(const AttnConfig& cfg, std::size_t phi) {
  const Rational e = per_device_load(cfg, phi) * q(cfg.d_h);
  if (e.denominator() != 1) {
    throw ConfigError(fmt::format("{}: per-device load {} d_h is not a whole number of elements", variant_label(cfg),
                                  rational_string(per_device_load(cfg, phi))));
  }
  return e.numerator();
}

Rational arithmetic_intensity(const AttnConfig& cfg, std::int64_t n) {
  if (n < 1) throw ConfigError(fmt::format("arithmetic intensity needs n >= 1, got {}", n));
  validate(cfg);
  const Rational N(n), h = q(cfg.h), dh = q(cfg.d_h), dr = q(cfg.d_hR), dc = q(cfg.d_c), g = q(cfg.g),
                 beta = q(cfg.beta_kv);
  switch (cfg.variant) {
    case Variant::MHA:
      return (4 * N * h * dh) / (4 * N * h * dh);
    case Variant::MQA:
      return (4 * N * h * dh) / (4 * N * dh);
    case Variant::GQA:
      return (4 * N * h * dh) / (4 * N * g * dh);
    case Variant::MLA:
      return (4 * N * h * dc + 2 * N * h * dr) / (2 * N * (dc + dr));
    case Variant::MFA:
      return (4 * N * h * 2 * dh) / (4 * N * 2 * dh);
    case Variant::TPA:
      return (4 * N * h * beta * dh + 4 * N * h * dh) / (4 * N * beta * (h + dh));
    case Variant::GLA: {
      const Rational part = dc / g;
      return (2 * N * h * part + N * h * dr) / (2 * N * (part + dr));
    }
    case Variant::GTA:
      return (4 * N * h * dh) / (2 * N * (g * dh + dr));
    case Variant::MLRA: {
      const Rational part = dc / 4;
      if (cfg.branches == 2) return (2 * N * h * part + N * h * dr) / (2 * N * (part + dr));
      return (4 * N * h * part + 2 * N * h * dr) / (2 * N * (part + dr));
    }
  }
  return Rational(0);
}

std::string ai_asymptotic(const AttnConfig& cfg) {
  switch (cfg.variant) {
    case Variant::MHA:
      return "1";
    case Variant::MQA:
    case Variant::MFA:
    case Variant::GLA:
      return "h";
    case Variant::GQA:
      return "h/g";
    case Variant::MLA:
      return "2h";
    case Variant::TPA:
      return "(1+beta_kv)h*d_h/(beta_kv(h+d_h))";
    case Variant::GTA:
      return "2h/g";
    case Variant::MLRA:
      return cfg.branches == 2 ? "h" : "2h";
  }
  return "";
}

void HardwareModel::validate() const {
  if (!(hbm_bandwidth > 0.0) || !(peak_flops > 0.0) || bytes_per_element <= 0) {
    throw ConfigError("hardware model needs positive bandwidth, peak flops and bytes per element");
  }
}

const char* regime_name(Regime r) { return r == Regime::MemoryBound ? "memory-bound" : "compute-bound"; }

RooflineTime roofline_decode_time(double bytes_moved, double flops, const HardwareModel& hw) {
  hw.validate();
  if (bytes_moved < 0.0 || flops < 0.0) throw ConfigError("roofline inputs must be non-negative");
  RooflineTime t;
  t.memory_seconds = bytes_moved / hw.hbm_bandwidth;
  t.compute_seconds = flops / hw.peak_flops;
  t.regime = t.compute_seconds > t.memory_seconds ? Regime::ComputeBound : Regime::MemoryBound;
  t.seconds = std::max(t.memory_seconds, t.compute_seconds);
  return t;
}

DecodeProjection project_decode(const AttnConfig& cfg, std::size_t phi, std::int64_t n, const HardwareModel& hw) {
  hw.validate();
  DecodeProjection p;
  p.variant = variant_label(cfg);
  p.phi = phi;
  p.n = n;
  p.elements = per_device_load_elements(cfg, phi) * n;
  p.bytes = p.elements * hw.bytes_per_element;
  p.flops = arithmetic_intensity(cfg, n) * Rational(p.elements);
  p.time = roofline_decode_time(static_cast<double>(p.bytes), to_double(p.flops), hw);
  return p;
}

Rational memory_time_ratio(const DecodeProjection& a, const DecodeProjection& b) {
  return Rational(a.bytes, b.bytes);
}

CostReport cost_report(const AttnConfig& cfg) {
  CostReport r;
  r.variant = variant_label(cfg);
  r.params_per_layer = param_count(cfg);
  r.kv_cache = kv_cache_per_token(cfg);
  for (std::size_t k = 0; k < kTpDegrees.size(); ++k) r.load[k] = per_device_load(cfg, kTpDegrees[k]);
  r.ai = arithmetic_intensity(cfg, 1);
  r.ai_tag = ai_asymptotic(cfg);
  return r;
}

std::vector<Placement> placement_presets() {
  auto make = [](const char* name, std::size_t tp, std::size_t dp) {
    AttnConfig cfg = presets::table1_context(name);
    cfg.h = 128;
    if (cfg.variant == Variant::GQA) cfg.g = 16;
    return Placement{fmt::format("{} TP={}/DP={}", variant_label(cfg), tp, dp), cfg, tp, dp};
  };
  return {make("mla", 1, 8), make("gla2", 2, 4), make("mlra4", 4, 2), make("gqa", 8, 1)};
}

PlacementReport placement_report(const Placement& p) {
  check_tp_degree(p.tp);
  PlacementReport r{p.label, p.tp, p.dp, 0, per_device_load(p.cfg, p.tp)};
  for (const auto& [name, shape] : weight_shapes(p.cfg)) {
    const I size = i64(shape_size(shape));
    const bool replicated = name == "W_DQ" || name == "W_DKV" || name == "W_KR";
    r.weights_per_device += replicated ? size : size / i64(p.tp);
  }
  return r;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string table1_csv(const std::vector<AttnConfig>& rows) {
  std::string out =
      "method,params_per_layer (elements),kv_cache_per_token (elements of d_h),"
      "load_tp1 (elements of d_h),load_tp2 (elements of d_h),load_tp4 (elements of d_h),"
      "load_tp8 (elements of d_h)\n";
  for (const auto& cfg : rows) {
    const CostReport r = cost_report(cfg);
    out += fmt::format("{},{},{}", csv_field(r.variant), r.params_per_layer, rational_decimal(r.kv_cache));
    for (const auto& l : r.load) out += "," + rational_decimal(l);
    out += "\n";
  }
  return out;
}

std::string table2_csv(const std::vector<AttnConfig>& rows) {
  std::string out = "method,ai_exact (flops per element),ai_decimal (flops per element),ai_asymptotic\n";
  for (const auto& cfg : rows) {
    const CostReport r = cost_report(cfg);
    out += fmt::format("{},{},{},{}\n", csv_field(r.variant), csv_field(rational_string(r.ai)),
                       rational_decimal(r.ai), csv_field(r.ai_tag));
  }
  return out;
}

std::string table1_json(const std::vector<AttnConfig>& rows) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& cfg : rows) {
    const CostReport r = cost_report(cfg);
    nlohmann::ordered_json row;
    row["method"] = r.variant;
    row["params_per_layer"] = r.params_per_layer;
    row["kv_cache_per_token_dh"] = rational_string(r.kv_cache);
    nlohmann::ordered_json load;
    for (std::size_t k = 0; k < kTpDegrees.size(); ++k) {
      load[fmt::format("tp{}", kTpDegrees[k])] = rational_string(r.load[k]);
    }
    row["load_per_device_dh"] = load;
    doc.push_back(row);
  }
  return doc.dump(2) + "\n";
}

std::string table2_json(const std::vector<AttnConfig>& rows) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& cfg : rows) {
    const CostReport r = cost_report(cfg);
    nlohmann::ordered_json row;
    row["method"] = r.variant;
    row["ai_exact"] = rational_string(r.ai);
    row["ai_decimal"] = to_double(r.ai);
    row["ai_asymptotic"] = r.ai_tag;
    doc.push_back(row);
  }
  return doc.dump(2) + "\n";
}

}  // namespace attnkit
