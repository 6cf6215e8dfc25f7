// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "attnkit/error.hpp"
#include "attnkit/rational.hpp"

namespace attnkit {

// Rational formatting.

std::string rational_string(const Rational& r) {
  if (r.denominator() == 1) return fmt::format("{}", r.numerator());
  return fmt::format("{}/{}", r.numerator(), r.denominator());
}

double to_double(const Rational& r) {
  return static_cast<double>(r.numerator()) / static_cast<double>(r.denominator());
}

std::string rational_decimal(const Rational& r, int digits) {
  std::string s = fmt::format("{:.{}f}", to_double(r), digits);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  return s;
}

namespace {

// Largest k with k^2 | n, returned with the squarefree remainder.
std::pair<std::int64_t, std::int64_t> split_square(std::int64_t n) {
  std::int64_t outside = 1, inside = n;
  for (std::int64_t f = 2; f * f <= inside; ++f) {
    while (inside % (f * f) == 0) {
      inside /= f * f;
      outside *= f;
    }
  }
  return {outside, inside};
}

}  // namespace

std::string sqrt_string(const Rational& square) {
  if (square.numerator() < 0) throw ConfigError("sqrt_string: negative argument");
  if (square.numerator() == 0) return "0";
  // sqrt(p/q) = sqrt(p*q)/q = k*sqrt(m)/q
  const std::int64_t p = square.numerator(), q = square.denominator();
  auto [k, m] = split_square(p * q);
  const Rational coeff(k, q);
  if (m == 1) return rational_string(coeff);
  std::string out = coeff.numerator() == 1 ? fmt::format("√{}", m) : fmt::format("{}√{}", coeff.numerator(), m);
  if (coeff.denominator() != 1) out += fmt::format("/{}", coeff.denominator());
  return out;
}

bool is_latent(Variant v) { return v == Variant::MLA || v == Variant::GLA || v == Variant::MLRA; }

std::string variant_label(const AttnConfig& cfg) {
  switch (cfg.variant) {
    case Variant::MHA: return "MHA";
    case Variant::MQA: return "MQA";
    case Variant::GQA: return "GQA";
    case Variant::MLA: return "MLA";
    case Variant::MFA: return "MFA";
    case Variant::TPA: return "TPA";
    case Variant::GLA: return fmt::format("GLA-{}", cfg.g);
    case Variant::GTA: return "GTA";
    case Variant::MLRA: return fmt::format("MLRA-{}", cfg.branches);
  }
  return "?";
}

AttnConfig variant_from_name(std::string_view name) {
  std::string key;
  for (char c : name) {
    if (c == '-' || c == '_') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  AttnConfig cfg;
  if (key == "mha") {
    cfg.variant = Variant::MHA;
  } else if (key == "mqa") {
    cfg.variant = Variant::MQA;
    cfg.g = 1;
  } else if (key == "gqa") {
    cfg.variant = Variant::GQA;
  } else if (key == "mla") {
    cfg.variant = Variant::MLA;
  } else if (key == "mfa") {
    cfg.variant = Variant::MFA;
    cfg.g = 1;
  } else if (key == "tpa") {
    cfg.variant = Variant::TPA;
  } else if (key == "gta") {
    cfg.variant = Variant::GTA;
  } else if (key.starts_with("gla") && key.size() > 3 && std::all_of(key.begin() + 3, key.end(), ::isdigit)) {
    cfg.variant = Variant::GLA;
    cfg.g = std::stoul(key.substr(3));
  } else if (key == "mlra2" || key == "mlra4") {
    cfg.variant = Variant::MLRA;
    cfg.branches = key == "mlra2" ? 2 : 4;
  } else {
    throw ConfigError(fmt::format("unknown variant '{}' (expected one of: {})", name, fmt::join(variant_names(), ", ")));
  }
  return cfg;
}

std::vector<std::string> variant_names() {
  return {"mha", "mqa", "gqa", "mla", "mfa", "tpa", "gla2", "gla4", "gta", "mlra2", "mlra4"};
}

AttnConfig with_latent_defaults(AttnConfig cfg) {
  const bool wants_rope_split = is_latent(cfg.variant) || cfg.variant == Variant::GTA;
  if (is_latent(cfg.variant) && cfg.d_c == 0) cfg.d_c = 4 * cfg.d_h;
  if (wants_rope_split && cfg.d_hR == 0) cfg.d_hR = cfg.d_h / 2;
  if (cfg.variant == Variant::MLRA && cfg.branches == 2 && cfg.g == 0) cfg.g = 2;
  return cfg;
}

void validate(const AttnConfig& cfg) {
  std::vector<std::string> missing;
  auto need = [&](std::size_t value, const char* field) {
    if (value == 0) missing.emplace_back(field);
  };
  need(cfg.h, "h");
  need(cfg.d, "d");
  need(cfg.d_h, "d_h");
  switch (cfg.variant) {
    case Variant::MHA:
    case Variant::MQA:
      break;
    case Variant::GQA:
      need(cfg.g, "g");
      break;
    case Variant::MFA:
      need(cfg.d_cq, "d_cq");
      break;
    case Variant::TPA:
      need(cfg.beta_q, "beta_q");
      need(cfg.beta_kv, "beta_kv");
      break;
    case Variant::GTA:
      need(cfg.g, "g");
      need(cfg.d_hR, "d_hR");
      break;
    case Variant::GLA:
      need(cfg.g, "g");
      [[fallthrough]];
    case Variant::MLA:
    case Variant::MLRA:
      need(cfg.d_hR, "d_hR");
      need(cfg.d_c, "d_c");
      need(cfg.d_cq, "d_cq");
      if (cfg.variant == Variant::MLRA) need(cfg.branches, "branches");
      break;
  }
  if (!missing.empty()) {
    throw ConfigError(fmt::format("{} config is missing: {}", variant_label(cfg), fmt::join(missing, ", ")));
  }
  auto fail = [&](const std::string& why) { throw ConfigError(fmt::format("{} config: {}", variant_label(cfg), why)); };
  const bool kv_grouped = cfg.variant == Variant::GQA || cfg.variant == Variant::GTA || cfg.variant == Variant::GLA;
  if (kv_grouped && cfg.h % cfg.g != 0) fail(fmt::format("h={} is not divisible by g={}", cfg.h, cfg.g));
  if (cfg.variant == Variant::MQA && cfg.g > 1) fail("MQA uses a single KV head");
  if (cfg.variant == Variant::GLA && cfg.d_c % cfg.g != 0) fail(fmt::format("d_c={} is not divisible by g={}", cfg.d_c, cfg.g));
  if (cfg.variant == Variant::MLRA) {
    if (cfg.branches != 2 && cfg.branches != 4) fail(fmt::format("branches must be 2 or 4, got {}", cfg.branches));
    if (cfg.d_c % 4 != 0) fail(fmt::format("d_c={} is not divisible into 4 blocks", cfg.d_c));
    if (cfg.branches == 2 && cfg.h % 2 != 0) fail(fmt::format("h={} must be even for two head groups", cfg.h));
  }
  const bool full_rope = cfg.variant == Variant::MHA || cfg.variant == Variant::MQA || cfg.variant == Variant::GQA ||
                         cfg.variant == Variant::TPA;
  if (full_rope && cfg.d_h % 2 != 0) fail(fmt::format("RoPE width d_h={} must be even", cfg.d_h));
  if ((is_latent(cfg.variant) || cfg.variant == Variant::GTA) && cfg.d_hR % 2 != 0) {
    fail(fmt::format("RoPE width d_hR={} must be even", cfg.d_hR));
  }
  if (cfg.variant == Variant::GTA && cfg.d_hR > cfg.d_h) fail("d_hR cannot exceed d_h");
  if (!(cfg.rope_base > 0.0)) fail("rope_base must be positive");
}

double score_scale(const AttnConfig& cfg) {
  if (is_latent(cfg.variant)) return 1.0 / std::sqrt(static_cast<double>(cfg.d_h + cfg.d_hR));
  if (cfg.variant == Variant::MFA) return 1.0 / std::sqrt(static_cast<double>(2 * cfg.d_h));
  return 1.0 / std::sqrt(static_cast<double>(cfg.d_h));
}

std::size_t head_out_dim(const AttnConfig& cfg) { return cfg.variant == Variant::MFA ? 2 * cfg.d_h : cfg.d_h; }

std::size_t kv_heads(const AttnConfig& cfg) {
  switch (cfg.variant) {
    case Variant::MHA: return cfg.h;
    case Variant::MQA:
    case Variant::MFA: return 1;
    case Variant::GQA:
    case Variant::GTA: return cfg.g;
    default: throw RoutingError(fmt::format("{} has no KV heads", variant_label(cfg)));
  }
}

std::size_t heads_per_kv(const AttnConfig& cfg) { return cfg.h / kv_heads(cfg); }

namespace presets {

AttnConfig table1_context(std::string_view name) {
  AttnConfig cfg = variant_from_name(name);
  cfg.h = 64;
  cfg.d = 7168;
  cfg.d_h = 128;
  switch (cfg.variant) {
    case Variant::GQA:
      cfg.g = 8;
      break;
    case Variant::GTA:
      cfg.g = 8;
      cfg.d_hR = 64;
      break;
    case Variant::TPA:
      cfg.beta_q = 6;
      cfg.beta_kv = 2;
      break;
    case Variant::MFA:
      cfg.d_cq = 1536;
      break;
    case Variant::MLA:
    case Variant::GLA:
    case Variant::MLRA:
      cfg.d_hR = 64;
      cfg.d_c = 512;
      cfg.d_cq = 1536;
      break;
    default:
      break;
  }
  return with_latent_defaults(cfg);
}

std::vector<std::string> table1_rows() {
  return {"MHA", "MQA", "GQA", "MLA", "MFA", "TPA", "GLA-2", "GTA", "MLRA-2", "MLRA-4"};
}

ModelConfig main_config(std::string_view name) {
  ModelConfig m;
  m.attn = variant_from_name(name);
  m.layers = 24;
  m.vocab = 50304;
  AttnConfig& a = m.attn;
  a.h = 24;
  a.d = 3072;
  a.d_h = 128;
  const std::string label = variant_label(a);
  if (label == "MHA") {
    m.d_f = 8192, m.reported_millions = 2872.59;
  } else if (label == "MQA") {
    m.d_f = 10152, m.reported_millions = 2872.00;
  } else if (label == "GQA") {
    a.g = 6, m.d_f = 9728, m.reported_millions = 2872.59;
  } else if (label == "MLA") {
    a.d_cq = 1536, a.d_c = 512, a.d_hR = 64, m.d_f = 9448, m.reported_millions = 2872.05;
  } else if (label == "MFA") {
    a.d_cq = 2048, m.d_f = 8024, m.reported_millions = 2873.23;
  } else if (label == "TPA") {
    a.beta_q = 6, a.beta_kv = 2, m.d_f = 10760, m.reported_millions = 2873.18;
  } else if (label == "GLA-2") {
    a.d_cq = 1024, a.d_c = 512, a.d_hR = 64, m.d_f = 10048, m.reported_millions = 2872.63;
  } else if (label == "GLA-4") {
    a.d_cq = 1024, a.d_c = 512, a.d_hR = 64, m.d_f = 10136, m.reported_millions = 2873.22;
  } else if (label == "GTA") {
    a.g = 6, a.d_hR = 64, m.d_f = 9960, m.reported_millions = 2872.00;
  } else if (label == "MLRA-2") {
    a.d_cq = 1024, a.d_c = 512, a.d_hR = 64, a.g = 2, m.d_f = 10048, m.reported_millions = 2872.63;
  } else if (label == "MLRA-4") {
    a.d_cq = 1024, a.d_c = 512, a.d_hR = 64, m.d_f = 9880, m.reported_millions = 2873.22;
  } else {
    throw ConfigError(fmt::format("no main configuration for {}", label));
  }
  return m;
}

std::vector<std::string> main_rows() {
  return {"MHA", "MQA", "GQA", "MLA", "MFA", "TPA", "GLA-2", "GLA-4", "GTA", "MLRA-2", "MLRA-4"};
}

}  // namespace presets

}  // namespace attnkit
