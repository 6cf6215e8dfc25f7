// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/variance.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <span>

#include <fmt/format.h>
#include <json.hpp>

#include "attnkit/error.hpp"
#include "attnkit/latent.hpp"
#include "attnkit/parallel.hpp"
#include "attnkit/rope.hpp"
#include "attnkit/weights.hpp"

namespace attnkit {

namespace {

constexpr std::size_t kTokensPerDraw = 256;
constexpr std::size_t kBranchTokens = 32;

struct Acc {
  double sum = 0.0;
  double sumsq = 0.0;
  std::size_t n = 0;

  void add(std::span<const double> xs) {
    for (double x : xs) {
      sum += x;
      sumsq += x * x;
    }
    n += xs.size();
  }
  void merge(const Acc& o) {
    sum += o.sum;
    sumsq += o.sumsq;
    n += o.n;
  }
  double variance() const {
    if (n == 0) return 0.0;
    const double mean = sum / static_cast<double>(n);
    return std::max(0.0, sumsq / static_cast<double>(n) - mean * mean);
  }
};

enum Comp { kKRope, kKNope, kV, kQNope, kQRope, kNumComp };
constexpr const char* kCompNames[kNumComp] = {"K_RoPE", "K_NoPE", "V", "Q_NoPE", "Q_RoPE"};

void require_latent_cfg(const AttnConfig& cfg, double sigma_w, std::size_t trials) {
  if (!is_latent(cfg.variant)) {
    throw ConfigError(fmt::format("variance lab needs a latent variant, got {}", variant_label(cfg)));
  }
  if (trials < kMinVarianceTrials) {
    throw ConfigError(fmt::format("variance lab needs at least {} trials, got {}", kMinVarianceTrials, trials));
  }
  if (!(sigma_w >= 0.0)) throw ConfigError("sigma_w must be non-negative");
  validate(cfg);
}

Tensor normalized_hidden(std::size_t n, std::size_t d, Rng& rng) { return rmsnorm(gaussian_init({n, d}, 1.0, rng)); }

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::array<Acc, kNumComp> one_draw(const AttnConfig& cfg, double sigma_w, const Rng& draw_rng) {
  const WeightSet w = build_weights(cfg, sigma_w, draw_rng.split("weights"));
  Rng hr = draw_rng.split("hidden");
  const Tensor H = normalized_hidden(kTokensPerDraw, cfg.d, hr);
  const WeightView view = WeightView::of(w);
  const LatentLayout lay = latent_layout(cfg);
  std::array<Acc, kNumComp> acc;

  Tensor kr = matmul(H, w.at("W_KR"));
  for (std::size_t t = 0; t < kr.rows(); ++t) rope_rotate(kr.row(t), cfg.d_hR, static_cast<double>(t), cfg.rope_base);
  acc[kKRope].add(kr.data());

  const Tensor C = latent_rows(cfg, view, H);
  for (std::size_t i = 0; i < cfg.h; ++i) {
    const std::size_t gamma = i / lay.heads_per_group;
    for (std::size_t b = 0; b < lay.blocks; ++b) {
      auto [c0, c1] = latent_block_cols(lay, gamma, b);
      const Tensor cb = slice_cols(C, c0, c1);
      acc[kKNope].add(matmul(cb, up_block(cfg, view, "W_UK", i, b)).data());
      acc[kV].add(matmul(cb, up_block(cfg, view, "W_UV", i, b)).data());
    }
  }
  const LatentQueries q = latent_queries(cfg, view, Scope::all(cfg), H, 0);
  acc[kQNope].add(q.nope.data());
  acc[kQRope].add(q.rope.data());
  return acc;
}

struct Measured {
  std::array<Acc, kNumComp> acc;
  std::size_t draws = 0;
};

Measured measure(const AttnConfig& cfg, double sigma_w, std::size_t trials, const Rng& rng) {
  const std::size_t per_draw = kTokensPerDraw * std::min(cfg.d_hR, cfg.h * cfg.d_h);
  const std::size_t draws = ceil_div(trials, per_draw);
  std::vector<std::array<Acc, kNumComp>> parts(draws);
  parallel_for(draws, [&](std::size_t k) { parts[k] = one_draw(cfg, sigma_w, rng.split(k)); });
  Measured m;
  m.draws = draws;
  for (const auto& p : parts) {
    for (std::size_t c = 0; c < kNumComp; ++c) m.acc[c].merge(p[c]);
  }
  return m;
}

VarianceComponent make_component(const std::string& name, const Acc& a, double predicted) {
  VarianceComponent c{name, a.variance(), predicted, 0.0, a.n};
  if (predicted != 0.0) {
    c.rel_dev = std::abs(c.sample - predicted) / predicted;
  } else if (c.sample != 0.0) {
    c.rel_dev = INFINITY;
  }
  return c;
}

VarianceReport build_report(const AttnConfig& cfg, double sigma_w, std::size_t trials, const Measured& m) {
  const LatentLayout lay = latent_layout(cfg);
  const ScaleFactors f = calib_factors(cfg);
  const double s2 = sigma_w * sigma_w;
  const double kv2 = to_double(f.kv_sq), q2 = to_double(f.q_sq);
  const double bw = static_cast<double>(lay.block_width);
  // Each normalized group has unit mean square, so a block of width w
  // contributes w * sigma^2 before alpha_kv.
  const double predicted[kNumComp] = {
      static_cast<double>(cfg.d) * s2,
      kv2 * bw * s2,
      kv2 * bw * s2,
      q2 * static_cast<double>(cfg.d_cq) * s2,
      q2 * static_cast<double>(cfg.d_cq) * s2,
  };
  VarianceReport r;
  r.variant = variant_label(cfg);
  r.sigma_w = sigma_w;
  r.calibrated = cfg.scaling_enabled;
  r.trials = trials;
  r.draws = m.draws;
  for (std::size_t c = 0; c < kNumComp; ++c) r.components.push_back(make_component(kCompNames[c], m.acc[c], predicted[c]));
  return r;
}

double safe_ratio(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

void add_branch_parity(const AttnConfig& cfg, double sigma_w, std::size_t trials, const Rng& rng, VarianceReport& r) {
  const LatentLayout lay = latent_layout(cfg);
  const std::size_t per_draw = kBranchTokens * cfg.h * cfg.d_h;
  const std::size_t draws = ceil_div(trials, per_draw);
  struct Part {
    std::vector<Acc> branch;
    Acc sum;
  };
  std::vector<Part> parts(draws);
  parallel_for(draws, [&](std::size_t k) {
    const Rng dr = rng.split(k);
    const WeightSet w = build_weights(cfg, sigma_w, dr.split("weights"));
    Rng hr = dr.split("hidden");
    const LatentBranches br = latent_branches(cfg, w, normalized_hidden(kBranchTokens, cfg.d, hr));
    Part p;
    p.branch.resize(lay.blocks);
    Tensor total = br.O.front();
    for (std::size_t b = 0; b < lay.blocks; ++b) {
      p.branch[b].add(br.O[b].data());
      if (b > 0) total = add(total, br.O[b]);
    }
    p.sum.add(total.data());
    parts[k] = std::move(p);
  });
  std::vector<Acc> branch(lay.blocks);
  Acc sum;
  for (const auto& p : parts) {
    for (std::size_t b = 0; b < lay.blocks; ++b) branch[b].merge(p.branch[b]);
    sum.merge(p.sum);
  }
  double mean_branch = 0.0;
  for (const auto& a : branch) mean_branch += a.variance();
  mean_branch /= static_cast<double>(lay.blocks);
  const double nb = static_cast<double>(lay.blocks);
  const double alpha2 = to_double(calib_factors(cfg).attn_sq);
  r.components.push_back(VarianceComponent{"O_branch", mean_branch, mean_branch, 0.0, branch.front().n});
  r.components.push_back(make_component("O_branch_sum", sum, nb * mean_branch));
  r.ratios.push_back({"O_branch_sum/O_branch", safe_ratio(sum.variance(), mean_branch), nb, 0.10});
  r.ratios.push_back({"alpha_attn^2*O_branch_sum/O_branch", safe_ratio(alpha2 * sum.variance(), mean_branch), 1.0, 0.10});
}

}  // namespace

bool VarianceRatio::within() const {
  if (target == 0.0) return value == 0.0;
  return std::abs(value - target) <= tolerance * std::abs(target);
}

const VarianceComponent& VarianceReport::component(std::string_view name) const {
  for (const auto& c : components) {
    if (c.name == name) return c;
  }
  throw ConfigError(fmt::format("variance report has no component {}", name));
}

const VarianceRatio& VarianceReport::ratio(std::string_view name) const {
  for (const auto& r : ratios) {
    if (r.name == name) return r;
  }
  throw ConfigError(fmt::format("variance report has no ratio {}", name));
}

bool VarianceReport::all_within() const {
  return std::all_of(ratios.begin(), ratios.end(), [](const VarianceRatio& r) { return r.within(); });
}

std::string VarianceReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["variant"] = variant;
  doc["sigma_w"] = sigma_w;
  doc["calibrated"] = calibrated;
  doc["trials"] = trials;
  doc["draws"] = draws;
  doc["components"] = nlohmann::ordered_json::array();
  for (const auto& c : components) {
    doc["components"].push_back(nlohmann::ordered_json{{"name", c.name},
                                                       {"sample_variance", c.sample},
                                                       {"predicted_variance", c.predicted},
                                                       {"relative_deviation", c.rel_dev},
                                                       {"samples", c.samples}});
  }
  doc["ratios"] = nlohmann::ordered_json::array();
  for (const auto& r : ratios) {
    doc["ratios"].push_back(nlohmann::ordered_json{{"name", r.name},
                                                   {"value", r.value},
                                                   {"target", r.target},
                                                   {"tolerance", r.tolerance},
                                                   {"within", r.within()}});
  }
  return doc.dump(2) + "\n";
}

AttnConfig variance_config(std::string_view name) {
  const presets::ModelConfig m = presets::main_config(name);
  AttnConfig cfg = m.attn;
  if (!is_latent(cfg.variant)) {
    throw ConfigError(fmt::format("variance lab needs a latent variant, got {}", variant_label(cfg)));
  }
  cfg.h = 4;
  cfg.d /= 8;
  cfg.d_h /= 8;
  cfg.d_hR /= 8;
  cfg.d_c /= 8;
  cfg.d_cq /= 8;
  return cfg;
}

VarianceReport estimate_variances(const AttnConfig& cfg, double sigma_w, std::size_t trials, const Rng& rng) {
  require_latent_cfg(cfg, sigma_w, trials);
  AttnConfig raw = cfg;
  raw.scaling_enabled = false;
  VarianceReport r = build_report(raw, sigma_w, trials, measure(raw, sigma_w, trials, rng));
  const double target = static_cast<double>(cfg.d) / static_cast<double>(latent_layout(cfg).block_width);
  r.ratios.push_back(
      {"K_RoPE/K_NoPE", safe_ratio(r.component("K_RoPE").sample, r.component("K_NoPE").sample), target, 0.05});
  return r;
}

VarianceReport verify_calibration(const AttnConfig& cfg, double sigma_w, std::size_t trials, const Rng& rng) {
  require_latent_cfg(cfg, sigma_w, trials);
  if (!cfg.scaling_enabled) throw ConfigError("verify_calibration needs scaling enabled");
  VarianceReport r = build_report(cfg, sigma_w, trials, measure(cfg, sigma_w, trials, rng));
  const double krope = r.component("K_RoPE").sample;
  for (const char* name : {"K_NoPE", "V", "Q_NoPE", "Q_RoPE"}) {
    r.ratios.push_back({fmt::format("{}/K_RoPE", name), safe_ratio(r.component(name).sample, krope), 1.0, 0.05});
  }
  if (cfg.variant == Variant::MLRA) add_branch_parity(cfg, sigma_w, trials, rng.split("branches"), r);
  return r;
}

}  // namespace attnkit
