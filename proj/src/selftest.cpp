// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/selftest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>

#include <fmt/format.h>
#include <json.hpp>

#include "attnkit/cost_model.hpp"
#include "attnkit/decode.hpp"
#include "attnkit/error.hpp"
#include "attnkit/latent.hpp"
#include "attnkit/rope.hpp"
#include "attnkit/tp_sim.hpp"
#include "attnkit/variance.hpp"
#include "attnkit/weights.hpp"

namespace attnkit {

namespace {

template <typename T, std::size_t N>
const T& pick(Rng& rng, const std::array<T, N>& options) {
  return options[rng.uniform_int(N)];
}

double rel_err(const Tensor& got, const Tensor& want) { return max_rel_diff(got, want, 1e-30); }

Tensor random_hidden(std::size_t n, std::size_t d, Rng& rng) { return gaussian_init({n, d}, 1.0, rng); }

/// Expected per-device loading in units of d_h, TP = 1, 2, 4, 8.
struct LoadRow {
  const char* name;
  std::array<Rational, 4> cells;
};

const std::vector<LoadRow>& table1_expected() {
  static const std::vector<LoadRow> rows = {
      {"mha", {Rational(128), Rational(64), Rational(32), Rational(16)}},
      {"mqa", {Rational(2), Rational(2), Rational(2), Rational(2)}},
      {"gqa", {Rational(16), Rational(8), Rational(4), Rational(2)}},
      {"mla", {Rational(9, 2), Rational(9, 2), Rational(9, 2), Rational(9, 2)}},
      {"mfa", {Rational(4), Rational(4), Rational(4), Rational(4)}},
      {"tpa", {Rational(6), Rational(5), Rational(9, 2), Rational(17, 4)}},
      {"gla2", {Rational(9, 2), Rational(5, 2), Rational(5, 2), Rational(5, 2)}},
      {"gta", {Rational(17, 2), Rational(9, 2), Rational(5, 2), Rational(3, 2)}},
      {"mlra2", {Rational(9, 2), Rational(5, 2), Rational(3, 2), Rational(3, 2)}},
      {"mlra4", {Rational(9, 2), Rational(5, 2), Rational(3, 2), Rational(3, 2)}},
  };
  return rows;
}

}  // namespace

AttnConfig ledger_context(std::string_view name) {
  AttnConfig cfg = presets::table1_context(name);
  cfg.d = 16;
  if (cfg.d_cq != 0) cfg.d_cq = 32;
  return cfg;
}

AttnConfig random_tiny_config(std::string_view name, Rng& rng, std::size_t h_multiple) {
  AttnConfig cfg = variant_from_name(name);
  if (h_multiple > 1) {
    cfg.h = h_multiple * (1 + rng.uniform_int(2));
  } else {
    cfg.h = pick(rng, std::array<std::size_t, 4>{2, 4, 6, 8});
  }
  cfg.d_h = pick(rng, std::array<std::size_t, 2>{4, 8});
  cfg.d_hR = pick(rng, std::array<std::size_t, 2>{2, 4});
  cfg.d_c = 4 * cfg.d_h;
  cfg.d = pick(rng, std::array<std::size_t, 2>{16, 32});
  switch (cfg.variant) {
    case Variant::GQA:
    case Variant::GTA:
      cfg.g = cfg.h % 4 == 0 ? pick(rng, std::array<std::size_t, 2>{2, 4}) : 2;
      break;
    case Variant::TPA:
      cfg.beta_q = 1 + rng.uniform_int(3);
      cfg.beta_kv = 1 + rng.uniform_int(2);
      break;
    default:
      break;
  }
  if (is_latent(cfg.variant) || cfg.variant == Variant::MFA) cfg.d_cq = pick(rng, std::array<std::size_t, 2>{8, 16});
  validate(cfg);
  return cfg;
}

CriterionResult check_table1_loading() {
  CriterionResult r{1, "Table 1 per-device loading", true, ""};
  std::size_t ok = 0, total = 0;
  std::string first_bad;
  for (const auto& row : table1_expected()) {
    const AttnConfig cfg = presets::table1_context(row.name);
    for (std::size_t k = 0; k < kTpDegrees.size(); ++k) {
      ++total;
      const Rational got = per_device_load(cfg, kTpDegrees[k]);
      if (got == row.cells[k]) {
        ++ok;
      } else if (first_bad.empty()) {
        first_bad = fmt::format("; {} TP={} gave {} d_h, expected {}", variant_label(cfg), kTpDegrees[k],
                                rational_string(got), rational_string(row.cells[k]));
      }
    }
    if (per_device_load(cfg, 1) != kv_cache_per_token(cfg)) {
      r.pass = false;
      first_bad += fmt::format("; {} TP=1 differs from its cache size", variant_label(cfg));
    }
  }
  r.pass = r.pass && ok == total;
  r.detail = fmt::format("{}/{} cells exact{}", ok, total, first_bad);
  return r;
}

CriterionResult check_param_formulas() {
  CriterionResult r{2, "Table 1 parameter formulas", true, ""};
  std::size_t ok = 0;
  std::string bad;
  for (const auto& name : presets::main_rows()) {
    const auto m = presets::main_config(name);
    const auto formula = param_count(m.attn), enumerated = enumerated_param_count(m.attn);
    if (formula == enumerated) {
      ++ok;
    } else {
      r.pass = false;
      bad += fmt::format("; {} formula {} vs shapes {}", name, formula, enumerated);
    }
    const double millions = static_cast<double>(model_param_count(m)) / 1e6;
    if (m.reported_millions > 0.0 && std::abs(millions - m.reported_millions) > 0.005 + 1e-9) {
      r.pass = false;
      bad += fmt::format("; {} total {:.2f}M vs {:.2f}M", name, millions, m.reported_millions);
    }
  }
  AttnConfig g2 = presets::main_config("GLA-2").attn, m2 = presets::main_config("MLRA-2").attn;
  if (param_count(g2) != param_count(m2)) {
    r.pass = false;
    bad += "; MLRA-2 and GLA-2 counts differ";
  }
  r.detail = fmt::format("{}/{} configs agree, model totals match{}", ok, presets::main_rows().size(), bad);
  return r;
}

CriterionResult check_arithmetic_intensity() {
  CriterionResult r{3, "Table 2 arithmetic intensity", true, ""};
  std::vector<std::string> notes;
  auto expect = [&](bool cond, const std::string& what) {
    if (!cond) {
      r.pass = false;
      notes.push_back(what);
    }
  };
  AttnConfig mla = variant_from_name("mla");
  mla.h = 64;
  mla.d = 7168;
  mla.d_h = 128;
  mla.d_cq = 1536;
  mla = with_latent_defaults(mla);
  const Rational ai = arithmetic_intensity(mla, 1000);
  expect(ai == Rational(17 * 64, 9), fmt::format("MLA gave {}", rational_string(ai)));
  expect(ai_asymptotic(mla) == "2h", "MLA tag");
  const AttnConfig gqa = presets::table1_context("gqa"), mha = presets::table1_context("mha");
  expect(arithmetic_intensity(gqa, 7) == Rational(64, 8), "GQA != h/g");
  expect(arithmetic_intensity(mha, 7) == Rational(1), "MHA != 1");
  for (const auto& name : presets::table1_rows()) {
    const AttnConfig cfg = presets::table1_context(name);
    expect(arithmetic_intensity(cfg, 1) == arithmetic_intensity(cfg, 4096), name + " depends on n");
  }
  r.detail = fmt::format("MLA = {} ({} for h=64) tagged \"{}\"; GQA = {}; MHA = {}", "17h/9", rational_string(ai),
                         ai_asymptotic(mla), rational_string(arithmetic_intensity(gqa, 1)),
                         rational_string(arithmetic_intensity(mha, 1)));
  for (const auto& n : notes) r.detail += "; " + n;
  return r;
}

AbsorptionSuite absorption_suite(const std::vector<std::string>& names, std::uint64_t seed, std::size_t trials,
                                 const std::optional<AttnConfig>& fixed) {
  if (names.empty() && !fixed) throw ConfigError("absorption suite needs at least one variant");
  const Rng root(seed, 4);
  AbsorptionSuite res;
  res.seed = seed;
  res.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = root.split(t);
    const AttnConfig cfg = fixed ? *fixed : random_tiny_config(names[t % names.size()], rng);
    const WeightSet w = build_weights(cfg, kTinySigma, rng.split("weights"));
    const std::size_t n = 1 + rng.uniform_int(8);
    Rng hr = rng.split("hidden");
    const Tensor H = random_hidden(n, cfg.d, hr);
    KvCache naive = make_cache(cfg), absorbed = make_cache(cfg);
    for (std::size_t s = 0; s < n; ++s) {
      const Tensor a = naive_decode_step(cfg, w, naive, H.row(s));
      const Tensor b = absorbed_decode_step(cfg, w, absorbed, H.row(s));
      const double e = rel_err(b, a);
      if (e > res.max_rel_err) {
        res.max_rel_err = e;
        res.worst_trial = t;
        res.worst_variant = variant_label(cfg);
      }
      ++res.steps;
    }
  }
  return res;
}

CriterionResult check_absorption(std::uint64_t seed, std::size_t trials) {
  CriterionResult r{4, "Absorbed vs naive decoding", true, ""};
  const AbsorptionSuite s = absorption_suite({"mla", "gla2", "mlra2", "mlra4"}, seed, trials);
  r.pass = s.max_rel_err <= 1e-10;
  r.detail = fmt::format("max relative error {:.3e} over {} trials, {} steps (worst: {} trial {}, seed {})",
                         s.max_rel_err, s.trials, s.steps, s.worst_variant, s.worst_trial, seed);
  return r;
}

CriterionResult check_block_identities(std::uint64_t seed, std::size_t trials) {
  CriterionResult r{5, "Block reconstruction identities", true, ""};
  const Rng root(seed, 5);
  double worst = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = root.split(t);
    const std::size_t dh = pick(rng, std::array<std::size_t, 2>{4, 8});
    const std::size_t h = pick(rng, std::array<std::size_t, 4>{2, 4, 6, 8});
    const std::size_t dc = 4 * dh, n = 1 + rng.uniform_int(8);
    const Tensor C = gaussian_init({n, dc}, 1.0, rng);
    const Tensor Wk = gaussian_init({dc, h * dh}, 1.0, rng);
    const Tensor Wv = gaussian_init({dc, h * dh}, 1.0, rng);
    for (std::size_t blocks : {4, 2}) {
      for (std::size_t i = 0; i < h; ++i) {
        auto [k, v] = block_reconstruct(C, Wk, Wv, blocks, i, dh);
        worst = std::max(worst, max_abs_diff(k, matmul(C, slice_cols(Wk, i * dh, (i + 1) * dh))));
        worst = std::max(worst, max_abs_diff(v, matmul(C, slice_cols(Wv, i * dh, (i + 1) * dh))));
      }
    }
  }
  r.pass = worst <= 1e-12;
  r.detail = fmt::format("max abs error {:.3e} over {} trials, 4 and 2 blocks, all heads", worst, trials);
  return r;
}

CriterionResult check_mlra_separation(std::uint64_t seed, std::size_t configs) {
  CriterionResult r{6, "MLRA-4 differs from MLA", true, ""};
  const Rng root(seed, 6);
  std::size_t separated = 0;
  double smallest = INFINITY;
  for (std::size_t t = 0; t < configs; ++t) {
    Rng rng = root.split(t);
    AttnConfig mla = random_tiny_config("mla", rng);
    mla.scaling_enabled = false;
    AttnConfig mlra = mla;
    mlra.variant = Variant::MLRA;
    mlra.branches = 4;
    const WeightSet w = build_weights(mla, kTinySigma, rng.split("weights"));
    const std::size_t n = 4 + rng.uniform_int(5);
    Rng hr = rng.split("hidden");
    const Tensor H = random_hidden(n, mla.d, hr);
    const PrefillOutput a = latent_prefill(mla, w, H);
    const PrefillOutput b = latent_prefill(mlra, w, H);
    const double diff = max_abs_diff(a.O, b.O);
    smallest = std::min(smallest, diff);
    const Tensor C = a.cache.get("C_KV").read(0, mla.d_c);
    double ident = 0.0;
    for (std::size_t i = 0; i < mla.h; ++i) {
      auto [k, v] = block_reconstruct(C, w.at("W_UK"), w.at("W_UV"), 4, i, mla.d_h);
      ident = std::max(ident, max_abs_diff(k, matmul(C, slice_cols(w.at("W_UK"), i * mla.d_h, (i + 1) * mla.d_h))));
      ident = std::max(ident, max_abs_diff(v, matmul(C, slice_cols(w.at("W_UV"), i * mla.d_h, (i + 1) * mla.d_h))));
    }
    if (diff > 1e-3 && ident <= 1e-12) ++separated;
  }
  const double frac = static_cast<double>(separated) / static_cast<double>(configs);
  r.pass = frac >= 0.95;
  r.detail = fmt::format("{}/{} configs differ by more than 1e-3 with block identities intact (smallest diff {:.3e})",
                         separated, configs, smallest);
  return r;
}

CriterionResult check_rope(std::uint64_t seed, std::size_t trials) {
  CriterionResult r{7, "RoPE translation equivariance", true, ""};
  const Rng root(seed, 7);
  double worst = 0.0, violation = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng = root.split(t);
    const std::size_t dim = 2 * (1 + rng.uniform_int(8));
    const Tensor q = gaussian_init({1, dim}, 1.0, rng), k = gaussian_init({1, dim}, 1.0, rng);
    const double tq = static_cast<double>(rng.uniform_int(1000)), tk = static_cast<double>(rng.uniform_int(1000));
    const double s = static_cast<double>(rng.uniform_int(1000));
    auto rot = [&](const Tensor& x, double pos) {
      Tensor y = x;
      rope_rotate(y.row(0), dim, pos, 10000.0);
      return y;
    };
    auto dot = [](const Tensor& a, const Tensor& b) { return matmul_bt(a, b).at(0, 0); };
    worst = std::max(worst, std::abs(dot(rot(q, tq + s), rot(k, tk + s)) - dot(rot(q, tq), rot(k, tk))));
    const Tensor Wq = gaussian_init({dim, dim}, 1.0, rng), Wk = gaussian_init({dim, dim}, 1.0, rng);
    const double base = dot(matmul(rot(q, tq), Wq), matmul(rot(k, tk), Wk));
    const double shifted = dot(matmul(rot(q, tq + s), Wq), matmul(rot(k, tk + s), Wk));
    violation = std::max(violation, std::abs(base - shifted));
  }
  r.pass = worst <= 1e-9 && violation > 1e-3;
  r.detail = fmt::format("equivariance max error {:.3e} over {} trials; post-RoPE projection breaks it by {:.3e}", worst,
                         trials, violation);
  return r;
}

CriterionResult check_variance(std::uint64_t seed, std::size_t trials) {
  CriterionResult r{8, "Variance calibration", true, ""};
  const Rng root(seed, 8);
  const double sigma = 0.02;
  const AttnConfig mla = variance_config("mla");
  const VarianceReport raw = estimate_variances(mla, sigma, trials, root.split("mla-raw"));
  const VarianceReport cal = verify_calibration(mla, sigma, trials, root.split("mla-cal"));
  const VarianceReport br = verify_calibration(variance_config("mlra4"), sigma, trials, root.split("mlra4"));
  const auto& mismatch = raw.ratio("K_RoPE/K_NoPE");
  const auto& parity = br.ratio("alpha_attn^2*O_branch_sum/O_branch");
  const auto& sum4 = br.ratio("O_branch_sum/O_branch");
  double cal_worst = 0.0;
  bool cal_ok = true;
  for (const auto& q : cal.ratios) {
    cal_worst = std::max(cal_worst, std::abs(q.value - 1.0));
    cal_ok = cal_ok && q.within();
  }
  struct Sym {
    const char* config;
    const char* factor;
    Rational square;
    const char* expected;
  };
  const std::array<Sym, 6> syms{{{"MLA", "q", Rational(2), "√2"},
                                 {"MLA", "kv", Rational(6), "√6"},
                                 {"GLA-2", "kv", Rational(12), "√12"},
                                 {"GLA-4", "kv", Rational(24), "√24"},
                                 {"MLRA-2", "kv", Rational(24), "√24"},
                                 {"MLRA-4", "attn", Rational(1, 4), "1/2"}}};
  std::string sym_line;
  bool sym_ok = true;
  for (const auto& s : syms) {
    const ScaleFactors f = calib_factors(presets::main_config(s.config).attn);
    const std::string_view which = s.factor;
    const Rational got = which == "q" ? f.q_sq : which == "kv" ? f.kv_sq : f.attn_sq;
    const bool ok = got == s.square;
    sym_ok = sym_ok && ok;
    sym_line += fmt::format("{}{} alpha_{}={}{}", sym_line.empty() ? "" : ", ", s.config, s.factor,
                            ok ? s.expected : sqrt_string(got), ok ? "" : " (mismatch)");
  }
  r.pass = mismatch.within() && cal_ok && parity.within() && sum4.within() && sym_ok;
  r.detail = fmt::format(
      "Var(K_RoPE)/Var(K_NoPE) = {:.4f} (target {:.0f}); calibrated ratios within {:.2f}% of 1; MLRA-4 "
      "Var(sum)/Var(branch) = {:.4f}, with alpha_attn {:.4f}; {}",
      mismatch.value, mismatch.target, 100.0 * cal_worst, sum4.value, parity.value, sym_line);
  return r;
}

CriterionResult check_tensor_parallel(std::uint64_t seed, std::size_t trials_per_pair) {
  CriterionResult r{9, "Tensor-parallel simulation", true, ""};
  const Rng root(seed, 9);
  std::vector<std::string> notes;
  double worst = 0.0;
  std::size_t pairs = 0, runs = 0;
  const auto rows = presets::table1_rows();
  for (std::size_t v = 0; v < rows.size(); ++v) {
    for (std::size_t phi : kTpDegrees) {
      ++pairs;
      for (std::size_t t = 0; t < trials_per_pair; ++t) {
        Rng rng = root.split(fmt::format("{}/{}/{}", rows[v], phi, t));
        const AttnConfig cfg = random_tiny_config(rows[v], rng, 8);
        const WeightSet w = build_weights(cfg, kTinySigma, rng.split("weights"));
        ShardPlan plan = make_shards(cfg, w, phi);
        verify_shards(plan, w);
        KvCache single = make_cache(cfg);
        const std::size_t n = 1 + rng.uniform_int(4);
        Rng hr = rng.split("hidden");
        const Tensor H = random_hidden(n, cfg.d, hr);
        for (std::size_t s = 0; s < n; ++s) {
          const SimResult sim = sim_decode(plan, H.row(s));
          worst = std::max(worst, rel_err(sim.o, single_device_decode(cfg, w, single, H.row(s))));
        }
        ++runs;
      }
    }
  }
  std::size_t ledger_ok = 0, ledger_total = 0;
  std::string kinds;
  for (const auto& name : rows) {
    const AttnConfig cfg = ledger_context(name);
    const WeightSet w = build_weights(cfg, 0.05, Rng(seed, 90).split(name));
    Rng hr = Rng(seed, 91).split(name);
    const Tensor H = random_hidden(2, cfg.d, hr);
    for (std::size_t phi : kTpDegrees) {
      ++ledger_total;
      ShardPlan plan = make_shards(cfg, w, phi);
      bool ok = true;
      SimResult last;
      for (std::size_t s = 0; s < H.rows(); ++s) {
        last = sim_decode(plan, H.row(s));
        const auto expected = static_cast<std::uint64_t>(per_device_load_elements(cfg, phi)) * last.ledger.n;
        for (auto reads : last.ledger.reads) ok = ok && reads == expected;
      }
      if (ok) {
        ++ledger_ok;
      } else {
        notes.push_back(fmt::format("{} TP={} ledger mismatch", variant_label(cfg), phi));
      }
      if (phi == 4 && (name == "MLA" || name == "MLRA-4" || name == "MLRA-2")) {
        kinds += fmt::format("{}{} {}", kinds.empty() ? "" : ", ", variant_label(cfg), reduction_name(last.kind));
        const ReductionKind want = name == "MLA" ? ReductionKind::Concat : ReductionKind::Sum;
        if (last.kind != want) notes.push_back(fmt::format("{} reduction is {}", variant_label(cfg), reduction_name(last.kind)));
      }
    }
  }
  r.pass = worst <= 1e-10 && ledger_ok == ledger_total && notes.empty();
  r.detail = fmt::format("max relative error {:.3e} over {} (variant, TP) pairs, {} runs; ledger {}/{} exact; TP=4 "
                         "reductions: {}",
                         worst, pairs, runs, ledger_ok, ledger_total, kinds);
  for (const auto& n : notes) r.detail += "; " + n;
  return r;
}

CriterionResult check_roofline() {
  CriterionResult r{10, "Roofline decode-time ratio", true, ""};
  const HardwareModel hw;
  const std::int64_t n = 131072;
  const DecodeProjection mla = project_decode(presets::table1_context("mla"), 4, n, hw);
  const DecodeProjection mlra = project_decode(presets::table1_context("mlra4"), 4, n, hw);
  const Rational ratio = memory_time_ratio(mla, mlra);
  const double time_ratio = mla.time.seconds / mlra.time.seconds;
  r.pass = ratio == Rational(3) && mla.time.regime == Regime::MemoryBound &&
           mlra.time.regime == Regime::MemoryBound && std::abs(time_ratio - 3.0) <= 1e-12;
  r.detail = fmt::format("MLA : MLRA-4 at TP=4 = {} (time ratio {:.12f}, both {}); bandwidth-ideal bound", rational_string(ratio),
                         time_ratio, regime_name(mla.time.regime));
  return r;
}

bool SelftestReport::all_pass() const {
  return std::all_of(results.begin(), results.end(), [](const CriterionResult& c) { return c.pass; });
}

std::string SelftestReport::to_text() const {
  std::string out = fmt::format("attnkit selftest seed={}\n", seed);
  for (const auto& c : results) {
    out += fmt::format("{} {:>2} {}: {}\n", c.pass ? "PASS" : "FAIL", c.id, c.title, c.detail);
  }
  out += fmt::format("{} of {} criteria passed\n",
                     std::count_if(results.begin(), results.end(), [](const auto& c) { return c.pass; }),
                     results.size());
  return out;
}

std::string SelftestReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["seed"] = seed;
  doc["criteria"] = nlohmann::ordered_json::array();
  for (const auto& c : results) {
    doc["criteria"].push_back(
        nlohmann::ordered_json{{"id", c.id}, {"title", c.title}, {"pass", c.pass}, {"detail", c.detail}});
  }
  doc["all_pass"] = all_pass();
  return doc.dump(2) + "\n";
}

SelftestReport run_selftest(std::uint64_t seed) {
  SelftestReport rep;
  rep.seed = seed;
  rep.results.push_back(check_table1_loading());
  rep.results.push_back(check_param_formulas());
  rep.results.push_back(check_arithmetic_intensity());
  rep.results.push_back(check_absorption(seed));
  rep.results.push_back(check_block_identities(seed));
  rep.results.push_back(check_mlra_separation(seed));
  rep.results.push_back(check_rope(seed));
  rep.results.push_back(check_variance(seed));
  rep.results.push_back(check_tensor_parallel(seed));
  rep.results.push_back(check_roofline());
  return rep;
}

}  // namespace attnkit
