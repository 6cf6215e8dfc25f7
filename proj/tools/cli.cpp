// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "attnkit/error.hpp"
#include "attnkit/selftest.hpp"
#include "attnkit/tp_sim.hpp"
#include "attnkit/variance.hpp"
#include "attnkit/weights.hpp"

namespace attnkit::cli {

namespace {

using Json = nlohmann::ordered_json;

const std::vector<std::string> kDimKeys = {"h", "d", "d_h", "d_hR", "d_c", "d_cq", "g", "beta_q", "beta_kv"};
const std::vector<std::string> kEquivDefault = {"mla", "gla2", "mlra2", "mlra4"};

std::size_t& dim_field(AttnConfig& cfg, const std::string& key) {
  if (key == "h") return cfg.h;
  if (key == "d") return cfg.d;
  if (key == "d_h") return cfg.d_h;
  if (key == "d_hR") return cfg.d_hR;
  if (key == "d_c") return cfg.d_c;
  if (key == "d_cq") return cfg.d_cq;
  if (key == "g") return cfg.g;
  if (key == "beta_q") return cfg.beta_q;
  if (key == "beta_kv") return cfg.beta_kv;
  throw ConfigError(fmt::format("unknown dimension '{}'", key));
}

template <typename T>
T json_get(const Json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(fmt::format("config key '{}' has the wrong type", key));
  }
}

/// Writes to --out when given, otherwise to `out`.
void emit(const RunConfig& rc, std::ostream& out, const std::string& text) {
  if (rc.out.empty()) {
    out << text;
    return;
  }
  std::ofstream f(rc.out, std::ios::binary);
  if (!f) throw ConfigError(fmt::format("cannot write '{}'", rc.out));
  f << text;
}

std::string format_or(const RunConfig& rc, const std::string& fallback) {
  const std::string f = rc.format.empty() ? fallback : rc.format;
  if (f != "csv" && f != "json" && f != "text") throw ConfigError(fmt::format("unknown format '{}'", f));
  return f;
}

std::vector<std::size_t> tp_list(const RunConfig& rc) {
  std::vector<std::size_t> tp = rc.tp;
  if (tp.empty()) tp.assign(kTpDegrees.begin(), kTpDegrees.end());
  for (std::size_t phi : tp) check_tp_degree(phi);
  return tp;
}

std::vector<std::string> variant_list(const RunConfig& rc, const std::vector<std::string>& fallback) {
  if (rc.variant.empty()) return fallback;
  std::vector<std::string> names;
  std::stringstream ss(rc.variant);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) names.push_back(item);
  }
  return names;
}

int cmd_equiv(const RunConfig& rc, std::ostream& out) {
  const std::vector<std::string> names = variant_list(rc, kEquivDefault);
  std::optional<AttnConfig> fixed;
  if (!rc.dims.empty()) {
    if (names.size() != 1) throw ConfigError("explicit dimensions need exactly one --variant");
    fixed = resolve_config(rc, variant_from_name(names.front()));
  } else {
    for (const auto& n : names) variant_from_name(n);
  }
  const std::size_t trials = rc.trials == 0 ? 1000 : rc.trials;
  const AbsorptionSuite s = absorption_suite(names, rc.seed, trials, fixed);
  const bool ok = s.max_rel_err <= 1e-10;
  std::string text = fmt::format("equiv variants={} trials={} steps={} seed={}\nmax_rel_err={:.6e} worst={} trial={}\n{}\n",
                                 fmt::join(names, ","), s.trials, s.steps, s.seed, s.max_rel_err, s.worst_variant,
                                 s.worst_trial, ok ? "PASS" : "FAIL");
  emit(rc, out, text);
  return ok ? kExitOk : kExitFailure;
}

std::vector<AttnConfig> table_rows(const RunConfig& rc) {
  std::vector<AttnConfig> rows;
  if (rc.context == "kimi") {
    for (const auto& name : variant_list(rc, presets::table1_rows())) rows.push_back(resolve_config(rc, presets::table1_context(name)));
  } else if (rc.context == "main") {
    for (const auto& name : variant_list(rc, presets::main_rows())) rows.push_back(resolve_config(rc, presets::main_config(name).attn));
  } else {
    throw ConfigError(fmt::format("unknown context '{}' (expected kimi or main)", rc.context));
  }
  return rows;
}

int cmd_tables(const RunConfig& rc, std::ostream& out) {
  const auto rows = table_rows(rc);
  if (format_or(rc, "csv") == "json") {
    Json doc;
    doc["table1"] = Json::parse(table1_json(rows));
    doc["table2"] = Json::parse(table2_json(rows));
    emit(rc, out, doc.dump(2) + "\n");
  } else {
    emit(rc, out, table1_csv(rows) + "\n" + table2_csv(rows));
  }
  return kExitOk;
}

std::string variance_csv(const std::vector<VarianceReport>& reps) {
  std::string s = "report,kind,name,value (variance or ratio),reference,within\n";
  for (const auto& r : reps) {
    const std::string tag = fmt::format("{} {}", r.variant, r.calibrated ? "calibrated" : "raw");
    for (const auto& c : r.components) {
      s += fmt::format("{},component,{},{:.9e},{:.9e},\n", csv_field(tag), c.name, c.sample, c.predicted);
    }
    for (const auto& q : r.ratios) {
      s += fmt::format("{},ratio,{},{:.9e},{:.9e},{}\n", csv_field(tag), csv_field(q.name), q.value, q.target,
                       q.within() ? "true" : "false");
    }
  }
  return s;
}

int cmd_variance(const RunConfig& rc, std::ostream& out) {
  const std::string name = rc.variant.empty() ? "mla" : rc.variant;
  AttnConfig cfg = resolve_config(rc, variance_config(name));
  const std::size_t trials = rc.trials == 0 ? 100000 : rc.trials;
  const Rng rng(rc.seed, 8);
  std::vector<VarianceReport> reps;
  reps.push_back(estimate_variances(cfg, rc.sigma_w, trials, rng.split("raw")));
  cfg.scaling_enabled = true;
  reps.push_back(verify_calibration(cfg, rc.sigma_w, trials, rng.split("calibrated")));
  const bool ok = std::all_of(reps.begin(), reps.end(), [](const VarianceReport& r) { return r.all_within(); });
  if (format_or(rc, "json") == "csv") {
    emit(rc, out, variance_csv(reps));
  } else {
    Json doc;
    doc["seed"] = rc.seed;
    doc["raw"] = Json::parse(reps[0].to_json());
    doc["calibrated"] = Json::parse(reps[1].to_json());
    doc["all_within"] = ok;
    emit(rc, out, doc.dump(2) + "\n");
  }
  return ok ? kExitOk : kExitFailure;
}

int cmd_simulate_tp(const RunConfig& rc, std::ostream& out) {
  const std::vector<std::size_t> tp = tp_list(rc);
  const std::string name = rc.variant.empty() ? "mla" : rc.variant;
  const AttnConfig cfg = resolve_config(rc, ledger_context(name));
  validate(cfg);
  const Rng rng(rc.seed, 9);
  const WeightSet w = build_weights(cfg, rc.sigma_w, rng.split("weights"));
  Rng hr = rng.split("hidden");
  const Tensor H = gaussian_init({rc.steps, cfg.d}, 1.0, hr);
  bool all_equal = true;
  Json doc;
  doc["variant"] = variant_label(cfg);
  doc["seed"] = rc.seed;
  doc["steps"] = rc.steps;
  doc["runs"] = Json::array();
  for (std::size_t phi : tp) {
    ShardPlan plan = make_shards(cfg, w, phi);
    verify_shards(plan, w);
    KvCache single = make_cache(cfg);
    double worst = 0.0;
    SimResult last;
    bool ledger_ok = true;
    const std::int64_t per_token = per_device_load_elements(cfg, phi);
    for (std::size_t s = 0; s < H.rows(); ++s) {
      last = sim_decode(plan, H.row(s));
      worst = std::max(worst, max_rel_diff(last.o, single_device_decode(cfg, w, single, H.row(s)), 1e-30));
      for (auto reads : last.ledger.reads) {
        ledger_ok = ledger_ok && static_cast<std::int64_t>(reads) == per_token * static_cast<std::int64_t>(last.ledger.n);
      }
    }
    const bool equal = worst <= 1e-10;
    all_equal = all_equal && equal && ledger_ok;
    Json run;
    run["tp"] = phi;
    run["head_parts"] = plan.head_parts;
    run["block_parts"] = plan.block_parts;
    run["reduction"] = reduction_name(last.kind);
    run["max_rel_err"] = worst;
    run["equal"] = equal;
    run["context_tokens"] = last.ledger.n;
    run["expected_reads_per_device"] = per_token * static_cast<std::int64_t>(last.ledger.n);
    run["reads_per_device"] = last.ledger.reads;
    run["ledger_matches_cost_model"] = ledger_ok;
    Json readers;
    for (const auto& [tensor, devs] : last.ledger.readers) readers[tensor] = devs;
    run["readers"] = readers;
    run["replicated"] = last.ledger.replicated;
    doc["runs"].push_back(run);
  }
  doc["verdict"] = all_equal ? "equal" : "mismatch";
  emit(rc, out, doc.dump(2) + "\n");
  return all_equal ? kExitOk : kExitFailure;
}

int cmd_roofline(const RunConfig& rc, std::ostream& out) {
  const std::vector<std::size_t> tp = tp_list(rc);
  rc.hardware.validate();
  std::vector<DecodeProjection> rows;
  for (const auto& name : variant_list(rc, presets::table1_rows())) {
    const AttnConfig cfg = resolve_config(rc, presets::table1_context(name));
    for (std::size_t phi : tp) rows.push_back(project_decode(cfg, phi, rc.context_tokens, rc.hardware));
  }
  if (format_or(rc, "csv") == "json") {
    Json doc = Json::array();
    for (const auto& p : rows) {
      doc.push_back(Json{{"method", p.variant},
                         {"tp", p.phi},
                         {"context_tokens", p.n},
                         {"elements", p.elements},
                         {"bytes", p.bytes},
                         {"flops", to_double(p.flops)},
                         {"memory_seconds", p.time.memory_seconds},
                         {"compute_seconds", p.time.compute_seconds},
                         {"seconds", p.time.seconds},
                         {"regime", regime_name(p.time.regime)}});
    }
    emit(rc, out, doc.dump(2) + "\n");
  } else {
    std::string s =
        "method,tp,context_tokens,elements (elements),bytes (bytes),flops (flops),memory_time (s),"
        "compute_time (s),time (s),regime\n";
    for (const auto& p : rows) {
      s += fmt::format("{},{},{},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{}\n", csv_field(p.variant), p.phi, p.n, p.elements,
                       p.bytes, to_double(p.flops), p.time.memory_seconds, p.time.compute_seconds, p.time.seconds,
                       regime_name(p.time.regime));
    }
    emit(rc, out, s);
  }
  return kExitOk;
}

int cmd_selftest(const RunConfig& rc, std::ostream& out) {
  const SelftestReport rep = run_selftest(rc.seed);
  emit(rc, out, format_or(rc, "text") == "json" ? rep.to_json() : rep.to_text());
  return rep.all_pass() ? kExitOk : kExitFailure;
}

std::vector<std::size_t> parse_tp(const std::string& s) {
  std::vector<std::size_t> v;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t pos = 0;
      const unsigned long x = std::stoul(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      v.push_back(x);
    } catch (const std::logic_error&) {
      throw ConfigError(fmt::format("bad TP degree '{}'", item));
    }
  }
  return v;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(fmt::format("cannot read config '{}'", path));
  Json doc;
  try {
    doc = Json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("config '{}' is not valid JSON: {}", path, e.what()));
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig rc;
  for (const auto& [key, v] : doc.items()) {
    if (std::find(kDimKeys.begin(), kDimKeys.end(), key) != kDimKeys.end()) {
      rc.dims[key] = json_get<std::size_t>(v, key);
    } else if (key == "variant") {
      rc.variant = json_get<std::string>(v, key);
    } else if (key == "scaling_enabled") {
      rc.scaling_enabled = json_get<bool>(v, key);
    } else if (key == "gated") {
      rc.gated = json_get<bool>(v, key);
    } else if (key == "seed") {
      rc.seed = json_get<std::uint64_t>(v, key);
    } else if (key == "trials") {
      rc.trials = json_get<std::size_t>(v, key);
    } else if (key == "tp") {
      rc.tp = v.is_number() ? std::vector<std::size_t>{json_get<std::size_t>(v, key)}
                            : json_get<std::vector<std::size_t>>(v, key);
    } else if (key == "hardware") {
      for (const auto& [hk, hv] : v.items()) {
        if (hk == "hbm_bandwidth") {
          rc.hardware.hbm_bandwidth = json_get<double>(hv, hk);
        } else if (hk == "peak_flops") {
          rc.hardware.peak_flops = json_get<double>(hv, hk);
        } else if (hk == "bytes_per_element") {
          rc.hardware.bytes_per_element = json_get<int>(hv, hk);
        } else {
          throw ConfigError(fmt::format("unknown hardware key '{}'", hk));
        }
      }
    } else if (key == "context_tokens") {
      rc.context_tokens = json_get<std::int64_t>(v, key);
    } else if (key == "steps") {
      rc.steps = json_get<std::size_t>(v, key);
    } else if (key == "sigma_w") {
      rc.sigma_w = json_get<double>(v, key);
    } else if (key == "context") {
      rc.context = json_get<std::string>(v, key);
    } else if (key == "format") {
      rc.format = json_get<std::string>(v, key);
    } else if (key == "out") {
      rc.out = json_get<std::string>(v, key);
    } else {
      throw ConfigError(fmt::format("unknown config key '{}'", key));
    }
  }
  return rc;
}

AttnConfig resolve_config(const RunConfig& rc, AttnConfig base) {
  for (const auto& [key, value] : rc.dims) dim_field(base, key) = value;
  if (rc.scaling_enabled) base.scaling_enabled = *rc.scaling_enabled;
  if (rc.gated) base.gated = *rc.gated;
  const bool uses_rope_slice = is_latent(base.variant) || base.variant == Variant::GTA;
  if (rc.dims.contains("d_h")) {
    if (is_latent(base.variant) && !rc.dims.contains("d_c")) base.d_c = 4 * base.d_h;
    if (uses_rope_slice && !rc.dims.contains("d_hR")) base.d_hR = base.d_h / 2;
  }
  if (is_latent(base.variant)) base = with_latent_defaults(base);
  validate(base);
  return base;
}

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"attnkit: attention variant analysis kit", "attnkit"};
  app.require_subcommand(1);

  std::string config_path, variant, format, out_path, context, tp_text;
  std::uint64_t seed = 0;
  std::size_t trials = 0, steps = 0;
  std::int64_t tokens = 0;
  double sigma = 0.0;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run config; flags override its values");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--out", out_path, "output file (default stdout)");
  };
  CLI::App* equiv = app.add_subcommand("equiv", "naive vs absorbed decoding suite");
  common(equiv);
  equiv->add_option("--variant", variant, "variant or comma list (default mla,gla2,mlra2,mlra4)");
  equiv->add_option("--trials", trials, "randomized trials (default 1000)");

  CLI::App* tables = app.add_subcommand("tables", "per-device loading and arithmetic intensity tables");
  common(tables);
  tables->add_option("--context", context, "kimi (h=64 context) or main (full-size configs)");
  tables->add_option("--format", format, "csv or json");
  tables->add_option("--variant", variant, "restrict to a comma list of variants");

  CLI::App* variance = app.add_subcommand("variance", "Monte Carlo variance report");
  common(variance);
  variance->add_option("--variant", variant, "latent variant (default mla)");
  variance->add_option("--trials", trials, "samples per component (default 100000)");
  variance->add_option("--sigma", sigma, "weight standard deviation (default 0.02)");
  variance->add_option("--format", format, "json or csv");

  CLI::App* sim = app.add_subcommand("simulate-tp", "tensor-parallel decode simulation with traffic ledger");
  common(sim);
  sim->add_option("--variant", variant, "variant (default mla)");
  sim->add_option("--tp", tp_text, "comma list of TP degrees (default 1,2,4,8)");
  sim->add_option("--steps", steps, "decode steps (default 2)");

  CLI::App* roof = app.add_subcommand("roofline", "decode-time projections on a roofline");
  common(roof);
  roof->add_option("--variant", variant, "restrict to a comma list of variants");
  roof->add_option("--tp", tp_text, "comma list of TP degrees (default 1,2,4,8)");
  roof->add_option("--context-tokens", tokens, "cached tokens (default 131072)");
  roof->add_option("--format", format, "csv or json");

  CLI::App* self = app.add_subcommand("selftest", "acceptance matrix, criteria 1 to 10");
  common(self);
  self->add_option("--format", format, "text or json");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  auto given = [&](const char* flag) {
    try {
      return sub->get_option(flag)->count() > 0;
    } catch (const CLI::OptionNotFound&) {
      return false;
    }
  };
  try {
    RunConfig rc = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (given("--variant")) rc.variant = variant;
    if (given("--seed")) rc.seed = seed;
    if (given("--out")) rc.out = out_path;
    if (given("--format")) rc.format = format;
    if (given("--context")) rc.context = context;
    if (given("--trials")) rc.trials = trials;
    if (given("--steps")) rc.steps = steps;
    if (given("--sigma")) rc.sigma_w = sigma;
    if (given("--context-tokens")) rc.context_tokens = tokens;
    if (given("--tp")) rc.tp = parse_tp(tp_text);

    const std::string name = sub->get_name();
    if (name == "equiv") return cmd_equiv(rc, out);
    if (name == "tables") return cmd_tables(rc, out);
    if (name == "variance") return cmd_variance(rc, out);
    if (name == "simulate-tp") return cmd_simulate_tp(rc, out);
    if (name == "roofline") return cmd_roofline(rc, out);
    return cmd_selftest(rc, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n\n" << sub->help();
    return kExitUsage;
  } catch (const RoutingError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

int run_command(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_command(args, std::cout, std::cerr);
}

}  // namespace attnkit::cli
