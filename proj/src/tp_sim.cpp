// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/tp_sim.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "attnkit/cost_model.hpp"
#include "attnkit/decode.hpp"
#include "attnkit/error.hpp"
#include "attnkit/latent.hpp"
#include "attnkit/parallel.hpp"

namespace attnkit {

namespace {

struct Grid {
  std::size_t head_parts = 1;
  std::size_t block_parts = 1;
};

Grid device_grid(const AttnConfig& cfg, std::size_t phi) {
  check_tp_degree(phi);
  Grid g{phi, 1};
  if (cfg.variant == Variant::MLRA) {
    if (cfg.branches == 4) {
      g.block_parts = std::min<std::size_t>(phi, 4);
      g.head_parts = phi / g.block_parts;
    } else if (phi >= 4) {
      g.block_parts = 2;
      g.head_parts = phi / 2;
    }
  }
  if (cfg.h % g.head_parts != 0) {
    throw ConfigError(fmt::format("{}: {} heads cannot be split over {} head shards (shardable axis: heads)",
                                  variant_label(cfg), cfg.h, g.head_parts));
  }
  if (is_latent(cfg.variant)) {
    const LatentLayout lay = latent_layout(cfg);
    if (lay.blocks % g.block_parts != 0) {
      throw ConfigError(fmt::format("{}: {} latent blocks cannot be split over {} block shards", variant_label(cfg),
                                    lay.blocks, g.block_parts));
    }
  }
  return g;
}

class SliceBuilder {
 public:
  explicit SliceBuilder(const WeightSet& w) : w_(w) {}

  void add(const std::string& name, Shape offsets, Shape extents) {
    auto block = std::make_shared<const Tensor>(w_.at(name).block(offsets, extents));
    slices_.push_back({name, std::move(offsets), std::move(block)});
  }
  void add_full(const std::string& name) {
    const Tensor& t = w_.at(name);
    add(name, Shape(t.rank(), 0), t.shape());
  }
  void add_cols(const std::string& name, std::size_t begin, std::size_t end) {
    add(name, {0, begin}, {w_.at(name).rows(), end - begin});
  }
  std::vector<WeightSlice> take() { return std::move(slices_); }

 private:
  const WeightSet& w_;
  std::vector<WeightSlice> slices_;
};

std::vector<std::size_t> range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> v;
  for (std::size_t c = begin; c < end; ++c) v.push_back(c);
  return v;
}

bool excluded(const std::string& name) { return name == "W_O" || name == "W_G"; }

/// Weight slices and owned cache columns of one device.
DeviceShard build_shard(const AttnConfig& cfg, const WeightSet& w, std::size_t id, const Scope& s) {
  SliceBuilder sb(w);
  std::map<std::string, std::vector<std::size_t>> owned;
  std::set<std::string> sharded;
  const std::size_t i0 = s.head_begin, i1 = s.head_end, dh = cfg.d_h;
  auto mark = [&](const char* name) { sharded.insert(name); };

  switch (cfg.variant) {
    case Variant::MHA:
    case Variant::MQA:
    case Variant::GQA:
    case Variant::MFA:
    case Variant::GTA: {
      const std::size_t dd = head_out_dim(cfg), hpk = heads_per_kv(cfg);
      const std::size_t k0 = i0 / hpk, k1 = (i1 - 1) / hpk + 1;
      if (cfg.variant == Variant::MFA) {
        sb.add_cols("W_UQ", i0 * dd, i1 * dd);
        mark("W_UQ");
      } else {
        sb.add_cols("W_Q", i0 * dh, i1 * dh);
        mark("W_Q");
      }
      if (cfg.variant == Variant::GTA) {
        sb.add_cols("W_KV", k0 * dh, k1 * dh);
        mark("W_KV");
        owned["V_C"] = range(k0 * dh, k1 * dh);
      } else {
        for (const char* name : {"W_K", "W_V"}) {
          sb.add_cols(name, k0 * dd, k1 * dd);
          mark(name);
        }
        owned["K"] = range(k0 * dd, k1 * dd);
        owned["V"] = range(k0 * dd, k1 * dd);
      }
      break;
    }
    case Variant::TPA: {
      for (const char* name : {"W_AQ", "W_AK", "W_AV"}) {
        const std::size_t beta = std::string_view(name) == "W_AQ" ? cfg.beta_q : cfg.beta_kv;
        std::vector<std::size_t> cols;
        for (std::size_t b = 0; b < beta; ++b) {
          for (std::size_t i = i0; i < i1; ++i) cols.push_back(b * cfg.h + i);
        }
        for (auto [begin, end] : column_runs(cols)) sb.add_cols(name, begin, end);
        mark(name);
      }
      std::vector<std::size_t> coeff;
      for (std::size_t b = 0; b < cfg.beta_kv; ++b) {
        for (std::size_t i = i0; i < i1; ++i) coeff.push_back(b * cfg.h + i);
      }
      owned["K_A"] = coeff;
      owned["V_A"] = coeff;
      break;
    }
    case Variant::MLA:
    case Variant::GLA:
    case Variant::MLRA: {
      const LatentLayout lay = latent_layout(cfg);
      const std::size_t w_blk = lay.block_width;
      sb.add_cols("W_UQ", i0 * dh, i1 * dh);
      sb.add_cols("W_QR", i0 * cfg.d_hR, i1 * cfg.d_hR);
      mark("W_UQ");
      mark("W_QR");
      std::vector<std::size_t> cols;
      const std::size_t r = lay.heads_per_group;
      for (std::size_t gamma = i0 / r; gamma <= (i1 - 1) / r; ++gamma) {
        const std::size_t a = std::max(i0, gamma * r), b = std::min(i1, (gamma + 1) * r);
        for (const char* name : {"W_UK", "W_UV"}) {
          if (lay.groups == 1) {
            sb.add(name, {s.block_begin * w_blk, a * dh}, {(s.block_end - s.block_begin) * w_blk, (b - a) * dh});
          } else {
            sb.add(name, {gamma, s.block_begin * w_blk, (a - gamma * r) * dh},
                   {1, (s.block_end - s.block_begin) * w_blk, (b - a) * dh});
          }
        }
        const std::size_t base = gamma * lay.group_width;
        for (std::size_t c = base + s.block_begin * w_blk; c < base + s.block_end * w_blk; ++c) cols.push_back(c);
      }
      mark("W_UK");
      mark("W_UV");
      owned["C_KV"] = cols;
      break;
    }
  }
  std::map<std::string, Shape> shapes;
  for (const auto& [name, t] : w.tensors) {
    if (excluded(name)) continue;
    shapes.emplace(name, t.shape());
    if (!sharded.contains(name)) sb.add_full(name);
  }
  return DeviceShard{id, s, WeightView(std::move(shapes), sb.take()), make_cache(cfg, owned)};
}

}  // namespace

const char* reduction_name(ReductionKind k) { return k == ReductionKind::Sum ? "sum" : "concat"; }

ShardPlan make_shards(const AttnConfig& cfg, const WeightSet& w, std::size_t phi) {
  validate(cfg);
  const Grid g = device_grid(cfg, phi);
  ShardPlan plan;
  plan.cfg = cfg;
  plan.phi = phi;
  plan.head_parts = g.head_parts;
  plan.block_parts = g.block_parts;
  plan.expected = g.block_parts > 1 ? ReductionKind::Sum : ReductionKind::Concat;
  const Scope all = Scope::all(cfg);
  const std::size_t heads = cfg.h / g.head_parts, blocks = all.block_end / g.block_parts;
  for (std::size_t hp = 0; hp < g.head_parts; ++hp) {
    for (std::size_t bp = 0; bp < g.block_parts; ++bp) {
      const Scope s{hp * heads, (hp + 1) * heads, bp * blocks, (bp + 1) * blocks};
      plan.shards.push_back(build_shard(cfg, w, hp * g.block_parts + bp, s));
    }
  }
  return plan;
}

void verify_shards(const ShardPlan& plan, const WeightSet& w) {
  for (const auto& [name, full] : w.tensors) {
    if (excluded(name)) continue;
    std::vector<bool> covered(full.size(), false);
    const Shape& shape = full.shape();
    for (const auto& shard : plan.shards) {
      for (const auto& s : shard.weights.slices()) {
        if (s.name != name) continue;
        const Shape& ext = s.data->shape();
        Shape idx(ext.size(), 0);
        for (std::size_t k = 0; k < s.data->size(); ++k) {
          std::size_t flat = 0;
          for (std::size_t a = 0; a < ext.size(); ++a) flat = flat * shape[a] + s.offset[a] + idx[a];
          if ((*s.data)[k] != full[flat]) {
            throw IntegrityError(fmt::format("device {} holds a stale copy of {}", shard.id, name));
          }
          covered[flat] = true;
          for (std::size_t a = ext.size(); a-- > 0;) {
            if (++idx[a] < ext[a]) break;
            idx[a] = 0;
          }
        }
      }
    }
    const auto missing = std::count(covered.begin(), covered.end(), false);
    if (missing != 0) {
      throw IntegrityError(fmt::format("{} elements of {} are held by no device", missing, name));
    }
  }
}

SimResult sim_decode(ShardPlan& plan, std::span<const double> h_t) {
  const AttnConfig& cfg = plan.cfg;
  const std::size_t n_dev = plan.shards.size();
  std::vector<Tensor> partial(n_dev);
  std::vector<ReadCounter> counters(n_dev);
  parallel_for(n_dev, [&](std::size_t k) {
    DeviceShard& d = plan.shards[k];
    if (is_latent(cfg.variant)) {
      partial[k] = latent_decode_scoped(cfg, d.weights, d.scope, d.cache, h_t, DecodeMode::Absorbed, &counters[k],
                                        false);
    } else {
      partial[k] = baseline_decode_scoped(cfg, d.weights, d.scope, d.cache, h_t, &counters[k]);
    }
  });

  SimResult res;
  res.o = Tensor({cfg.h, head_out_dim(cfg)});
  std::vector<std::size_t> contributors(cfg.h, 0);
  for (std::size_t k = 0; k < n_dev; ++k) {
    const Scope& s = plan.shards[k].scope;
    for (std::size_t i = s.head_begin; i < s.head_end; ++i) {
      auto dst = res.o.row(i);
      auto src = partial[k].row(i - s.head_begin);
      for (std::size_t p = 0; p < dst.size(); ++p) dst[p] += src[p];
      ++contributors[i];
    }
  }
  if (std::count(contributors.begin(), contributors.end(), 0) != 0) {
    throw IntegrityError("some head was computed by no device");
  }
  res.kind = *std::max_element(contributors.begin(), contributors.end()) > 1 ? ReductionKind::Sum
                                                                              : ReductionKind::Concat;
  if (res.kind != plan.expected) {
    throw IntegrityError(fmt::format("{} at TP={}: reduction is a {} but the sharding rule requires a {}",
                                     variant_label(cfg), plan.phi, reduction_name(res.kind),
                                     reduction_name(plan.expected)));
  }
  if (is_latent(cfg.variant)) {
    const double alpha = calib_factors(cfg).alpha_attn();
    res.o = scale(res.o, alpha);
  }

  TrafficLedger& led = res.ledger;
  led.n = plan.shards.front().cache.length();
  std::map<std::string, std::vector<std::size_t>> col_hits;
  for (std::size_t k = 0; k < n_dev; ++k) {
    led.reads.push_back(counters[k].total());
    for (const auto& [name, count] : counters[k].per_tensor()) {
      if (count == 0) continue;
      led.readers[name].push_back(k);
      auto& hits = col_hits[name];
      for (std::size_t c : counters[k].columns(name)) {
        if (hits.size() <= c) hits.resize(c + 1, 0);
        ++hits[c];
      }
    }
  }
  for (const auto& [name, hits] : col_hits) {
    if (std::any_of(hits.begin(), hits.end(), [](std::size_t x) { return x > 1; })) led.replicated.push_back(name);
  }
  return res;
}

Tensor single_device_decode(const AttnConfig& cfg, const WeightSet& w, KvCache& cache, std::span<const double> h_t) {
  return decode_step(cfg, w, cache, h_t, DecodeMode::Absorbed);
}

}  // namespace attnkit
