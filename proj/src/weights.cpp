// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright contributors to the attnkit project
#include "attnkit/weights.hpp"

#include <fmt/format.h>

#include "attnkit/error.hpp"
#include "attnkit/latent.hpp"

namespace attnkit {

const Tensor& WeightSet::at(std::string_view name) const {
  auto it = tensors.find(std::string(name));
  if (it == tensors.end()) {
    throw ConfigError(fmt::format("{} weights have no matrix {}", variant_label(cfg), name));
  }
  return it->second;
}

Tensor& WeightSet::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

bool WeightSet::has(std::string_view name) const { return tensors.contains(std::string(name)); }

std::size_t WeightSet::element_count() const {
  std::size_t total = 0;
  for (const auto& [name, t] : tensors) total += t.size();
  return total;
}

std::vector<std::pair<std::string, Shape>> weight_shapes(const AttnConfig& cfg) {
  validate(cfg);
  const std::size_t d = cfg.d, h = cfg.h, dh = cfg.d_h;
  std::vector<std::pair<std::string, Shape>> shapes;
  auto add = [&](const char* name, Shape s) { shapes.emplace_back(name, std::move(s)); };
  switch (cfg.variant) {
    case Variant::MHA:
    case Variant::MQA:
    case Variant::GQA: {
      const std::size_t kv = kv_heads(cfg);
      add("W_Q", {d, h * dh});
      add("W_K", {d, kv * dh});
      add("W_V", {d, kv * dh});
      break;
    }
    case Variant::MFA:
      add("W_CQ", {d, cfg.d_cq});
      add("W_UQ", {cfg.d_cq, h * 2 * dh});
      add("W_K", {d, 2 * dh});
      add("W_V", {d, 2 * dh});
      break;
    case Variant::TPA:
      add("W_AQ", {d, cfg.beta_q * h});
      add("W_CQ", {d, cfg.beta_q * dh});
      add("W_AK", {d, cfg.beta_kv * h});
      add("W_CK", {d, cfg.beta_kv * dh});
      add("W_AV", {d, cfg.beta_kv * h});
      add("W_CV", {d, cfg.beta_kv * dh});
      break;
    case Variant::GTA:
      add("W_Q", {d, h * dh});
      add("W_KV", {d, cfg.g * dh});
      add("W_KR", {d, cfg.d_hR});
      break;
    case Variant::MLA:
    case Variant::GLA:
    case Variant::MLRA: {
      const LatentLayout lay = latent_layout(cfg);
      add("W_DQ", {d, cfg.d_cq});
      add("W_UQ", {cfg.d_cq, h * dh});
      add("W_QR", {cfg.d_cq, h * cfg.d_hR});
      add("W_DKV", {d, cfg.d_c});
      add("W_KR", {d, cfg.d_hR});
      if (lay.groups == 1) {
        add("W_UK", {cfg.d_c, h * dh});
        add("W_UV", {cfg.d_c, h * dh});
      } else {
        add("W_UK", {lay.groups, lay.group_width, lay.heads_per_group * dh});
        add("W_UV", {lay.groups, lay.group_width, lay.heads_per_group * dh});
      }
      break;
    }
  }
  const std::size_t out = h * head_out_dim(cfg);
  if (cfg.gated) add("W_G", {d, out});
  add("W_O", {out, d});
  return shapes;
}

WeightSet build_weights(const AttnConfig& cfg, double sigma, const Rng& rng, bool zero_output) {
  WeightSet w;
  w.cfg = cfg;
  for (auto& [name, shape] : weight_shapes(cfg)) {
    Rng stream = rng.split(name);
    const double s = (zero_output && name == "W_O") ? 0.0 : sigma;
    w.tensors.emplace(name, gaussian_init(shape, s, stream));
  }
  return w;
}

WeightView::WeightView(std::map<std::string, Shape> full_shapes, std::vector<WeightSlice> slices)
    : full_shapes_(full_shapes.begin(), full_shapes.end()), slices_(std::move(slices)) {
  for (const auto& s : slices_) {
    auto it = full_shapes_.find(s.name);
    if (it == full_shapes_.end()) throw IntegrityError(fmt::format("slice of unknown weight {}", s.name));
    const Shape& full = it->second;
    if (s.offset.size() != full.size() || s.data->rank() != full.size()) {
      throw IntegrityError(fmt::format("slice of {} has the wrong rank", s.name));
    }
    for (std::size_t a = 0; a < full.size(); ++a) {
      if (s.offset[a] + s.data->dim(a) > full[a]) {
        throw IntegrityError(fmt::format("slice of {} extends past {}", s.name, shape_string(full)));
      }
    }
  }
}

WeightView WeightView::of(const WeightSet& w) {
  std::map<std::string, Shape> shapes;
  std::vector<WeightSlice> slices;
  for (const auto& [name, t] : w.tensors) {
    shapes.emplace(name, t.shape());
    slices.push_back({name, Shape(t.rank(), 0), std::make_shared<const Tensor>(t)});
  }
  return WeightView(std::move(shapes), std::move(slices));
}

const Shape& WeightView::full_shape(std::string_view name) const {
  auto it = full_shapes_.find(name);
  if (it == full_shapes_.end()) throw ConfigError(fmt::format("weight view has no matrix {}", name));
  return it->second;
}

bool WeightView::knows(std::string_view name) const { return full_shapes_.find(name) != full_shapes_.end(); }

Tensor WeightView::fetch(std::string_view name, const Shape& offsets, const Shape& extents) const {
  const Shape& full = full_shape(name);
  if (offsets.size() != full.size() || extents.size() != full.size()) {
    throw DimensionError(fmt::format("fetch {}: request rank does not match {}", name, shape_string(full)));
  }
  for (const auto& s : slices_) {
    if (s.name != name) continue;
    bool inside = true;
    Shape local(offsets.size());
    for (std::size_t a = 0; a < offsets.size() && inside; ++a) {
      inside = offsets[a] >= s.offset[a] && offsets[a] + extents[a] <= s.offset[a] + s.data->dim(a);
      if (inside) local[a] = offsets[a] - s.offset[a];
    }
    if (inside) return s.data->block(local, extents);
  }
  throw IntegrityError(fmt::format("{} block at {} of extent {} is not held by this view", name,
                                   shape_string(offsets), shape_string(extents)));
}

Tensor WeightView::whole(std::string_view name) const {
  const Shape& full = full_shape(name);
  return fetch(name, Shape(full.size(), 0), full);
}

Tensor WeightView::cols(std::string_view name, std::size_t begin, std::size_t end) const {
  const Shape& full = full_shape(name);
  if (full.size() != 2 || begin > end || end > full[1]) {
    throw DimensionError(fmt::format("cols {}: [{}, {}) outside {}", name, begin, end, shape_string(full)));
  }
  return fetch(name, {0, begin}, {full[0], end - begin});
}

}  // namespace attnkit
