// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdf/attention.hpp"

#include <algorithm>
#include <numeric>

#include "sdf/errors.hpp"
#include "sdf/layers.hpp"
#include "sdf/sampling.hpp"

namespace sdf {

void DeformAttnConfig::validate() const {
  if (num_heads == 0 || embed_dim % num_heads != 0) {
    throw ConfigError("attention: embed_dim " + std::to_string(embed_dim) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (num_points == 0) throw ConfigError("attention: num_points must be >= 1");
}

Tensor bilinear_sample(const Tensor& map, double u, double v) {
  if (map.rank() != 3) {
    throw DimensionError("bilinear_sample: map must be [C x H x W], got " +
                         shape_to_string(map.shape()));
  }
  Tensor out({map.dim(0)});
  bilinear_read(map, u, v, out.data());
  return out;
}

ad::Var deform_attn(ad::Var queries, std::span<const std::array<double, 2>> ref_uv, ad::Var map,
                    const DeformAttnConfig& cfg, ParamStore& store, const std::string& prefix) {
  cfg.validate();
  if (queries.value().rank() != 2 || queries.dim(1) != cfg.embed_dim) {
    throw DimensionError("deform_attn '" + prefix + "': queries " +
                         shape_to_string(queries.shape()) + " vs embed_dim " +
                         std::to_string(cfg.embed_dim));
  }
  if (map.value().rank() != 3) {
    throw DimensionError("deform_attn '" + prefix + "': map " + shape_to_string(map.shape()) +
                         " is not [C x H x W]");
  }
  const std::size_t m = queries.dim(0);
  if (ref_uv.size() != m) {
    throw DimensionError("deform_attn '" + prefix + "': " + std::to_string(ref_uv.size()) +
                         " reference points for " + std::to_string(m) + " queries");
  }
  const std::size_t heads = cfg.num_heads, k = cfg.num_points, d = cfg.embed_dim;
  const std::size_t samples = m * heads * k;
  ad::Tape& tape = queries.tape();

  ad::Var offsets = linear(store, prefix + ".offsets", queries, heads * k * 2);
  offsets = ad::reshape(offsets, {samples, 2});
  if (cfg.offset_units == OffsetUnits::kNormalized) {
    const double w = static_cast<double>(map.dim(2)), h = static_cast<double>(map.dim(1));
    offsets = ad::mul_row(offsets, tape.constant(Tensor({2}, {w, h})));
  }
  Tensor refs({samples, 2});
  for (std::size_t q = 0; q < m; ++q)
    for (std::size_t s = 0; s < heads * k; ++s) {
      refs[(q * heads * k + s) * 2] = ref_uv[q][0];
      refs[(q * heads * k + s) * 2 + 1] = ref_uv[q][1];
    }
  ad::Var locations = ad::add(offsets, tape.constant(std::move(refs)));

  ad::Var logits = linear(store, prefix + ".weights", queries, heads * k);
  ad::Var weights = ad::softmax(ad::reshape(logits, {m * heads, k}));

  ad::Var sampled = ad::bilinear_sample(map, locations);
  ad::Var values = linear(store, prefix + ".value", sampled, d);
  ad::Var combined = ad::head_weighted_sum(weights, values, heads);
  return linear(store, prefix + ".output", combined, d, /*with_bias=*/false);
}

Tensor deform_attn(const Tensor& query, double u, double v, const Tensor& map,
                   const DeformAttnConfig& cfg, ParamStore& store, const std::string& prefix) {
  ad::Tape tape;
  ad::Var q = tape.constant(query.reshaped({1, query.numel()}));
  const std::array<double, 2> ref{u, v};
  ad::Var out = deform_attn(q, std::span(&ref, 1), tape.constant(map), cfg, store, prefix);
  return out.value().reshaped({cfg.embed_dim});
}

Tensor deform_attn_weights(const Tensor& query, const DeformAttnConfig& cfg, ParamStore& store,
                           const std::string& prefix) {
  cfg.validate();
  ad::Tape tape;
  ad::Var q = tape.constant(query.reshaped({1, query.numel()}));
  ad::Var logits = linear(store, prefix + ".weights", q, cfg.num_heads * cfg.num_points);
  return ad::softmax(ad::reshape(logits, {cfg.num_heads, cfg.num_points})).value();
}

std::size_t RefPointSet::hit_view_count(std::size_t q) const {
  std::size_t n = 0;
  for (std::size_t v = 0; v < num_views; ++v) {
    for (const Ref& r : queries[q]) {
      if (r.views[v]) {
        ++n;
        break;
      }
    }
  }
  return n;
}

RefPointSet build_ref_points(std::span<const std::vector<Vec3>> points_per_query,
                             std::span<const CameraGeometry> cameras, const AugRecord& aug) {
  aug.validate();
  RefPointSet set;
  set.num_views = cameras.size();
  set.queries.resize(points_per_query.size());
  for (std::size_t q = 0; q < points_per_query.size(); ++q) {
    auto& refs = set.queries[q];
    refs.reserve(points_per_query[q].size());
    for (const Vec3& p : points_per_query[q]) {
      RefPointSet::Ref r;
      r.world = invert_augmentation(p, aug);
      r.views.reserve(cameras.size());
      for (const CameraGeometry& cam : cameras) r.views.push_back(project_to_image(r.world, cam));
      refs.push_back(std::move(r));
    }
  }
  return set;
}

ad::Var v2c_update(ad::Var queries, const RefPointSet& refs, std::span<const ViewInput> views,
                   const DeformAttnConfig& cfg, ParamStore& store, const std::string& prefix) {
  const std::size_t n = queries.dim(0);
  if (refs.queries.size() != n) {
    throw DimensionError("v2c: " + std::to_string(refs.queries.size()) + " reference sets for " +
                         std::to_string(n) + " queries");
  }
  if (refs.num_views != views.size()) {
    throw DimensionError("v2c: reference set built for " + std::to_string(refs.num_views) +
                         " views, got " + std::to_string(views.size()));
  }
  ad::Tape& tape = queries.tape();
  std::vector<double> inv_hits(n, 0.0);
  for (std::size_t q = 0; q < n; ++q) {
    const std::size_t h = refs.hit_view_count(q);
    if (h) inv_hits[q] = 1.0 / static_cast<double>(h);
  }

  std::vector<std::size_t> order(views.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return views[a].id < views[b].id; });

  std::optional<ad::Var> total;
  for (std::size_t vi : order) {
    const ViewInput& view = views[vi];
    const std::size_t mh = view.map.dim(1), mw = view.map.dim(2);
    ad::RowPlan gather;
    std::vector<std::array<double, 2>> uv;
    std::vector<std::size_t> owner;
    for (std::size_t q = 0; q < n; ++q) {
      for (const RefPointSet::Ref& r : refs.queries[q]) {
        if (!r.views[vi]) continue;
        double fu = 0.0, fv = 0.0;
        image_to_feature(view.geometry, mh, mw, r.views[vi]->u, r.views[vi]->v, fu, fv);
        uv.push_back({fu, fv});
        gather.add(q, 1.0);
        gather.end_row();
        owner.push_back(q);
      }
    }
    if (uv.empty()) continue;
    ad::Var attended =
        deform_attn(ad::row_combine(queries, gather), uv, view.map, cfg, store, prefix);
    ad::RowPlan scatter;
    std::size_t m = 0;
    for (std::size_t q = 0; q < n; ++q) {
      while (m < owner.size() && owner[m] == q) {
        scatter.add(m, inv_hits[q]);
        ++m;
      }
      scatter.end_row();
    }
    ad::Var part = ad::row_combine(attended, scatter);
    total = total ? ad::add(*total, part) : part;
  }
  if (!total) return tape.constant(Tensor({n, queries.dim(1)}));
  return *total;
}

ad::Var v2c_cross_attention(ad::Var queries, const RefPointSet& refs,
                            std::span<const ViewInput> views, const DeformAttnConfig& cfg,
                            ParamStore& store, const std::string& prefix) {
  return ad::add(queries, v2c_update(queries, refs, views, cfg, store, prefix));
}

std::vector<ViewInput> constant_views(ad::Tape& tape, std::span<const CameraView> cameras) {
  std::vector<ViewInput> views;
  views.reserve(cameras.size());
  for (const CameraView& c : cameras) {
    views.push_back(ViewInput{c.id, c.geometry, tape.constant(c.feature_map)});
  }
  return views;
}

std::vector<std::pair<VoxelIndex, Tensor>> v2c_cross_attention(
    const std::vector<std::pair<VoxelIndex, Tensor>>& queries, const RefPointSet& refs,
    std::span<const CameraView> cameras, const DeformAttnConfig& cfg, ParamStore& store,
    const std::string& prefix) {
  if (cameras.empty()) throw ConfigError("v2c: at least one camera is required");
  const std::size_t n = queries.size(), d = cfg.embed_dim;
  Tensor q({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    if (queries[i].second.numel() != d) {
      throw DimensionError("v2c: query " + std::to_string(i) + " has " +
                           std::to_string(queries[i].second.numel()) + " channels, expected " +
                           std::to_string(d));
    }
    std::copy_n(queries[i].second.data().begin(), d, &q[i * d]);
  }
  ad::Tape tape;
  const auto views = constant_views(tape, cameras);
  const Tensor& out = v2c_cross_attention(tape.constant(q), refs, views, cfg, store, prefix).value();
  std::vector<std::pair<VoxelIndex, Tensor>> result;
  result.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Tensor f({d});
    std::copy_n(&out[i * d], d, f.data().begin());
    result.emplace_back(queries[i].first, std::move(f));
  }
  return result;
}

std::vector<Vec3> extended_ref_points(const VoxelIndex& index, const GridMeta& stage_meta) {
  static constexpr int kOffsets[7][3] = {{0, 0, 0},  {-1, 0, 0}, {1, 0, 0}, {0, -1, 0},
                                         {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
  if (!in_range(index, stage_meta)) throw RangeError("extended_ref_points: index outside grid");
  std::vector<Vec3> out;
  for (const auto& o : kOffsets) {
    const VoxelIndex n{index.x + o[0], index.y + o[1], index.z + o[2]};
    if (in_range(n, stage_meta)) out.push_back(voxel_center(n, stage_meta));
  }
  return out;
}

}  // namespace sdf
