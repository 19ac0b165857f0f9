// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdf/autodiff.hpp"
#include "sdf/geometry.hpp"
#include "sdf/param_store.hpp"
#include "sdf/tensor.hpp"
#include "sdf/voxel.hpp"

namespace sdf {

enum class OffsetUnits : std::uint8_t {
  kNormalized,  // offsets are fractions of the map width / height
  kPixels,
};

struct DeformAttnConfig {
  std::size_t num_heads = 2;
  std::size_t num_points = 4;
  std::size_t embed_dim = 32;
  OffsetUnits offset_units = OffsetUnits::kNormalized;

  void validate() const;
  std::size_t head_dim() const { return embed_dim / num_heads; }
};

// Bilinear sample of a [C x H_f x W_f] map at (u, v) in map pixels, giving
// [C]. Texel (i, j) is centred at (j + 0.5, i + 0.5); outside reads zero.
Tensor bilinear_sample(const Tensor& map, double u, double v);

/// Batched single-map deformable attention.
///
/// For each query row, every head predicts K offsets and K logits by linear
/// maps of the query; the map is bilinearly sampled at reference + offset,
/// the samples are value-projected ([C] -> [D]) and combined with the
/// softmax weights per head, and the concatenated heads go through a
/// bias-free output projection. Parameters under `prefix`:
///   .offsets [D x heads*K*2]   .weights [D x heads*K]
///   .value   [C x D] + bias    .output  [D x D]
/// `ref_uv` holds one (u, v) per query in map pixels. Returns the update
/// [M x D], before any residual.
ad::Var deform_attn(ad::Var queries, std::span<const std::array<double, 2>> ref_uv, ad::Var map,
                    const DeformAttnConfig& cfg, ParamStore& store, const std::string& prefix);

// Single query on a private tape.
Tensor deform_attn(const Tensor& query, double u, double v, const Tensor& map,
                   const DeformAttnConfig& cfg, ParamStore& store, const std::string& prefix);

// Softmax attention weights of one query, [heads x K].
Tensor deform_attn_weights(const Tensor& query, const DeformAttnConfig& cfg, ParamStore& store,
                           const std::string& prefix);

/// Reference points of each query, projected into every view.
struct RefPointSet {
  struct Ref {
    Vec3 world = Vec3::Zero();                  // in the (un-augmented) sensor frame
    std::vector<std::optional<Projection>> views;  // present iff the view is hit
  };
  std::size_t num_views = 0;
  std::vector<std::vector<Ref>> queries;

  // |V_hit| of query q: views hit by at least one of its reference points.
  std::size_t hit_view_count(std::size_t q) const;
};

// Reference points are given in the augmented frame; they are mapped back
// through `aug` and then projected.
RefPointSet build_ref_points(std::span<const std::vector<Vec3>> points_per_query,
                             std::span<const CameraGeometry> cameras, const AugRecord& aug = {});

// One camera as seen by the attention kernels.
struct ViewInput {
  int id = 0;
  CameraGeometry geometry;
  ad::Var map;  // [C x H_f x W_f]
};

// Pre-residual voxel-to-camera update: for every query, the sum of
// deform_attn over all (hit view, reference point) pairs, divided by the
// number of hit views; zero for queries with no hit. Views are reduced in
// ascending id order, then by reference point.
ad::Var v2c_update(ad::Var queries, const RefPointSet& refs, std::span<const ViewInput> views,
                   const DeformAttnConfig& cfg, ParamStore& store, const std::string& prefix);

// queries + v2c_update(...)
ad::Var v2c_cross_attention(ad::Var queries, const RefPointSet& refs,
                            std::span<const ViewInput> views, const DeformAttnConfig& cfg,
                            ParamStore& store, const std::string& prefix);

// Value-level form: updated (index, feature) pairs.
std::vector<std::pair<VoxelIndex, Tensor>> v2c_cross_attention(
    const std::vector<std::pair<VoxelIndex, Tensor>>& queries, const RefPointSet& refs,
    std::span<const CameraView> cameras, const DeformAttnConfig& cfg, ParamStore& store,
    const std::string& prefix = "v2c.0");

// Centres of the voxel and its in-grid 6-neighbours (self, -x, +x, -y, +y,
// -z, +z).
std::vector<Vec3> extended_ref_points(const VoxelIndex& index, const GridMeta& stage_meta);

// Wraps a list of cameras as constant tape inputs.
std::vector<ViewInput> constant_views(ad::Tape& tape, std::span<const CameraView> cameras);

}  // namespace sdf
