// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <unordered_map>
#include <vector>

#include "sdf/autodiff.hpp"
#include "sdf/geometry.hpp"
#include "sdf/param_store.hpp"
#include "sdf/tensor.hpp"

namespace sdf {

struct LidarPoint {
  Vec3 position = Vec3::Zero();
  double intensity = 0.0;
};

using PointCloud = std::vector<LidarPoint>;

// Number of hand-crafted per-voxel input channels: mean (dx, dy, dz) offset
// from the voxel centre, mean intensity, log(1 + point count).
inline constexpr std::size_t kVoxelInputChannels = 5;

/// Set of valid voxels of one grid, in lexicographic (x, y, z) order, with a
/// hash index for neighbour lookups. Every voxel holds at least one point.
class VoxelLayout {
 public:
  VoxelLayout() = default;
  // `indices` must be strictly increasing and in range; counts >= 1.
  VoxelLayout(GridMeta meta, std::vector<VoxelIndex> indices, std::vector<std::int64_t> counts);

  const GridMeta& meta() const { return meta_; }
  std::size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  const std::vector<VoxelIndex>& indices() const { return indices_; }
  const std::vector<std::int64_t>& counts() const { return counts_; }
  std::optional<std::size_t> find(const VoxelIndex& index) const;

  friend bool operator==(const VoxelLayout& a, const VoxelLayout& b) {
    return a.meta_ == b.meta_ && a.indices_ == b.indices_ && a.counts_ == b.counts_;
  }

 private:
  GridMeta meta_;
  std::vector<VoxelIndex> indices_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::uint64_t, std::size_t> lookup_;
};

struct SparseVoxelGrid {
  VoxelLayout layout;
  Tensor features;  // [N x C]

  std::size_t size() const { return layout.size(); }
  std::size_t channels() const { return features.rank() == 2 ? features.dim(1) : 0; }
};

struct VoxelizeResult {
  SparseVoxelGrid grid;
  std::size_t dropped = 0;  // points outside the grid
};

VoxelizeResult voxelize_counted(const PointCloud& points, const GridMeta& meta);
SparseVoxelGrid voxelize(const PointCloud& points, const GridMeta& meta);

struct ValidCenter {
  VoxelIndex index;
  Vec3 center;
};

// One entry per valid voxel, in layout order.
std::vector<ValidCenter> valid_centers(const VoxelLayout& layout);
std::vector<ValidCenter> valid_centers(const SparseVoxelGrid& grid);

// Fusion insertion point: after encoder stage 1..4, or after the final
// per-voxel linear (C5).
enum class InsertionPoint : int { kC1 = 1, kC2, kC3, kC4, kC5 };

struct EncoderConfig {
  std::array<std::size_t, 4> stage_channels{16, 16, 32, 32};
  InsertionPoint insertion_point = InsertionPoint::kC4;
  std::array<bool, 4> downsample{false, true, true, true};

  void validate() const;
  std::size_t output_channels() const { return stage_channels[3]; }
  // Channels of the features the fusion hook sees.
  std::size_t insertion_channels() const;
};

// Voxel features on a tape.
struct VoxelFeatures {
  VoxelLayout layout;
  ad::Var features;  // [N x C]
};

// Called once at the insertion point. It may replace `features` (same shape)
// but must not touch the layout.
using FusionHook = std::function<void(VoxelFeatures&)>;

// Toy four-stage sparse encoder. Stage k: per-voxel linear + ReLU, mean over
// the voxel and its valid 6-neighbours, optional stride-2 downsample
// (count-weighted feature mean of colliding voxels). A final per-voxel
// linear follows stage 4. Parameters: "encoder.stage<k>", "encoder.post".
// Throws ContractError if the hook alters the layout or feature shape.
VoxelFeatures sparse_encode(const SparseVoxelGrid& grid, const EncoderConfig& cfg,
                            ParamStore& store, ad::Tape& tape, const FusionHook& hook = {});

// Value-level wrapper on a private tape.
SparseVoxelGrid sparse_encode(const SparseVoxelGrid& grid, const EncoderConfig& cfg,
                              ParamStore& store, const FusionHook& hook = {});

// Layout of every stage's output, without evaluating features.
std::vector<VoxelLayout> stage_layouts(const VoxelLayout& input, const EncoderConfig& cfg);

// Layout after floor(index / 2) on each axis, plus the count-weighted
// pooling plan from the input rows.
std::pair<VoxelLayout, ad::RowPlan> downsample_layout(const VoxelLayout& layout);

// Mean over each voxel and its valid 6-neighbours (self first, then
// -x, +x, -y, +y, -z, +z).
ad::RowPlan neighbor_mean_plan(const VoxelLayout& layout);

struct FusionBlockCount {
  std::int64_t sparse_blocks = 0;
  std::int64_t dense_blocks = 0;
};

// Sparse blocks are the valid voxels at the insertion stage; dense blocks are
// the cells of a bev_side x bev_side BEV. RangeError when bev_side < 1.
FusionBlockCount count_fusion_blocks(const VoxelLayout& at_insertion, int bev_side);

// Dump: one JSON header line (meta, stage, channels, records), then per
// record i32 x 3 index and f64 x C features, little-endian. Point counts are
// not stored; loaded voxels report a count of 1.
void write_voxel_dump(std::ostream& out, const SparseVoxelGrid& grid, int stage);
SparseVoxelGrid read_voxel_dump(std::istream& in, int* stage = nullptr);

}  // namespace sdf
