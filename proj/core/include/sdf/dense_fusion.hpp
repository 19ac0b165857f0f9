// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdf/attention.hpp"
#include "sdf/autodiff.hpp"
#include "sdf/geometry.hpp"
#include "sdf/param_store.hpp"
#include "sdf/voxel.hpp"

namespace sdf {

// BEV tensors are [D x G x G] at API boundaries (row = y index, column = x
// index). Inside the encoder they are carried cell-major as [G*G x D].
ad::Var bev_to_cells(ad::Var bev);
ad::Var cells_to_bev(ad::Var cells, std::size_t grid_side);
Tensor cells_to_bev(const Tensor& cells, std::size_t grid_side);

// G x G BEV grid covering the footprint of a voxel grid; Z = 1 spanning the
// voxel grid's full height.
GridMeta bev_grid(const GridMeta& voxel_meta, std::size_t grid_side);

// Centres of `count` equal slices of [z_min, z_max], ascending.
std::vector<double> anchor_heights(std::size_t count, double z_min, double z_max);

struct BevState {
  std::size_t grid_side = 0;
  std::size_t embed_dim = 0;
  ad::Var queries;  // [G*G x D]
  std::vector<double> anchor_heights;
  GridMeta bev_meta;
  Pose2 ego_pose;

  void validate() const;
};

struct DenseLayerConfig {
  std::size_t num_layers = 6;
  DeformAttnConfig attn;
  std::size_t ffn_hidden = 64;
  // Run the temporal sub-block. Off, the layer is lidar -> b2c -> FFN.
  bool temporal = true;
  // Run the LiDAR sub-block; off gives a camera-only BEV encoder.
  bool lidar = true;

  void validate() const;
};

// Learnable queries "dense.bev_queries" [G*G x D]; anchor heights span the
// voxel grid's z range.
BevState init_bev(ad::Tape& tape, std::size_t grid_side, std::size_t embed_dim,
                  std::size_t heights_n, const GridMeta& voxel_meta, ParamStore& store);

// Voxels are averaged per BEV cell (over z) and projected to D by
// "dense.lidar_proj"; cells without voxels stay zero. The voxel grid and the
// BEV must share the same footprint. Returns [G*G x D].
ad::Var lidar_bev_from_voxels(const VoxelFeatures& voxels, const GridMeta& bev_meta,
                              std::size_t embed_dim, ParamStore& store);
// Value form returning [D x G x G].
Tensor lidar_bev_from_voxels(const SparseVoxelGrid& grid, std::size_t grid_side,
                             std::size_t embed_dim, ParamStore& store);

// Each sub-block is pre-norm residual: x + block(norm(x)). Parameters live
// under `prefix` (".norm", ".attn.*", ...).

// Deformable attention of every query against the aligned history
// [G*G x D] at its own cell. Without history the current queries serve as
// the history map.
BevState temporal_cross_attention(const BevState& bev, std::optional<ad::Var> prev_aligned,
                                  const DeformAttnConfig& cfg, ParamStore& store,
                                  const std::string& prefix);

BevState lidar_cross_attention(const BevState& bev, ad::Var lidar_cells,
                               const DeformAttnConfig& cfg, ParamStore& store,
                               const std::string& prefix);

// Lifts every cell to its anchor heights, maps the points back through the
// augmentation and attends to the hit views with voxel-to-camera semantics.
BevState b2c_cross_attention(const BevState& bev, std::span<const ViewInput> views,
                             const AugRecord& aug, const DeformAttnConfig& cfg,
                             ParamStore& store, const std::string& prefix);

// x + W2 relu(W1 norm(x) + b1); W2 has no bias.
BevState feed_forward(const BevState& bev, std::size_t hidden, ParamStore& store,
                      const std::string& prefix);

// Reference points of each cell (anchor heights, augmented frame).
std::vector<std::vector<Vec3>> bev_anchor_points(const BevState& bev);

// num_layers x (temporal -> lidar -> b2c -> FFN), layers named
// "dense.layer<l>.{temporal,lidar,b2c,ffn}". Returns the final [G*G x D].
ad::Var dense_fusion_encoder(const BevState& bev, std::optional<ad::Var> prev_aligned,
                             ad::Var lidar_cells, std::span<const ViewInput> views,
                             const AugRecord& aug, const DenseLayerConfig& cfg,
                             ParamStore& store);

// Concatenate, fuse with static weights ("dynfuse.fuse"), then gate channels
// with sigmoid("dynfuse.gate"(global average)). Inputs/outputs [G*G x D].
ad::Var dynamic_fusion_baseline(ad::Var lidar_cells, ad::Var cam_cells, ParamStore& store);
// Value form on [D x G x G].
Tensor dynamic_fusion_baseline(const Tensor& lidar_bev, const Tensor& cam_bev, ParamStore& store);

// Same record layout as the voxel dump with a 2D (x, y) index per cell.
void write_bev_dump(std::ostream& out, const Tensor& bev, const GridMeta& bev_meta);
Tensor read_bev_dump(std::istream& in, GridMeta* bev_meta = nullptr);

}  // namespace sdf
