// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sdf/attention.hpp"
#include "sdf/autodiff.hpp"
#include "sdf/dense_fusion.hpp"
#include "sdf/geometry.hpp"
#include "sdf/param_store.hpp"
#include "sdf/voxel.hpp"

namespace sdf {

enum class DenseMode : std::uint8_t {
  kTransformer,     // temporal / lidar / b2c / FFN encoder
  kDynamicFusion,   // camera-only encoder + concat/gate fusion with the LiDAR BEV
};

struct PipelineConfig {
  bool enable_sparse = true;
  bool enable_dense = true;
  bool enable_temporal = true;
  EncoderConfig encoder;
  DenseLayerConfig dense;
  // Voxel-to-camera attention of the sparse path; embed_dim must equal the
  // encoder channels at the insertion point.
  DeformAttnConfig attn;
  GridMeta grid;
  std::size_t bev_side = 32;
  std::size_t bev_dim = 32;
  std::size_t anchor_count = 4;
  // Voxel centre plus 6-neighbour centres as reference points.
  bool extended_refs = false;
  DenseMode dense_mode = DenseMode::kTransformer;
  // Run the toy backbone on FrameInput::images instead of using the
  // cameras' feature maps.
  bool use_image_backbone = false;
  std::size_t backbone_channels = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

// Desk-scale defaults consistent with each other for the given grid.
PipelineConfig default_pipeline_config(const GridMeta& grid);

// Every field is written, so a config file states each default explicitly.
std::string pipeline_config_to_json(const PipelineConfig& cfg);
// Missing fields take the defaults of default_pipeline_config(default_grid).
// Throws FormatError on malformed input and ConfigError on invalid values.
PipelineConfig pipeline_config_from_json(const std::string& text, const GridMeta& default_grid);

struct FrameInput {
  PointCloud points;
  std::vector<CameraView> cameras;
  // Optional raw [3 x H x W] images, one per camera (toy backbone input).
  std::vector<Tensor> images;
  AugRecord aug;
  Pose2 ego_pose;
  // History BEV [D x G x G], already aligned to this frame.
  std::optional<Tensor> prev_bev;
};

// Two stride-2 stages of 2x2 patch projection + ReLU: [3 x H x W] ->
// [C x H/4 x W/4]. ConfigError unless H and W are divisible by 4.
ad::Var toy_image_backbone(ad::Var image, std::size_t channels, ParamStore& store);
Tensor toy_image_backbone(const Tensor& image, std::size_t channels, ParamStore& store);

// Head channels per cell.
inline constexpr std::size_t kHeadChannels = 5;  // objectness, offset x/y, size x/y

// Raw per-cell head outputs [G*G x 5] ("head.proj"); objectness is a logit.
ad::Var head_logits(ad::Var bev_cells, ParamStore& store);
// [G x G x 5] with a sigmoid applied to objectness.
Tensor head_stub(const Tensor& bev_feature, ParamStore& store);

struct ForwardGraph {
  ad::Var bev_cells;    // head input [G*G x D]
  ad::Var head;         // head logits [G*G x 5]
  ad::Var lidar_cells;  // LiDAR BEV [G*G x D]
  VoxelLayout insertion_layout;
  std::optional<ad::Var> sparse_update;  // V2C update at the insertion point
};

// Camera maps come from `views` so callers decide whether they are
// differentiable. With use_image_backbone they are computed from
// frame.images instead and `views` only supplies geometry.
ForwardGraph sdf_forward(ad::Tape& tape, const FrameInput& frame, const PipelineConfig& cfg,
                         ParamStore& store, std::span<const ViewInput> views);

struct ForwardResult {
  Tensor bev_feature;  // [D x G x G]
  Tensor head;         // [G x G x 5], objectness in (0, 1)
  Tensor lidar_bev;    // [D x G x G]
  VoxelLayout insertion_layout;
  std::optional<Tensor> temporal_input;  // history the temporal block attended to
};

ForwardResult sdf_forward(const FrameInput& frame, const PipelineConfig& cfg, ParamStore& store);

// Frame t's BEV feature, aligned by the relative ego motion, is frame t+1's
// history.
std::vector<ForwardResult> run_sequence(std::vector<FrameInput> frames, const PipelineConfig& cfg,
                                        ParamStore& store);

struct GtBox {
  Vec3 center = Vec3::Zero();  // sensor frame of the frame it belongs to
  Vec3 size = Vec3::Ones();
  double yaw = 0.0;
};

struct HeadTargets {
  Tensor objectness;               // [G*G], 1 at box-centre cells
  std::vector<std::size_t> cells;  // cells holding a box centre
  Tensor regression;               // [cells x 4]: offset in cells, log size in cells
};

// Box centres are augmented like the points before assignment.
HeadTargets make_head_targets(std::span<const GtBox> boxes, const GridMeta& bev_meta,
                              const AugRecord& aug);

// BCE on objectness over all cells + mean L1 on regression at target cells.
ad::Var head_loss(ad::Var logits, const HeadTargets& targets);

}  // namespace sdf
