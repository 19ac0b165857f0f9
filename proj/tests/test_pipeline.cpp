// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sdf/errors.hpp"
#include "sdf/experiments.hpp"
#include "sdf/pipeline.hpp"
#include "sdf/scene.hpp"

using namespace sdf;

namespace {

PipelineConfig minimal_variant(bool sparse, bool dense, bool temporal = false) {
  PipelineConfig c = minimal_pipeline_config();
  c.enable_sparse = sparse;
  c.enable_dense = dense;
  c.enable_temporal = temporal;
  return c;
}

// Runs once so every parameter exists, zeroes `weight`, and runs again.
ForwardResult run_zeroed(const FrameInput& frame, const PipelineConfig& cfg, std::uint64_t seed,
                         const std::vector<std::string>& weights) {
  ParamStore store(seed);
  sdf_forward(frame, cfg, store);
  for (const auto& w : weights) store.at(w).value.fill(0.0);
  return sdf_forward(frame, cfg, store);
}

ForwardResult run_fresh(const FrameInput& frame, const PipelineConfig& cfg, std::uint64_t seed) {
  ParamStore store(seed);
  return sdf_forward(frame, cfg, store);
}

}  // namespace

TEST(Backbone, ZeroImageZeroBiasGivesZero) {
  ParamStore store(1);
  const Tensor img({3, 16, 24});
  toy_image_backbone(img, 8, store);
  store.at("backbone.stage1.bias").value.fill(0.0);
  store.at("backbone.stage2.bias").value.fill(0.0);
  const Tensor f = toy_image_backbone(img, 8, store);
  EXPECT_EQ(f.shape(), (Shape{8, 4, 6}));
  EXPECT_EQ(f.max_abs(), 0.0);
}

TEST(Backbone, MatchesPatchOracle) {
  ParamStore store(2);
  const Tensor img = oracle::random_tensor({3, 16, 20}, 3);
  const Tensor f = toy_image_backbone(img, 6, store);
  const Tensor want = oracle::patch_stage(oracle::patch_stage(img, store, "backbone.stage1"), store, "backbone.stage2");
  ASSERT_EQ(f.shape(), want.shape());
  EXPECT_LT(max_abs_diff(f, want), 1e-12);
}

TEST(Backbone, RejectsIndivisibleImage) {
  ParamStore store(1);
  EXPECT_THROW(toy_image_backbone(Tensor({3, 18, 16}), 4, store), ConfigError);
}

TEST(Head, ZeroFeatureZeroBiasIsHalf) {
  ParamStore store(1);
  const Tensor bev({16, 6, 6});
  head_stub(bev, store);
  store.at("head.proj.bias").value.fill(0.0);
  const Tensor h = head_stub(bev, store);
  ASSERT_EQ(h.shape(), (Shape{6, 6, kHeadChannels}));
  for (std::size_t cell = 0; cell < 36; ++cell) {
    EXPECT_EQ(h[cell * kHeadChannels], 0.5);
    for (std::size_t k = 1; k < kHeadChannels; ++k) EXPECT_EQ(h[cell * kHeadChannels + k], 0.0);
  }
}

TEST(Head, ObjectnessInUnitInterval) {
  ParamStore store(2);
  const Tensor h = head_stub(oracle::random_tensor({16, 8, 8}, 3, -4.0, 4.0), store);
  for (std::size_t cell = 0; cell < 64; ++cell) {
    EXPECT_GT(h[cell * kHeadChannels], 0.0);
    EXPECT_LT(h[cell * kHeadChannels], 1.0);
  }
}

TEST(Forward, AllFusionOffFeedsLidarBevToHead) {
  const PipelineConfig cfg = minimal_variant(false, false);
  const FrameInput frame = minimal_frame(cfg, 1);
  const ForwardResult r = run_fresh(frame, cfg, 4);
  EXPECT_EQ(r.bev_feature, r.lidar_bev);
  ParamStore store(4);
  const SparseVoxelGrid enc = sparse_encode(voxelize(frame.points, cfg.grid), cfg.encoder, store);
  EXPECT_EQ(lidar_bev_from_voxels(enc, cfg.bev_side, cfg.bev_dim, store), r.lidar_bev);
  EXPECT_EQ(head_stub(r.bev_feature, store), r.head);
}

TEST(Forward, DisablingEqualsZeroingOutputProjections) {
  const FrameInput frame = minimal_frame(minimal_pipeline_config(), 2);
  const std::uint64_t seed = 5;
  const ForwardResult lidar = run_fresh(frame, minimal_variant(false, false), seed);
  const ForwardResult s = run_fresh(frame, minimal_variant(true, false), seed);
  const ForwardResult d = run_fresh(frame, minimal_variant(false, true), seed);
  EXPECT_EQ(run_zeroed(frame, minimal_variant(true, false), seed, {"v2c.0.output.weight"}).bev_feature, lidar.bev_feature);
  EXPECT_EQ(run_zeroed(frame, minimal_variant(false, true), seed, {"dense.output.weight"}).bev_feature, lidar.bev_feature);
  EXPECT_EQ(run_zeroed(frame, minimal_variant(true, true), seed, {"dense.output.weight"}).bev_feature, s.bev_feature);
  EXPECT_EQ(run_zeroed(frame, minimal_variant(true, true), seed, {"v2c.0.output.weight"}).bev_feature, d.bev_feature);
  EXPECT_EQ(
      run_zeroed(frame, minimal_variant(true, true), seed, {"v2c.0.output.weight", "dense.output.weight"}).bev_feature,
      lidar.bev_feature);
}

TEST(Forward, ZeroCameraMapsMatchSparseDisabled) {
  const PipelineConfig cfg = minimal_variant(true, false);
  FrameInput frame = minimal_frame(cfg, 3);
  for (auto& c : frame.cameras) c.feature_map.fill(0.0);
  const ForwardResult off = run_fresh(frame, minimal_variant(false, false), 6);
  const ForwardResult on = run_zeroed(frame, cfg, 6, {"v2c.0.value.bias"});
  EXPECT_EQ(on.bev_feature, off.bev_feature);
}

TEST(Forward, FourComponentConfigsDiffer) {
  SceneSpec spec;
  spec.n_points = 8000;
  const Scene scene = synth_scene(spec);
  const auto variants = component_variants(default_pipeline_config(scene.grid));
  ASSERT_EQ(variants.size(), 4u);
  std::vector<Tensor> outs;
  for (const auto& [name, cfg] : variants) outs.push_back(run_fresh(scene.frames[0].input, cfg, 1).bev_feature);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) EXPECT_NE(outs[i], outs[j]) << variants[i].first << " vs " << variants[j].first;
}

TEST(Forward, IsDeterministic) {
  const PipelineConfig cfg = minimal_variant(true, true, true);
  const FrameInput frame = minimal_frame(cfg, 4);
  const ForwardResult a = run_fresh(frame, cfg, 9);
  const ForwardResult b = run_fresh(frame, cfg, 9);
  EXPECT_EQ(a.bev_feature, b.bev_feature);
  EXPECT_EQ(a.head, b.head);
}

TEST(Forward, TemporalUsesHistoryOnlyWhenEnabled) {
  const FrameInput frame = minimal_frame(minimal_pipeline_config(), 5);
  ASSERT_TRUE(frame.prev_bev);
  const ForwardResult on = run_fresh(frame, minimal_variant(true, true, true), 3);
  const ForwardResult off = run_fresh(frame, minimal_variant(true, true, false), 3);
  ASSERT_TRUE(on.temporal_input);
  EXPECT_EQ(*on.temporal_input, *frame.prev_bev);
  EXPECT_FALSE(off.temporal_input);
  EXPECT_NE(on.bev_feature, off.bev_feature);
}

TEST(Forward, ImageBackboneReplacesCameraMaps) {
  PipelineConfig cfg = minimal_variant(true, true);
  FrameInput frame = minimal_frame(cfg, 6);
  cfg.use_image_backbone = true;
  cfg.backbone_channels = frame.cameras[0].feature_map.dim(0);
  for (std::size_t i = 0; i < frame.cameras.size(); ++i) frame.images.push_back(oracle::random_tensor({3, 48, 64}, 70 + i));
  const ForwardResult r = run_fresh(frame, cfg, 2);
  EXPECT_TRUE(r.bev_feature.all_finite());
  FrameInput no_images = frame;
  no_images.images.clear();
  ParamStore store(2);
  EXPECT_ANY_THROW(sdf_forward(no_images, cfg, store));
}

TEST(Config, ValidationRules) {
  PipelineConfig c = minimal_pipeline_config();
  EXPECT_NO_THROW(c.validate());
  c.enable_dense = false;
  c.enable_temporal = true;
  EXPECT_THROW(c.validate(), ConfigError);
  c = minimal_pipeline_config();
  c.attn.embed_dim = 4;
  EXPECT_THROW(c.validate(), ConfigError);
  c = minimal_pipeline_config();
  c.dense.attn.embed_dim = 8;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  PipelineConfig c = default_pipeline_config(desk_grid());
  c.extended_refs = true;
  c.dense_mode = DenseMode::kDynamicFusion;
  c.attn.offset_units = OffsetUnits::kPixels;
  c.seed = 77;
  const std::string text = pipeline_config_to_json(c);
  const PipelineConfig back = pipeline_config_from_json(text, desk_grid());
  EXPECT_EQ(pipeline_config_to_json(back), text);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_TRUE(back.extended_refs);
  EXPECT_EQ(back.dense_mode, DenseMode::kDynamicFusion);
  EXPECT_THROW(pipeline_config_from_json("{not json", desk_grid()), FormatError);
  EXPECT_EQ(pipeline_config_to_json(pipeline_config_from_json("{}", desk_grid())),
            pipeline_config_to_json(default_pipeline_config(desk_grid())));
}

TEST(Sequence, SingleFrameEqualsForward) {
  PipelineConfig cfg = minimal_variant(true, true, true);
  FrameInput frame = minimal_frame(cfg, 7);
  frame.prev_bev.reset();
  ParamStore a(1), b(1);
  const auto seq = run_sequence({frame}, cfg, a);
  ASSERT_EQ(seq.size(), 1u);
  EXPECT_EQ(seq[0].bev_feature, sdf_forward(frame, cfg, b).bev_feature);
}

TEST(Sequence, StaticFramesPassHistoryThrough) {
  PipelineConfig cfg = minimal_variant(true, true, true);
  FrameInput frame = minimal_frame(cfg, 8);
  frame.prev_bev.reset();
  ParamStore store(2);
  const auto seq = run_sequence({frame, frame, frame}, cfg, store);
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_FALSE(seq[0].temporal_input);
  ASSERT_TRUE(seq[1].temporal_input);
  EXPECT_EQ(*seq[1].temporal_input, seq[0].bev_feature);
  EXPECT_EQ(*seq[2].temporal_input, seq[1].bev_feature);
}

TEST(Sequence, MovingEgoAlignsHistory) {
  PipelineConfig cfg = minimal_variant(true, true, true);
  FrameInput f0 = minimal_frame(cfg, 9);
  f0.prev_bev.reset();
  FrameInput f1 = f0;
  f1.ego_pose = Pose2{1.5, -0.5, 0.2};
  ParamStore store(3);
  const auto seq = run_sequence({f0, f1}, cfg, store);
  ASSERT_TRUE(seq[1].temporal_input);
  const GridMeta bm = bev_grid(cfg.grid, cfg.bev_side);
  EXPECT_EQ(*seq[1].temporal_input, align_bev(seq[0].bev_feature, relative_motion(f0.ego_pose, f1.ego_pose), bm));
  EXPECT_LT(max_abs_diff(*seq[1].temporal_input,
                         oracle::align_bev(seq[0].bev_feature, relative_motion(f0.ego_pose, f1.ego_pose), bm)),
            1e-12);
}

TEST(Gradients, MinimalPipelineSubsampled) {
  const PipelineConfig cfg = minimal_pipeline_config();
  const FrameInput frame = minimal_frame(cfg, 0);
  GradcheckOptions opt;
  opt.kink_aware = true;
  opt.max_coords_per_entry = 24;
  const GradcheckResult g = pipeline_gradcheck(cfg, frame, opt, 0);
  EXPECT_LT(g.max_rel_error, 1e-3) << g.worst_param << "[" << g.worst_index << "]";
  EXPECT_GT(g.coordinates_checked, 500u);
}

TEST(Loss, TargetsAndDescent) {
  SceneSpec spec;
  spec.n_points = 6000;
  spec.n_boxes = 8;
  const Scene scene = synth_scene(spec);
  PipelineConfig cfg = smoke_train_config(scene.grid);
  const GridMeta bm = bev_grid(scene.grid, cfg.bev_side);
  const HeadTargets t = make_head_targets(scene.frames[0].boxes, bm, scene.frames[0].input.aug);
  ASSERT_FALSE(t.cells.empty());
  double ones = 0.0;
  for (double v : t.objectness.values()) ones += v;
  EXPECT_EQ(ones, static_cast<double>(t.cells.size()));
  EXPECT_EQ(t.regression.shape(), (Shape{t.cells.size(), 4}));
  ParamStore store(cfg.seed);
  const SmokeTrainResult r = smoke_train(scene.frames[0], cfg, 10, 0.05, store);
  ASSERT_EQ(r.losses.size(), 11u);
  EXPECT_LT(r.final(), r.initial());
}
