// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdf/pipeline.hpp"

#include <cmath>
#include <set>

#include "json_io.hpp"
#include "sdf/errors.hpp"
#include "sdf/layers.hpp"

namespace sdf {
namespace {

const char* units_name(OffsetUnits u) { return u == OffsetUnits::kPixels ? "pixels" : "normalized"; }

OffsetUnits units_from_name(const std::string& s) {
  if (s == "normalized") return OffsetUnits::kNormalized;
  if (s == "pixels") return OffsetUnits::kPixels;
  throw ConfigError("unknown offset units '" + s + "'");
}

const char* mode_name(DenseMode m) {
  return m == DenseMode::kDynamicFusion ? "dynamic-fusion" : "transformer";
}

DenseMode mode_from_name(const std::string& s) {
  if (s == "transformer") return DenseMode::kTransformer;
  if (s == "dynamic-fusion") return DenseMode::kDynamicFusion;
  throw ConfigError("unknown dense mode '" + s + "'");
}

Json attn_to_json(const DeformAttnConfig& a) {
  return Json{{"num_heads", a.num_heads},
              {"num_points", a.num_points},
              {"embed_dim", a.embed_dim},
              {"offset_units", units_name(a.offset_units)}};
}

void attn_from_json(const Json& j, DeformAttnConfig& a) {
  a.num_heads = j.value("num_heads", a.num_heads);
  a.num_points = j.value("num_points", a.num_points);
  a.embed_dim = j.value("embed_dim", a.embed_dim);
  if (j.contains("offset_units")) a.offset_units = units_from_name(j.at("offset_units").get<std::string>());
}

int downsample_factor(const EncoderConfig& e) {
  int f = 1;
  for (bool d : e.downsample) f *= d ? 2 : 1;
  return f;
}

void check_cameras(const FrameInput& frame) {
  std::set<int> ids;
  for (const CameraView& c : frame.cameras) {
    if (!ids.insert(c.id).second) throw ConfigError("frame: duplicate camera id " + std::to_string(c.id));
    if (c.feature_map.rank() != 3) throw DimensionError("frame: camera feature maps must be [C x H x W]");
    if (c.feature_map.dim(0) != frame.cameras.front().feature_map.dim(0)) {
      throw DimensionError("frame: camera feature maps differ in channel count");
    }
  }
}

}  // namespace

void PipelineConfig::validate() const {
  if (enable_temporal && !enable_dense) throw ConfigError("pipeline: temporal fusion requires dense fusion");
  encoder.validate();
  dense.validate();
  attn.validate();
  grid.validate();
  if (enable_sparse && attn.embed_dim != encoder.insertion_channels()) {
    throw ConfigError("pipeline: V2C embed_dim " + std::to_string(attn.embed_dim) +
                      " differs from the insertion channels " +
                      std::to_string(encoder.insertion_channels()));
  }
  if (bev_side == 0 || bev_dim == 0 || anchor_count == 0) {
    throw ConfigError("pipeline: bev_side, bev_dim and anchor_count must be positive");
  }
  if (dense.attn.embed_dim != bev_dim) throw ConfigError("pipeline: dense embed_dim must equal bev_dim");
  const int f = downsample_factor(encoder);
  if (grid.W % f != 0 || grid.H % f != 0) {
    throw ConfigError("pipeline: grid W and H must be divisible by the encoder stride " + std::to_string(f));
  }
  if (use_image_backbone && backbone_channels == 0) throw ConfigError("pipeline: backbone_channels must be positive");
}

PipelineConfig default_pipeline_config(const GridMeta& grid) {
  PipelineConfig cfg;
  cfg.grid = grid;
  cfg.attn.embed_dim = cfg.encoder.insertion_channels();
  cfg.dense.attn.embed_dim = cfg.bev_dim;
  return cfg;
}

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  Json enc{{"stage_channels", cfg.encoder.stage_channels},
           {"insertion_point", "C" + std::to_string(static_cast<int>(cfg.encoder.insertion_point))},
           {"downsample", cfg.encoder.downsample}};
  Json dense{{"num_layers", cfg.dense.num_layers},
             {"ffn_hidden", cfg.dense.ffn_hidden},
             {"lidar", cfg.dense.lidar},
             {"attn", attn_to_json(cfg.dense.attn)}};
  Json j{{"enable_sparse", cfg.enable_sparse},
         {"enable_dense", cfg.enable_dense},
         {"enable_temporal", cfg.enable_temporal},
         {"encoder", enc},
         {"dense", dense},
         {"attn", attn_to_json(cfg.attn)},
         {"grid", to_json(cfg.grid)},
         {"bev_side", cfg.bev_side},
         {"bev_dim", cfg.bev_dim},
         {"anchor_count", cfg.anchor_count},
         {"extended_refs", cfg.extended_refs},
         {"dense_mode", mode_name(cfg.dense_mode)},
         {"use_image_backbone", cfg.use_image_backbone},
         {"backbone_channels", cfg.backbone_channels},
         {"seed", cfg.seed}};
  return j.dump(2) + "\n";
}

PipelineConfig pipeline_config_from_json(const std::string& text, const GridMeta& default_grid) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw FormatError(std::string("pipeline config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("pipeline config: expected a JSON object");
  try {
    GridMeta grid = default_grid;
    if (j.contains("grid")) grid = grid_meta_from_json(j.at("grid"));
    PipelineConfig cfg = default_pipeline_config(grid);
    cfg.enable_sparse = j.value("enable_sparse", cfg.enable_sparse);
    cfg.enable_dense = j.value("enable_dense", cfg.enable_dense);
    cfg.enable_temporal = j.value("enable_temporal", cfg.enable_temporal);
    cfg.bev_side = j.value("bev_side", cfg.bev_side);
    cfg.bev_dim = j.value("bev_dim", cfg.bev_dim);
    cfg.dense.attn.embed_dim = cfg.bev_dim;
    cfg.anchor_count = j.value("anchor_count", cfg.anchor_count);
    cfg.extended_refs = j.value("extended_refs", cfg.extended_refs);
    cfg.use_image_backbone = j.value("use_image_backbone", cfg.use_image_backbone);
    cfg.backbone_channels = j.value("backbone_channels", cfg.backbone_channels);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("dense_mode")) cfg.dense_mode = mode_from_name(j.at("dense_mode").get<std::string>());
    if (j.contains("encoder")) {
      const Json& e = j.at("encoder");
      if (e.contains("stage_channels")) cfg.encoder.stage_channels = e.at("stage_channels").get<std::array<std::size_t, 4>>();
      if (e.contains("downsample")) cfg.encoder.downsample = e.at("downsample").get<std::array<bool, 4>>();
      if (e.contains("insertion_point")) {
        const std::string ip = e.at("insertion_point").get<std::string>();
        if (ip.size() != 2 || ip[0] != 'C' || ip[1] < '1' || ip[1] > '5') {
          throw ConfigError("pipeline config: insertion_point must be C1..C5, got '" + ip + "'");
        }
        cfg.encoder.insertion_point = static_cast<InsertionPoint>(ip[1] - '0');
      }
      cfg.attn.embed_dim = cfg.encoder.insertion_channels();
    }
    if (j.contains("attn")) attn_from_json(j.at("attn"), cfg.attn);
    if (j.contains("dense")) {
      const Json& d = j.at("dense");
      cfg.dense.num_layers = d.value("num_layers", cfg.dense.num_layers);
      cfg.dense.ffn_hidden = d.value("ffn_hidden", cfg.dense.ffn_hidden);
      cfg.dense.lidar = d.value("lidar", cfg.dense.lidar);
      if (d.contains("attn")) attn_from_json(d.at("attn"), cfg.dense.attn);
    }
    cfg.validate();
    return cfg;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("pipeline config: ") + e.what());
  }
}

ad::Var toy_image_backbone(ad::Var image, std::size_t channels, ParamStore& store) {
  if (image.value().rank() != 3 || image.dim(0) != 3) {
    throw DimensionError("toy_image_backbone: expected [3 x H x W], got " + shape_to_string(image.shape()));
  }
  if (image.dim(1) % 4 != 0 || image.dim(2) % 4 != 0) {
    throw ConfigError("toy_image_backbone: H and W must be divisible by 4, got " +
                      shape_to_string(image.shape()));
  }
  if (channels == 0) throw ConfigError("toy_image_backbone: channels must be positive");
  ad::Var x = image;
  for (int stage = 1; stage <= 2; ++stage) {
    const std::size_t h = x.dim(1) / 2, w = x.dim(2) / 2;
    ad::Var cells = ad::relu(linear(store, "backbone.stage" + std::to_string(stage), ad::patchify2x2(x), channels));
    x = ad::reshape(ad::transpose(cells), {channels, h, w});
  }
  return x;
}

Tensor toy_image_backbone(const Tensor& image, std::size_t channels, ParamStore& store) {
  ad::Tape tape;
  return toy_image_backbone(tape.constant(image), channels, store).value();
}

ad::Var head_logits(ad::Var bev_cells, ParamStore& store) {
  return linear(store, "head.proj", bev_cells, kHeadChannels);
}

Tensor head_stub(const Tensor& bev_feature, ParamStore& store) {
  if (bev_feature.rank() != 3 || bev_feature.dim(1) != bev_feature.dim(2)) {
    throw DimensionError("head_stub: expected [D x G x G], got " + shape_to_string(bev_feature.shape()));
  }
  const std::size_t g = bev_feature.dim(1);
  ad::Tape tape;
  Tensor raw = head_logits(bev_to_cells(tape.constant(bev_feature)), store).value();
  Tensor out({g, g, kHeadChannels});
  for (std::size_t cell = 0; cell < g * g; ++cell) {
    for (std::size_t k = 0; k < kHeadChannels; ++k) {
      const double v = raw[cell * kHeadChannels + k];
      out[cell * kHeadChannels + k] = k == 0 ? 1.0 / (1.0 + std::exp(-v)) : v;
    }
  }
  return out;
}

ForwardGraph sdf_forward(ad::Tape& tape, const FrameInput& frame, const PipelineConfig& cfg,
                         ParamStore& store, std::span<const ViewInput> views) {
  cfg.validate();
  check_cameras(frame);
  std::vector<ViewInput> backbone_views;
  if (cfg.use_image_backbone) {
    if (frame.images.size() != views.size()) {
      throw ConfigError("pipeline: the image backbone needs one image per camera");
    }
    for (std::size_t i = 0; i < views.size(); ++i) {
      ViewInput v = views[i];
      v.map = toy_image_backbone(tape.constant(frame.images[i]), cfg.backbone_channels, store);
      backbone_views.push_back(v);
    }
    views = backbone_views;
  }

  ForwardGraph out;
  const SparseVoxelGrid grid = voxelize(frame.points, cfg.grid);
  FusionHook hook;
  if (cfg.enable_sparse) {
    hook = [&](VoxelFeatures& vf) {
      std::vector<std::vector<Vec3>> pts;
      pts.reserve(vf.layout.size());
      for (const ValidCenter& c : valid_centers(vf.layout)) {
        pts.push_back(cfg.extended_refs ? extended_ref_points(c.index, vf.layout.meta())
                                        : std::vector<Vec3>{c.center});
      }
      std::vector<CameraGeometry> geoms;
      for (const ViewInput& v : views) geoms.push_back(v.geometry);
      const RefPointSet refs = build_ref_points(pts, geoms, frame.aug);
      ad::Var update = v2c_update(vf.features, refs, views, cfg.attn, store, "v2c.0");
      out.sparse_update = update;
      vf.features = ad::add(vf.features, update);
    };
  }
  const VoxelFeatures encoded = sparse_encode(grid, cfg.encoder, store, tape, hook);
  out.insertion_layout = stage_layouts(grid.layout, cfg.encoder)[
      std::min<std::size_t>(static_cast<std::size_t>(cfg.encoder.insertion_point), 4) - 1];

  const GridMeta bev_meta = bev_grid(cfg.grid, cfg.bev_side);
  out.lidar_cells = lidar_bev_from_voxels(encoded, bev_meta, cfg.bev_dim, store);
  out.bev_cells = out.lidar_cells;

  if (cfg.enable_dense) {
    BevState bev = init_bev(tape, cfg.bev_side, cfg.bev_dim, cfg.anchor_count, cfg.grid, store);
    bev.ego_pose = frame.ego_pose;
    DenseLayerConfig dcfg = cfg.dense;
    std::optional<ad::Var> prev;
    if (cfg.enable_temporal && frame.prev_bev) prev = bev_to_cells(tape.constant(*frame.prev_bev));
    dcfg.temporal = prev.has_value();
    if (cfg.dense_mode == DenseMode::kDynamicFusion) {
      dcfg.lidar = false;
      ad::Var cam = dense_fusion_encoder(bev, prev, out.lidar_cells, views, frame.aug, dcfg, store);
      out.bev_cells = dynamic_fusion_baseline(out.lidar_cells, cam, store);
    } else {
      ad::Var dense = dense_fusion_encoder(bev, prev, out.lidar_cells, views, frame.aug, dcfg, store);
      out.bev_cells = ad::add(out.lidar_cells, linear(store, "dense.output", dense, cfg.bev_dim, false));
    }
  }
  out.head = head_logits(out.bev_cells, store);
  return out;
}

ForwardResult sdf_forward(const FrameInput& frame, const PipelineConfig& cfg, ParamStore& store) {
  ad::Tape tape;
  const std::vector<ViewInput> views = constant_views(tape, frame.cameras);
  const ForwardGraph g = sdf_forward(tape, frame, cfg, store, views);
  ForwardResult r;
  r.bev_feature = cells_to_bev(g.bev_cells, cfg.bev_side).value();
  r.lidar_bev = cells_to_bev(g.lidar_cells, cfg.bev_side).value();
  r.head = head_stub(r.bev_feature, store);
  r.insertion_layout = g.insertion_layout;
  if (cfg.enable_dense && cfg.enable_temporal) r.temporal_input = frame.prev_bev;
  return r;
}

std::vector<ForwardResult> run_sequence(std::vector<FrameInput> frames, const PipelineConfig& cfg,
                                        ParamStore& store) {
  std::vector<ForwardResult> out;
  out.reserve(frames.size());
  const GridMeta bev_meta = bev_grid(cfg.grid, cfg.bev_side);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (t > 0) {
      const EgoMotion motion = relative_motion(frames[t - 1].ego_pose, frames[t].ego_pose);
      frames[t].prev_bev = align_bev(out.back().bev_feature, motion, bev_meta);
    }
    out.push_back(sdf_forward(frames[t], cfg, store));
  }
  return out;
}

HeadTargets make_head_targets(std::span<const GtBox> boxes, const GridMeta& bev_meta,
                              const AugRecord& aug) {
  const std::size_t g = static_cast<std::size_t>(bev_meta.W);
  HeadTargets t;
  t.objectness = Tensor({g * bev_meta.H});
  std::vector<double> reg;
  for (const GtBox& b : boxes) {
    const Vec3 c = apply_augmentation(b.center, aug);
    const auto cell = world_to_voxel(Vec3(c.x(), c.y(), bev_meta.z_base - 0.5 * bev_meta.sz), bev_meta);
    if (!cell) continue;
    const std::size_t idx = static_cast<std::size_t>(cell->y) * g + static_cast<std::size_t>(cell->x);
    if (t.objectness[idx] != 0.0) continue;
    t.objectness[idx] = 1.0;
    t.cells.push_back(idx);
    const Vec3 cc = voxel_center(*cell, bev_meta);
    reg.push_back((c.x() - cc.x()) / bev_meta.sx);
    reg.push_back((c.y() - cc.y()) / bev_meta.sy);
    reg.push_back(std::log(b.size.x() / bev_meta.sx));
    reg.push_back(std::log(b.size.y() / bev_meta.sy));
  }
  t.regression = Tensor({t.cells.size(), 4}, std::move(reg));
  return t;
}

ad::Var head_loss(ad::Var logits, const HeadTargets& targets) {
  if (logits.value().rank() != 2 || logits.dim(1) != kHeadChannels ||
      logits.dim(0) != targets.objectness.numel()) {
    throw DimensionError("head_loss: logits " + shape_to_string(logits.shape()) + " vs " +
                         std::to_string(targets.objectness.numel()) + " cells");
  }
  ad::Tape& tape = logits.tape();
  ad::Var loss = ad::bce_with_logits(ad::slice_cols(logits, 0, 1),
                                     targets.objectness.reshaped({targets.objectness.numel(), 1}));
  if (targets.cells.empty()) return loss;
  ad::RowPlan gather;
  for (std::size_t c : targets.cells) {
    gather.add(c, 1.0);
    gather.end_row();
  }
  ad::Var pred = ad::slice_cols(ad::row_combine(logits, gather), 1, 4);
  ad::Var l1 = ad::mean(ad::abs(ad::sub(pred, tape.constant(targets.regression))));
  return ad::add(loss, l1);
}

}  // namespace sdf
