// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdf/experiments.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <tuple>

#include "json_io.hpp"
#include "sdf/digest.hpp"
#include "sdf/errors.hpp"

namespace sdf {
namespace {

std::string format_value(const ReportValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", *d);
    return buf;
  }
  return std::get<std::string>(v);
}

Json value_json(const ReportValue& v) {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
  if (const auto* d = std::get_if<double>(&v)) return *d;
  return std::get<std::string>(v);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool cell_in_fov(const GridMeta& bev_meta, std::size_t cell, double lo, double hi) {
  const auto g = static_cast<std::size_t>(bev_meta.W);
  const Vec3 c = voxel_center({static_cast<int>(cell % g), static_cast<int>(cell / g), 0}, bev_meta);
  return in_fov(c.x(), c.y(), lo, hi);
}

std::int64_t voxels_outside(const VoxelLayout& layout, double lo, double hi) {
  std::int64_t n = 0;
  for (const ValidCenter& c : valid_centers(layout)) {
    if (!in_fov(c.center.x(), c.center.y(), lo, hi)) ++n;
  }
  return n;
}

// Which BEV cells have an anchor point seen by at least one camera.
std::vector<bool> anchor_hits(const PipelineConfig& cfg, const FrameInput& frame) {
  const GridMeta bev_meta = bev_grid(cfg.grid, cfg.bev_side);
  const std::vector<double> heights = anchor_heights(cfg.anchor_count, cfg.grid.z_min(), cfg.grid.z_max());
  std::vector<std::vector<Vec3>> pts;
  for (std::size_t cell = 0; cell < cfg.bev_side * cfg.bev_side; ++cell) {
    const Vec3 c = voxel_center({static_cast<int>(cell % cfg.bev_side), static_cast<int>(cell / cfg.bev_side), 0},
                                bev_meta);
    std::vector<Vec3> column;
    for (double h : heights) column.emplace_back(c.x(), c.y(), h);
    pts.push_back(std::move(column));
  }
  std::vector<CameraGeometry> geoms;
  for (const CameraView& v : frame.cameras) geoms.push_back(v.geometry);
  const RefPointSet refs = build_ref_points(pts, geoms, frame.aug);
  std::vector<bool> hit(pts.size());
  for (std::size_t q = 0; q < pts.size(); ++q) hit[q] = refs.hit_view_count(q) > 0;
  return hit;
}

double distance_to_ray(double px, double py, double angle) {
  const double dx = std::cos(angle), dy = std::sin(angle);
  const double t = std::max(0.0, px * dx + py * dy);
  return std::hypot(px - t * dx, py - t * dy);
}

}  // namespace

void ReportRow::set(const std::string& key, ReportValue value) {
  for (auto& [k, v] : metrics) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  metrics.emplace_back(key, std::move(value));
}

bool ReportRow::has(const std::string& key) const {
  for (const auto& kv : metrics)
    if (kv.first == key) return true;
  return false;
}

const ReportValue& ReportRow::at(const std::string& key) const {
  for (const auto& [k, v] : metrics)
    if (k == key) return v;
  throw RangeError("report row " + variant + "/" + condition + " has no metric '" + key + "'");
}

double ReportRow::number(const std::string& key) const {
  const ReportValue& v = at(key);
  if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&v)) return *d;
  throw RangeError("metric '" + key + "' is not numeric");
}

std::string report_to_json(const ExperimentReport& report) {
  Json rows = Json::array();
  for (const ReportRow& r : report.rows) {
    Json m = Json::object();
    for (const auto& [k, v] : r.metrics) m[k] = value_json(v);
    rows.push_back({{"variant", r.variant}, {"condition", r.condition}, {"metrics", m}});
  }
  return Json{{"experiment", report.name},
              {"config_hash", report.config_hash},
              {"seed", report.seed},
              {"rows", rows}}
             .dump(2) +
         "\n";
}

std::string report_to_csv(const ExperimentReport& report) {
  std::vector<std::string> keys;
  for (const ReportRow& r : report.rows) {
    for (const auto& kv : r.metrics) {
      if (std::find(keys.begin(), keys.end(), kv.first) == keys.end()) keys.push_back(kv.first);
    }
  }
  std::string out = "variant,condition";
  for (const std::string& k : keys) out += "," + csv_escape(k);
  out += "\n";
  for (const ReportRow& r : report.rows) {
    out += csv_escape(r.variant) + "," + csv_escape(r.condition);
    for (const std::string& k : keys) out += "," + (r.has(k) ? csv_escape(format_value(r.at(k))) : "");
    out += "\n";
  }
  return out;
}

std::pair<std::string, std::string> write_report(const ExperimentReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string json_path = (std::filesystem::path(dir) / (report.name + ".json")).string();
  const std::string csv_path = (std::filesystem::path(dir) / (report.name + ".csv")).string();
  std::ofstream(json_path, std::ios::binary) << report_to_json(report);
  std::ofstream(csv_path, std::ios::binary) << report_to_csv(report);
  return {json_path, csv_path};
}

std::string config_hash(const PipelineConfig& cfg) { return sha256_hex(pipeline_config_to_json(cfg)); }

std::vector<std::pair<std::string, PipelineConfig>> component_variants(const PipelineConfig& base) {
  std::vector<std::pair<std::string, PipelineConfig>> out;
  const std::pair<bool, bool> flags[] = {{false, false}, {true, false}, {false, true}, {true, true}};
  const char* names[] = {"lidar-only", "S", "D", "SD"};
  for (int i = 0; i < 4; ++i) {
    PipelineConfig c = base;
    c.enable_sparse = flags[i].first;
    c.enable_dense = flags[i].second;
    c.enable_temporal = false;
    out.emplace_back(names[i], c);
  }
  return out;
}

std::vector<std::size_t> sparse_exact_cells(const PipelineConfig& cfg, double lo, double hi) {
  GridMeta m = cfg.grid;
  double reach_x = 0.0, reach_y = 0.0;
  for (std::size_t s = 0; s < 4; ++s) {
    reach_x += m.sx;
    reach_y += m.sy;
    if (cfg.encoder.downsample[s]) m = m.downsampled();
  }
  const GridMeta bev_meta = bev_grid(cfg.grid, cfg.bev_side);
  std::vector<std::size_t> cells;
  for (std::size_t cell = 0; cell < cfg.bev_side * cfg.bev_side; ++cell) {
    const Vec3 c = voxel_center({static_cast<int>(cell % cfg.bev_side), static_cast<int>(cell / cfg.bev_side), 0},
                                bev_meta);
    const auto block = world_to_voxel(Vec3(c.x(), c.y(), m.z_min()), m);
    if (!block) continue;
    const Vec3 bc = voxel_center(*block, m);
    if (!in_fov(bc.x(), bc.y(), lo, hi)) continue;
    const double radius = std::hypot(0.5 * m.sx + reach_x, 0.5 * m.sy + reach_y);
    if (std::min(distance_to_ray(bc.x(), bc.y(), lo), distance_to_ray(bc.x(), bc.y(), hi)) > radius) {
      cells.push_back(cell);
    }
  }
  return cells;
}

ExperimentReport run_robustness(const Scene& scene, const PipelineConfig& base, const RobustnessOptions& opts) {
  if (!(opts.fov_lo < opts.fov_hi)) throw ConfigError("robustness: need fov lo < hi");
  if (opts.frame >= scene.frames.size()) throw RangeError("robustness: frame index out of range");
  const FrameInput& full = scene.frames[opts.frame].input;
  FrameInput limited = full;
  limited.points = limit_fov(full.points, opts.fov_lo, opts.fov_hi);
  limited.prev_bev.reset();
  FrameInput full_frame = full;
  full_frame.prev_bev.reset();

  ExperimentReport report;
  report.name = "robustness";
  report.config_hash = config_hash(base);
  report.seed = base.seed;

  const std::vector<bool> hits = anchor_hits(base, full);
  const GridMeta bev_meta = bev_grid(base.grid, base.bev_side);
  const std::size_t cells = base.bev_side * base.bev_side;
  const std::size_t d = base.bev_dim;
  const std::vector<std::size_t> exact = sparse_exact_cells(base, opts.fov_lo, opts.fov_hi);

  for (const auto& [name, cfg] : component_variants(base)) {
    ParamStore store(cfg.seed);
    Tensor full_bev;
    for (const bool is_limited : {false, true}) {
      const FrameInput& frame = is_limited ? limited : full_frame;
      FrameInput blind = frame;
      for (CameraView& v : blind.cameras) v.feature_map.fill(0.0);
      const ForwardResult with = sdf_forward(frame, cfg, store);
      const ForwardResult without = sdf_forward(blind, cfg, store);

      ReportRow row;
      row.variant = name;
      row.condition = is_limited ? "limited" : "full";
      const std::size_t outside = frame.points.size() - limit_fov(frame.points, opts.fov_lo, opts.fov_hi).size();
      row.set("points_outside_fov", static_cast<std::int64_t>(outside));
      row.set("removed_point_fraction",
              full.points.empty() ? 0.0
                                  : static_cast<double>(full.points.size() - frame.points.size()) /
                                        static_cast<double>(full.points.size()));
      const SparseVoxelGrid input = voxelize(frame.points, cfg.grid);
      row.set("input_voxels_removed", voxels_outside(input.layout, opts.fov_lo, opts.fov_hi));
      const std::int64_t ins = voxels_outside(with.insertion_layout, opts.fov_lo, opts.fov_hi);
      row.set("insertion_voxels_removed", ins);
      row.set("sparse_blocks_removed", cfg.enable_sparse ? ins : std::int64_t{0});

      double sq_removed = 0.0, sq_retained = 0.0, sq_hit = 0.0;
      double obj_removed = 0.0, obj_retained = 0.0;
      std::int64_t n_removed = 0, n_retained = 0, hit_cells = 0, hit_nonzero = 0;
      for (std::size_t cell = 0; cell < cells; ++cell) {
        double sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          const double diff = with.bev_feature[k * cells + cell] - without.bev_feature[k * cells + cell];
          sq += diff * diff;
        }
        const double obj = with.head[cell * kHeadChannels];
        if (cell_in_fov(bev_meta, cell, opts.fov_lo, opts.fov_hi)) {
          sq_retained += sq;
          obj_retained += obj;
          ++n_retained;
        } else {
          sq_removed += sq;
          obj_removed += obj;
          ++n_removed;
          if (hits[cell]) {
            sq_hit += sq;
            ++hit_cells;
            if (sq > 0.0) ++hit_nonzero;
          }
        }
      }
      row.set("camera_norm_removed", std::sqrt(sq_removed));
      row.set("camera_norm_retained", std::sqrt(sq_retained));
      row.set("camera_norm_removed_hit", std::sqrt(sq_hit));
      row.set("removed_hit_cells", hit_cells);
      row.set("removed_hit_cells_nonzero", hit_nonzero);
      row.set("objectness_mean_removed", n_removed ? obj_removed / static_cast<double>(n_removed) : 0.0);
      row.set("objectness_mean_retained", n_retained ? obj_retained / static_cast<double>(n_retained) : 0.0);

      if (!is_limited) {
        full_bev = with.bev_feature;
      } else if (!cfg.enable_dense) {
        double worst = 0.0;
        for (std::size_t cell : exact) {
          for (std::size_t k = 0; k < d; ++k) {
            worst = std::max(worst, std::abs(with.bev_feature[k * cells + cell] - full_bev[k * cells + cell]));
          }
        }
        row.set("retained_exact_cells", static_cast<std::int64_t>(exact.size()));
        row.set("retained_max_abs_diff", worst);
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

ExperimentReport run_efficiency(const Scene& scene, const EncoderConfig& encoder, int bev_side, std::size_t frame) {
  if (bev_side < 1) throw RangeError("efficiency: bev_side must be >= 1");
  encoder.validate();
  ExperimentReport report;
  report.name = "efficiency";
  const GridMeta grid = full_scale_grid();
  PointCloud points;
  if (frame < scene.frames.size()) points = scene.frames[frame].input.points;
  else if (!scene.frames.empty()) throw RangeError("efficiency: frame index out of range");
  const SparseVoxelGrid input = voxelize(points, grid);
  const std::vector<VoxelLayout> stages = stage_layouts(input.layout, encoder);
  report.config_hash = sha256_hex(to_json(grid).dump() + "|" + std::to_string(bev_side));
  for (int ip = 1; ip <= 5; ++ip) {
    const VoxelLayout& layout = stages[static_cast<std::size_t>(std::min(ip, 4) - 1)];
    const FusionBlockCount count = count_fusion_blocks(layout, bev_side);
    ReportRow row;
    row.variant = "C" + std::to_string(ip);
    row.condition = "bev" + std::to_string(bev_side);
    row.set("input_points", static_cast<std::int64_t>(points.size()));
    row.set("input_voxels", static_cast<std::int64_t>(input.size()));
    row.set("sparse_blocks", count.sparse_blocks);
    row.set("dense_blocks", count.dense_blocks);
    row.set("stage_W", static_cast<std::int64_t>(layout.meta().W));
    row.set("stage_H", static_cast<std::int64_t>(layout.meta().H));
    row.set("sparse_below_dense", std::int64_t{count.sparse_blocks < count.dense_blocks ? 1 : 0});
    report.rows.push_back(std::move(row));
  }
  return report;
}

PipelineConfig minimal_pipeline_config() {
  GridMeta grid;
  grid.W = 16;
  grid.H = 16;
  grid.Z = 4;
  grid.sx = 1.0;
  grid.sy = 1.0;
  grid.sz = 1.0;
  grid.z_base = 2.2;
  PipelineConfig cfg = default_pipeline_config(grid);
  cfg.encoder.stage_channels = {4, 4, 8, 8};
  cfg.encoder.downsample = {false, true, true, false};
  cfg.attn.num_heads = 2;
  cfg.attn.num_points = 2;
  cfg.attn.embed_dim = cfg.encoder.insertion_channels();
  cfg.bev_side = 8;
  cfg.bev_dim = 16;
  cfg.anchor_count = 2;
  cfg.dense.num_layers = 1;
  cfg.dense.ffn_hidden = 16;
  cfg.dense.attn.num_heads = 2;
  cfg.dense.attn.num_points = 2;
  cfg.dense.attn.embed_dim = cfg.bev_dim;
  cfg.validate();
  return cfg;
}

FrameInput minimal_frame(const PipelineConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  auto uni = [&gen](double lo, double hi) { return lo + (hi - lo) * static_cast<double>(gen() >> 11) * 0x1.0p-53; };
  FrameInput frame;
  const GridMeta& g = cfg.grid;
  std::set<std::tuple<int, int, int>> voxels;
  while (frame.points.size() < 200) {
    LidarPoint p;
    p.position = Vec3(uni(0.5, g.x_max() - 0.5), uni(g.y_min() + 0.5, g.y_max() - 0.5), uni(g.z_min() + 0.1, 0.5));
    p.intensity = uni(0.0, 1.0);
    const auto v = world_to_voxel(p.position, g);
    if (!v) continue;
    if (voxels.size() >= 48 && !voxels.count({v->x, v->y, v->z})) continue;
    voxels.insert({v->x, v->y, v->z});
    frame.points.push_back(p);
  }
  CameraRig rig;
  rig.count = 2;
  rig.yaw_spacing = 0.7;
  rig.fx = rig.fy = 24.0;
  rig.image_width = 64;
  rig.image_height = 48;
  const std::vector<CameraGeometry> cams = make_rig(rig);
  for (int k = 0; k < 2; ++k) {
    CameraView v;
    v.id = k;
    v.geometry = cams[static_cast<std::size_t>(k)];
    // Rotate the pair so it straddles the +x axis.
    const double c = std::cos(0.35), s = std::sin(0.35);
    Mat3 rz;
    rz << c, -s, 0, s, c, 0, 0, 0, 1;
    v.geometry.rotation = v.geometry.rotation * rz;
    v.feature_map = Tensor({4, 12, 16});
    for (double& x : v.feature_map.data()) x = uni(-1.0, 1.0);
    frame.cameras.push_back(std::move(v));
  }
  Tensor prev({cfg.bev_dim, cfg.bev_side, cfg.bev_side});
  for (double& x : prev.data()) x = uni(-1.0, 1.0);
  frame.prev_bev = prev;
  return frame;
}

GradcheckResult pipeline_gradcheck(const PipelineConfig& cfg, const FrameInput& frame,
                                   const GradcheckOptions& options, std::uint64_t seed) {
  ParamStore store(seed);
  for (const CameraView& v : frame.cameras) store.set("camera" + std::to_string(v.id) + ".map", v.feature_map);
  std::mt19937_64 gen(seed ^ 0x5DEECE66DULL);
  Tensor r({cfg.bev_side * cfg.bev_side, kHeadChannels});
  for (double& x : r.data()) x = static_cast<double>(gen() >> 11) * 0x1.0p-53 * 2.0 - 1.0;
  const ScalarFn fn = [&](ad::Tape& tape, ParamStore& st) {
    std::vector<ViewInput> views;
    for (const CameraView& v : frame.cameras) {
      views.push_back({v.id, v.geometry, tape.param(st, "camera" + std::to_string(v.id) + ".map")});
    }
    const ForwardGraph g = sdf_forward(tape, frame, cfg, st, views);
    return ad::sum(ad::mul(g.head, tape.constant(r)));
  };
  return gradcheck_detailed(fn, store, options);
}

PipelineConfig smoke_train_config(const GridMeta& grid) {
  PipelineConfig cfg = default_pipeline_config(grid);
  cfg.enable_sparse = true;
  cfg.enable_dense = true;
  cfg.enable_temporal = false;
  cfg.dense.num_layers = 1;
  return cfg;
}

SmokeTrainResult smoke_train(const SceneFrame& frame, const PipelineConfig& cfg, std::size_t steps,
                             double learning_rate, ParamStore& store) {
  const GridMeta bev_meta = bev_grid(cfg.grid, cfg.bev_side);
  const HeadTargets targets = make_head_targets(frame.boxes, bev_meta, frame.input.aug);
  SmokeTrainResult result;
  for (std::size_t step = 0; step <= steps; ++step) {
    ad::Tape tape;
    const std::vector<ViewInput> views = constant_views(tape, frame.input.cameras);
    const ForwardGraph g = sdf_forward(tape, frame.input, cfg, store, views);
    ad::Var loss = head_loss(g.head, targets);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) throw NumericError("smoke-train: non-finite loss at step " + std::to_string(step));
    result.losses.push_back(value);
    if (step == steps) break;
    store.zero_grad();
    tape.backward(loss);
    store.sgd_step(learning_rate);
  }
  return result;
}

std::string make_manifest(const std::string& command, const std::string& config_text, std::uint64_t seed,
                          const std::map<std::string, std::string>& output_digests) {
  Json outputs = Json::object();
  for (const auto& [k, v] : output_digests) outputs[k] = v;
  return Json{{"tool", "sdf"},
              {"command", command},
              {"config_sha256", sha256_hex(config_text)},
              {"seed", seed},
              {"outputs", outputs}}
             .dump(2) +
         "\n";
}

}  // namespace sdf
