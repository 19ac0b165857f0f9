// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "sdf/gradcheck.hpp"
#include "sdf/pipeline.hpp"
#include "sdf/scene.hpp"

namespace sdf {

using ReportValue = std::variant<std::int64_t, double, std::string>;

struct ReportRow {
  std::string variant;
  std::string condition;
  std::vector<std::pair<std::string, ReportValue>> metrics;

  void set(const std::string& key, ReportValue value);
  bool has(const std::string& key) const;
  const ReportValue& at(const std::string& key) const;
  // Integer or floating metric as double; RangeError if absent or a string.
  double number(const std::string& key) const;
};

struct ExperimentReport {
  std::string name;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<ReportRow> rows;
};

std::string report_to_json(const ExperimentReport& report);
// Header: variant, condition, then every metric key in first-seen order;
// a row lacking a key leaves the cell empty.
std::string report_to_csv(const ExperimentReport& report);
// Writes <dir>/<name>.json and <dir>/<name>.csv; returns both paths.
std::pair<std::string, std::string> write_report(const ExperimentReport& report, const std::string& dir);

std::string config_hash(const PipelineConfig& cfg);

// The four component configurations: lidar-only, S, D, SD (single frame,
// temporal off).
std::vector<std::pair<std::string, PipelineConfig>> component_variants(const PipelineConfig& base);

struct RobustnessOptions {
  double fov_lo = -1.5707963267948966;
  double fov_hi = 1.5707963267948966;
  std::size_t frame = 0;
};

/// Variant x {full, limited} rows with
///   points_outside_fov, removed_point_fraction
///   input_voxels_removed, insertion_voxels_removed, sparse_blocks_removed
///   camera_norm_removed, camera_norm_retained, camera_norm_removed_hit,
///   removed_hit_cells, removed_hit_cells_nonzero
///   objectness_mean_removed, objectness_mean_retained
/// and, for variants without dense fusion under the limited condition,
///   retained_exact_cells, retained_max_abs_diff (against the full run).
/// The camera contribution is bev_feature(maps) - bev_feature(zero maps).
ExperimentReport run_robustness(const Scene& scene, const PipelineConfig& base,
                                const RobustnessOptions& opts = {});

// BEV cells whose sparse-path output cannot depend on points outside the
// azimuth interval: the dependency box of the cell (final-stage voxel plus
// the encoder's neighbourhood reach) stays clear of both boundary rays.
std::vector<std::size_t> sparse_exact_cells(const PipelineConfig& cfg, double lo, double hi);

/// Fusion-block counts of one frame on the full-scale grid, one row per
/// insertion point C1..C5: sparse_blocks, dense_blocks, stage_W, stage_H,
/// sparse_below_dense (0/1).
ExperimentReport run_efficiency(const Scene& scene, const EncoderConfig& encoder, int bev_side = 180,
                                std::size_t frame = 0);

// Smallest configuration exercising every block: 16 x 16 x 4 grid,
// G = 8, D = 16, one dense layer with temporal, sparse fusion at C4.
PipelineConfig minimal_pipeline_config();

// At most 64 valid voxels seen by two cameras, with a random history BEV.
FrameInput minimal_frame(const PipelineConfig& cfg, std::uint64_t seed);

// Gradcheck of sum(head_logits * R) for a fixed random R. Camera maps are
// registered as "camera<id>.map" parameters so their gradients are checked
// too.
GradcheckResult pipeline_gradcheck(const PipelineConfig& cfg, const FrameInput& frame,
                                   const GradcheckOptions& options, std::uint64_t seed);

struct SmokeTrainResult {
  std::vector<double> losses;  // before each step, then after the last one
  double initial() const { return losses.front(); }
  double final() const { return losses.back(); }
};

// Plain SGD on head_loss against the frame's boxes.
SmokeTrainResult smoke_train(const SceneFrame& frame, const PipelineConfig& cfg, std::size_t steps,
                             double learning_rate, ParamStore& store);

// Desk config used by the smoke-train: SD, single dense layer, no history.
PipelineConfig smoke_train_config(const GridMeta& grid);

// Deterministic JSON manifest: command, config digest, seed, and one
// digest per named output, sorted by name.
std::string make_manifest(const std::string& command, const std::string& config_text, std::uint64_t seed,
                          const std::map<std::string, std::string>& output_digests);

}  // namespace sdf
