// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sdf/geometry.hpp"
#include "sdf/pipeline.hpp"
#include "sdf/tensor.hpp"
#include "sdf/voxel.hpp"

namespace sdf {

enum class FeatureField : std::uint8_t {
  kRandom,
  kLinearWorld,  // affine in the world position of the texel's ray point
  kRayCoded,     // channels 0..2 = (u / image width, v / image height, id / count)
};

// Grid used by the desk-scale pipeline: 128 x 128 x 8 over [-54, 54] m,
// z in [-1.8, 2.2] m.
GridMeta desk_grid();
// Counting grid: 1440 x 1440 x 40 at 0.075 m; the fourth stage is 180 x 180.
GridMeta full_scale_grid();

struct CameraRig {
  int count = 6;
  double yaw_spacing = 1.0471975511965976;  // 60 degrees
  double fx = 320.0;
  double fy = 320.0;
  int image_width = 448;
  int image_height = 256;
  std::size_t map_width = 112;
  std::size_t map_height = 64;
  std::size_t channels = 8;
  double mount_height = 0.0;
};

// camera k looks along yaw k * yaw_spacing from (0, 0, mount_height).
std::vector<CameraGeometry> make_rig(const CameraRig& rig);

struct SceneSpec {
  std::uint64_t seed = 0;
  std::size_t n_points = 35000;
  double ground_fraction = 0.6;
  std::size_t n_boxes = 24;
  double min_range = 2.0;
  double max_range = 50.0;
  CameraRig rig;
  std::vector<Pose2> trajectory{Pose2{}};
  FeatureField field = FeatureField::kRandom;
  GridMeta grid = desk_grid();
  bool with_images = false;

  void validate() const;
};

std::string scene_spec_to_json(const SceneSpec& spec);
// Missing fields keep their defaults.
SceneSpec scene_spec_from_json(const std::string& text);

struct SceneFrame {
  FrameInput input;
  std::vector<GtBox> boxes;  // sensor frame
};

struct Scene {
  GridMeta grid;
  std::vector<SceneFrame> frames;
};

// Static world (ground ring + boxes) seen from every trajectory pose;
// each frame keeps only the points inside the grid.
Scene synth_scene(const SceneSpec& spec);

// Affine BEV field value_k = a_k x_w + b_k y_w + c_k at world position
// (x_w, y_w) of each cell centre, for an ego at `pose`. Returns [C x G x G].
struct LinearField {
  std::vector<double> a, b, c;
  std::size_t channels() const { return a.size(); }
};
LinearField make_linear_field(std::size_t channels, std::uint64_t seed);
Tensor linear_world_bev(const GridMeta& bev_meta, const Pose2& pose, const LinearField& field);

// Points with atan2(y, x) in [lo, hi]. ConfigError unless lo < hi.
PointCloud limit_fov(const PointCloud& points, double lo, double hi);
// Whether a planar position is inside the closed azimuth interval.
bool in_fov(double x, double y, double lo, double hi);

// "SDFS" | u32 version | u32 json length | JSON metadata | per frame:
// points (f64 x, y, z, intensity), camera maps, images; all little endian.
void save_scene(std::ostream& out, const Scene& scene);
Scene load_scene(std::istream& in);
void save_scene_file(const std::string& path, const Scene& scene);
Scene load_scene_file(const std::string& path);

bool identical(const Scene& a, const Scene& b);

}  // namespace sdf
