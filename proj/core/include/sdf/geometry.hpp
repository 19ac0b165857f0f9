// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "sdf/tensor.hpp"

namespace sdf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Pinhole camera: intrinsics plus the LiDAR-to-camera extrinsic (R, T).
///
/// A world point p maps to camera coordinates R p + T; the camera looks down
/// its +z axis with x to the right and y down.
struct CameraGeometry {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 1;
  int height = 1;

  // Throws ConfigError on non-positive focal lengths or image size, or a
  // rotation that is not orthonormal to 1e-9.
  void validate() const;
};

struct CameraView {
  // Stable identity of the physical camera; fixes the reduction order of
  // multi-view sums independently of list order.
  int id = 0;
  CameraGeometry geometry;
  // [C x H_f x W_f]; the feature map covers the full image.
  Tensor feature_map;
};

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;
};

// Absent when the point is behind the camera (depth <= 0) or lands outside
// [0, width) x [0, height).
std::optional<Projection> project_to_image(const Vec3& point_world, const CameraGeometry& camera);

// Inverse of project_to_image for a pixel and depth.
Vec3 unproject(double u, double v, double depth, const CameraGeometry& camera);

// Image pixel -> feature-map pixel for a map of the given size.
inline void image_to_feature(const CameraGeometry& camera, std::size_t map_h, std::size_t map_w,
                             double u, double v, double& fu, double& fv) {
  fu = u * static_cast<double>(map_w) / camera.width;
  fv = v * static_cast<double>(map_h) / camera.height;
}

/// Voxel grid layout. A continuous grid coordinate (x, y, z) maps to
///   x' = (x - W/2) s_x,  y' = (y - H/2) s_y,  z' = (z - Z) s_z + z_base,
/// so the grid spans z' in [z_base - Z s_z, z_base].
struct GridMeta {
  int W = 1;
  int H = 1;
  int Z = 1;
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;
  double z_base = -1.8;

  void validate() const;
  double x_min() const { return -0.5 * W * sx; }
  double x_max() const { return 0.5 * W * sx; }
  double y_min() const { return -0.5 * H * sy; }
  double y_max() const { return 0.5 * H * sy; }
  double z_min() const { return z_base - Z * sz; }
  double z_max() const { return z_base; }
  std::int64_t cell_count() const { return std::int64_t{W} * H * Z; }
  // Grid after a stride-2 downsample: counts halved (rounded up), sizes doubled.
  GridMeta downsampled() const;

  friend bool operator==(const GridMeta&, const GridMeta&) = default;
};

struct VoxelIndex {
  int x = 0;
  int y = 0;
  int z = 0;
  friend auto operator<=>(const VoxelIndex&, const VoxelIndex&) = default;
};

bool in_range(const VoxelIndex& index, const GridMeta& meta);

// Continuous grid coordinates to world; components must lie in [0, W] x
// [0, H] x [0, Z] (RangeError otherwise).
Vec3 grid_to_world(const Vec3& grid_coords, const GridMeta& meta);

// World position of a voxel's centre (index + 0.5); RangeError when the index
// is outside the grid.
Vec3 voxel_center(const VoxelIndex& index, const GridMeta& meta);

// Half-open binning: a point on a face belongs to the higher-index voxel.
// Absent outside the grid.
std::optional<VoxelIndex> world_to_voxel(const Vec3& point, const GridMeta& meta);

enum class AugKind : std::uint8_t {
  kRotationZ,    // amount: angle in radians
  kFlipX,        // x -> -x
  kFlipY,        // y -> -y
  kScale,        // amount: uniform factor (non-zero)
  kTranslation,  // offset: metres
};

struct AugStep {
  AugKind kind = AugKind::kRotationZ;
  double amount = 0.0;
  Vec3 offset = Vec3::Zero();
};

// Point-cloud augmentation, applied in order.
struct AugRecord {
  std::vector<AugStep> steps;
  bool empty() const { return steps.empty(); }
  // Throws ConfigError for a zero scale factor.
  void validate() const;
};

Vec3 apply_augmentation(const Vec3& p, const AugRecord& aug);
Vec3 invert_augmentation(const Vec3& p, const AugRecord& aug);
std::vector<Vec3> apply_augmentation(std::span<const Vec3> points, const AugRecord& aug);
std::vector<Vec3> invert_augmentation(std::span<const Vec3> points, const AugRecord& aug);

double normalize_angle(double radians);  // to (-pi, pi]

// Planar pose of a frame in the world.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;
};

// Pose of frame t-1 expressed in frame t: p_t = R(dyaw) p_{t-1} + (dx, dy).
struct EgoMotion {
  double dx = 0.0;
  double dy = 0.0;
  double dyaw = 0.0;

  bool is_identity() const { return dx == 0.0 && dy == 0.0 && dyaw == 0.0; }
};

EgoMotion relative_motion(const Pose2& previous, const Pose2& current);
// `first` maps t-2 -> t-1, `second` maps t-1 -> t; result maps t-2 -> t.
EgoMotion compose(const EgoMotion& first, const EgoMotion& second);

// Resamples the previous frame's [C x G x G] BEV into the current frame. Each
// current cell centre is mapped into the previous frame and bilinearly read;
// samples outside the previous grid read zero. `bev_meta` supplies G (W == H)
// and the cell sizes.
Tensor align_bev(const Tensor& previous, const EgoMotion& motion, const GridMeta& bev_meta);

}  // namespace sdf
