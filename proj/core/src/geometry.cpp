// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdf/geometry.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/Geometry>

#include "sdf/errors.hpp"
#include "sdf/sampling.hpp"

namespace sdf {

void CameraGeometry::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw ConfigError("camera: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ConfigError("camera: image size must be positive");
  const double err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(err < 1e-9)) {
    throw ConfigError("camera: rotation is not orthonormal (max |R^T R - I| = " +
                      std::to_string(err) + ")");
  }
}

std::optional<Projection> project_to_image(const Vec3& point_world, const CameraGeometry& camera) {
  const Vec3 pc = camera.rotation * point_world + camera.translation;
  const double z = pc.z();
  if (!(z > 0.0)) return std::nullopt;
  const double u = camera.fx * pc.x() / z + camera.cx;
  const double v = camera.fy * pc.y() / z + camera.cy;
  if (!(u >= 0.0 && u < camera.width && v >= 0.0 && v < camera.height)) return std::nullopt;
  return Projection{u, v, z};
}

Vec3 unproject(double u, double v, double depth, const CameraGeometry& camera) {
  const Vec3 pc((u - camera.cx) * depth / camera.fx, (v - camera.cy) * depth / camera.fy, depth);
  return camera.rotation.transpose() * (pc - camera.translation);
}

void GridMeta::validate() const {
  if (W < 1 || H < 1 || Z < 1) throw ConfigError("grid: voxel counts must be >= 1");
  if (!(sx > 0.0) || !(sy > 0.0) || !(sz > 0.0)) throw ConfigError("grid: voxel sizes must be > 0");
}

GridMeta GridMeta::downsampled() const {
  GridMeta m = *this;
  m.W = (W + 1) / 2;
  m.H = (H + 1) / 2;
  m.Z = (Z + 1) / 2;
  m.sx = 2.0 * sx;
  m.sy = 2.0 * sy;
  m.sz = 2.0 * sz;
  // Keep the top face in place: z' = (z - Z) s_z + z_base is anchored at z = Z.
  return m;
}

bool in_range(const VoxelIndex& i, const GridMeta& m) {
  return i.x >= 0 && i.x < m.W && i.y >= 0 && i.y < m.H && i.z >= 0 && i.z < m.Z;
}

Vec3 grid_to_world(const Vec3& g, const GridMeta& m) {
  if (!(g.x() >= 0.0 && g.x() <= m.W && g.y() >= 0.0 && g.y() <= m.H && g.z() >= 0.0 &&
        g.z() <= m.Z)) {
    throw RangeError("grid coordinate (" + std::to_string(g.x()) + ", " + std::to_string(g.y()) +
                     ", " + std::to_string(g.z()) + ") outside grid");
  }
  return Vec3((g.x() - 0.5 * m.W) * m.sx, (g.y() - 0.5 * m.H) * m.sy,
              (g.z() - m.Z) * m.sz + m.z_base);
}

Vec3 voxel_center(const VoxelIndex& i, const GridMeta& m) {
  if (!in_range(i, m)) {
    throw RangeError("voxel index (" + std::to_string(i.x) + ", " + std::to_string(i.y) + ", " +
                     std::to_string(i.z) + ") outside grid");
  }
  return grid_to_world(Vec3(i.x + 0.5, i.y + 0.5, i.z + 0.5), m);
}

std::optional<VoxelIndex> world_to_voxel(const Vec3& p, const GridMeta& m) {
  const double gx = std::floor(p.x() / m.sx + 0.5 * m.W);
  const double gy = std::floor(p.y() / m.sy + 0.5 * m.H);
  const double gz = std::floor((p.z() - m.z_base) / m.sz + m.Z);
  if (!(gx >= 0.0 && gx < m.W && gy >= 0.0 && gy < m.H && gz >= 0.0 && gz < m.Z)) {
    return std::nullopt;
  }
  return VoxelIndex{static_cast<int>(gx), static_cast<int>(gy), static_cast<int>(gz)};
}

void AugRecord::validate() const {
  for (const AugStep& s : steps) {
    if (s.kind == AugKind::kScale && s.amount == 0.0) {
      throw ConfigError("augmentation: scale factor must be non-zero");
    }
  }
}

namespace {

Vec3 rotate_z(const Vec3& p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return Vec3(c * p.x() - s * p.y(), s * p.x() + c * p.y(), p.z());
}

Vec3 apply_step(const Vec3& p, const AugStep& s) {
  switch (s.kind) {
    case AugKind::kRotationZ:
      return rotate_z(p, s.amount);
    case AugKind::kFlipX:
      return Vec3(-p.x(), p.y(), p.z());
    case AugKind::kFlipY:
      return Vec3(p.x(), -p.y(), p.z());
    case AugKind::kScale:
      return p * s.amount;
    case AugKind::kTranslation:
      return p + s.offset;
  }
  return p;
}

Vec3 invert_step(const Vec3& p, const AugStep& s) {
  switch (s.kind) {
    case AugKind::kRotationZ:
      return rotate_z(p, -s.amount);
    case AugKind::kFlipX:
    case AugKind::kFlipY:
      return apply_step(p, s);
    case AugKind::kScale:
      return p / s.amount;
    case AugKind::kTranslation:
      return p - s.offset;
  }
  return p;
}

}  // namespace

Vec3 apply_augmentation(const Vec3& p, const AugRecord& aug) {
  Vec3 q = p;
  for (const AugStep& s : aug.steps) q = apply_step(q, s);
  return q;
}

Vec3 invert_augmentation(const Vec3& p, const AugRecord& aug) {
  Vec3 q = p;
  for (auto it = aug.steps.rbegin(); it != aug.steps.rend(); ++it) q = invert_step(q, *it);
  return q;
}

std::vector<Vec3> apply_augmentation(std::span<const Vec3> points, const AugRecord& aug) {
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(apply_augmentation(p, aug));
  return out;
}

std::vector<Vec3> invert_augmentation(std::span<const Vec3> points, const AugRecord& aug) {
  aug.validate();
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (const Vec3& p : points) out.push_back(invert_augmentation(p, aug));
  return out;
}

double normalize_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  double r = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

EgoMotion relative_motion(const Pose2& previous, const Pose2& current) {
  const double c = std::cos(current.yaw), s = std::sin(current.yaw);
  const double wx = previous.x - current.x;
  const double wy = previous.y - current.y;
  return EgoMotion{c * wx + s * wy, -s * wx + c * wy, normalize_angle(previous.yaw - current.yaw)};
}

EgoMotion compose(const EgoMotion& first, const EgoMotion& second) {
  const double c = std::cos(second.dyaw), s = std::sin(second.dyaw);
  return EgoMotion{c * first.dx - s * first.dy + second.dx, s * first.dx + c * first.dy + second.dy,
                   normalize_angle(first.dyaw + second.dyaw)};
}

Tensor align_bev(const Tensor& previous, const EgoMotion& motion, const GridMeta& bev_meta) {
  if (previous.rank() != 3 || previous.dim(1) != static_cast<std::size_t>(bev_meta.H) ||
      previous.dim(2) != static_cast<std::size_t>(bev_meta.W)) {
    throw DimensionError("align_bev: BEV " + shape_to_string(previous.shape()) +
                         " does not match grid " + std::to_string(bev_meta.H) + " x " +
                         std::to_string(bev_meta.W));
  }
  if (motion.is_identity()) return previous;
  const std::size_t ch = previous.dim(0);
  const std::size_t gh = previous.dim(1), gw = previous.dim(2);
  const double c = std::cos(motion.dyaw), s = std::sin(motion.dyaw);
  Tensor out({ch, gh, gw});
  std::vector<double> sample(ch);
  for (std::size_t r = 0; r < gh; ++r)
    for (std::size_t col = 0; col < gw; ++col) {
      const double x = (col + 0.5 - 0.5 * bev_meta.W) * bev_meta.sx - motion.dx;
      const double y = (r + 0.5 - 0.5 * bev_meta.H) * bev_meta.sy - motion.dy;
      // R^T (p - d)
      const double px = c * x + s * y;
      const double py = -s * x + c * y;
      const double u = px / bev_meta.sx + 0.5 * bev_meta.W;
      const double v = py / bev_meta.sy + 0.5 * bev_meta.H;
      bilinear_read(previous, u, v, sample);
      for (std::size_t k = 0; k < ch; ++k) out[k * gh * gw + r * gw + col] = sample[k];
    }
  return out;
}

}  // namespace sdf
