// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdf/scene.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "json_io.hpp"
#include "sdf/errors.hpp"

namespace sdf {
namespace {

constexpr std::uint32_t kSceneVersion = 1;
constexpr double kGround = -1.8;
constexpr double kMapDepth = 10.0;

// Portable draws: std distributions differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

 private:
  std::mt19937_64 gen_;
};

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

const char* field_name(FeatureField f) {
  switch (f) {
    case FeatureField::kRandom:
      return "random";
    case FeatureField::kLinearWorld:
      return "linear-in-world";
    case FeatureField::kRayCoded:
      return "ray-coded";
  }
  return "?";
}

FeatureField field_from_name(const std::string& s) {
  if (s == "random") return FeatureField::kRandom;
  if (s == "linear-in-world") return FeatureField::kLinearWorld;
  if (s == "ray-coded") return FeatureField::kRayCoded;
  throw FormatError("unknown feature field '" + s + "'");
}

Vec3 ego_to_world(const Vec3& p, const Pose2& pose) {
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  return {pose.x + c * p.x() - s * p.y(), pose.y + s * p.x() + c * p.y(), p.z()};
}

Vec3 world_to_ego(const Vec3& w, const Pose2& pose) {
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  const double dx = w.x() - pose.x, dy = w.y() - pose.y;
  return {c * dx + s * dy, -s * dx + c * dy, w.z()};
}

struct WorldBox {
  Vec3 center;
  Vec3 size;
  double yaw;
};

struct World {
  std::vector<LidarPoint> points;
  std::vector<WorldBox> boxes;
};

Vec3 box_surface_point(const WorldBox& b, Rng& rng) {
  const double l = b.size.x(), w = b.size.y(), h = b.size.z();
  // Four sides and the top, picked by area.
  const double areas[5] = {l * h, l * h, w * h, w * h, l * w};
  double r = rng.uniform(0.0, areas[0] + areas[1] + areas[2] + areas[3] + areas[4]);
  int face = 0;
  while (face < 4 && r >= areas[face]) r -= areas[face++];
  double x = rng.uniform(-0.5, 0.5) * l, y = rng.uniform(-0.5, 0.5) * w, z = rng.uniform(-0.5, 0.5) * h;
  switch (face) {
    case 0: y = 0.5 * w; break;
    case 1: y = -0.5 * w; break;
    case 2: x = 0.5 * l; break;
    case 3: x = -0.5 * l; break;
    default: z = 0.5 * h; break;
  }
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  return b.center + Vec3(c * x - s * y, s * x + c * y, z);
}

World make_world(const SceneSpec& spec) {
  World world;
  Rng box_rng(mix(spec.seed, 1));
  for (std::size_t i = 0; i < spec.n_boxes; ++i) {
    WorldBox b;
    const double r = box_rng.uniform(std::max(5.0, spec.min_range), std::max(5.0, spec.max_range - 5.0));
    const double az = box_rng.uniform(-std::numbers::pi, std::numbers::pi);
    b.size = Vec3(box_rng.uniform(3.5, 5.0), box_rng.uniform(1.6, 2.1), box_rng.uniform(1.4, 1.9));
    b.center = Vec3(r * std::cos(az), r * std::sin(az), kGround + 0.5 * b.size.z());
    b.yaw = box_rng.uniform(-std::numbers::pi, std::numbers::pi);
    world.boxes.push_back(b);
  }
  Rng pt_rng(mix(spec.seed, 2));
  const auto n_ground = static_cast<std::size_t>(std::llround(spec.ground_fraction * static_cast<double>(spec.n_points)));
  world.points.reserve(spec.n_points);
  for (std::size_t i = 0; i < spec.n_points; ++i) {
    LidarPoint p;
    if (i < n_ground || world.boxes.empty()) {
      const double r2lo = spec.min_range * spec.min_range, r2hi = spec.max_range * spec.max_range;
      const double r = std::sqrt(pt_rng.uniform(r2lo, r2hi));
      const double az = pt_rng.uniform(-std::numbers::pi, std::numbers::pi);
      p.position = Vec3(r * std::cos(az), r * std::sin(az), kGround + pt_rng.uniform(0.02, 0.1));
      p.intensity = pt_rng.uniform(0.0, 0.3);
    } else {
      p.position = box_surface_point(world.boxes[pt_rng.index(world.boxes.size())], pt_rng);
      p.intensity = pt_rng.uniform(0.3, 1.0);
    }
    world.points.push_back(p);
  }
  return world;
}

Tensor camera_map(const SceneSpec& spec, const CameraGeometry& cam, int id, const Pose2& pose,
                  std::size_t frame) {
  const CameraRig& rig = spec.rig;
  Tensor map({rig.channels, rig.map_height, rig.map_width});
  const std::size_t hw = rig.map_height * rig.map_width;
  switch (spec.field) {
    case FeatureField::kRandom: {
      Rng rng(mix(mix(spec.seed, 3 + frame), static_cast<std::uint64_t>(id)));
      for (double& v : map.data()) v = rng.uniform(-1.0, 1.0);
      break;
    }
    case FeatureField::kLinearWorld: {
      const LinearField f = make_linear_field(rig.channels, mix(spec.seed, 7));
      const double su = static_cast<double>(cam.width) / static_cast<double>(rig.map_width);
      const double sv = static_cast<double>(cam.height) / static_cast<double>(rig.map_height);
      for (std::size_t i = 0; i < rig.map_height; ++i) {
        for (std::size_t j = 0; j < rig.map_width; ++j) {
          const Vec3 p = unproject((static_cast<double>(j) + 0.5) * su, (static_cast<double>(i) + 0.5) * sv,
                                   kMapDepth, cam);
          const Vec3 w = ego_to_world(p, pose);
          for (std::size_t k = 0; k < rig.channels; ++k) {
            map[k * hw + i * rig.map_width + j] = f.a[k] * w.x() + f.b[k] * w.y() + f.c[k];
          }
        }
      }
      break;
    }
    case FeatureField::kRayCoded: {
      for (std::size_t i = 0; i < rig.map_height; ++i) {
        for (std::size_t j = 0; j < rig.map_width; ++j) {
          const std::size_t t = i * rig.map_width + j;
          map[t] = (static_cast<double>(j) + 0.5) / static_cast<double>(rig.map_width);
          map[hw + t] = (static_cast<double>(i) + 0.5) / static_cast<double>(rig.map_height);
          map[2 * hw + t] = static_cast<double>(id) / static_cast<double>(rig.count);
        }
      }
      break;
    }
  }
  return map;
}

// --- serialization helpers -------------------------------------------------

void write_tensor_payload(std::ostream& out, const Tensor& t) {
  for (double v : t.values()) io::write_f64(out, v);
}

Tensor read_tensor_payload(std::istream& in, const Shape& shape, const std::string& section) {
  Tensor t(shape);
  for (double& v : t.data()) v = io::read_f64(in, section.c_str());
  return t;
}

Shape shape_from_json(const Json& j) {
  Shape s;
  for (const Json& d : j) s.push_back(d.get<std::size_t>());
  return s;
}

}  // namespace

GridMeta desk_grid() {
  GridMeta m;
  m.W = 128;
  m.H = 128;
  m.Z = 8;
  m.sx = 108.0 / 128.0;
  m.sy = 108.0 / 128.0;
  m.sz = 0.5;
  m.z_base = 2.2;
  return m;
}

GridMeta full_scale_grid() {
  GridMeta m;
  m.W = 1440;
  m.H = 1440;
  m.Z = 40;
  m.sx = 0.075;
  m.sy = 0.075;
  m.sz = 0.1;
  m.z_base = 2.2;
  return m;
}

std::vector<CameraGeometry> make_rig(const CameraRig& rig) {
  if (rig.count < 0) throw ConfigError("camera rig: negative count");
  std::vector<CameraGeometry> cams;
  for (int k = 0; k < rig.count; ++k) {
    const double yaw = k * rig.yaw_spacing;
    const Vec3 fwd(std::cos(yaw), std::sin(yaw), 0.0);
    const Vec3 right(std::sin(yaw), -std::cos(yaw), 0.0);
    const Vec3 down(0.0, 0.0, -1.0);
    CameraGeometry c;
    c.fx = rig.fx;
    c.fy = rig.fy;
    c.cx = 0.5 * rig.image_width;
    c.cy = 0.5 * rig.image_height;
    c.rotation.row(0) = right.transpose();
    c.rotation.row(1) = down.transpose();
    c.rotation.row(2) = fwd.transpose();
    c.translation = -(c.rotation * Vec3(0.0, 0.0, rig.mount_height));
    c.width = rig.image_width;
    c.height = rig.image_height;
    c.validate();
    cams.push_back(c);
  }
  return cams;
}

void SceneSpec::validate() const {
  grid.validate();
  if (!(ground_fraction >= 0.0 && ground_fraction <= 1.0)) throw ConfigError("scene: ground_fraction outside [0, 1]");
  if (!(min_range >= 0.0 && max_range > min_range)) throw ConfigError("scene: need 0 <= min_range < max_range");
  if (trajectory.empty()) throw ConfigError("scene: trajectory needs at least one pose");
  if (rig.count < 0 || rig.map_width == 0 || rig.map_height == 0 || rig.channels == 0) {
    throw ConfigError("scene: invalid camera rig");
  }
  if (field == FeatureField::kRayCoded && rig.channels < 3) {
    throw ConfigError("scene: ray-coded maps need at least 3 channels");
  }
}

std::string scene_spec_to_json(const SceneSpec& spec) {
  Json traj = Json::array();
  for (const Pose2& p : spec.trajectory) traj.push_back(to_json(p));
  const CameraRig& r = spec.rig;
  Json j{{"seed", spec.seed},
         {"n_points", spec.n_points},
         {"ground_fraction", spec.ground_fraction},
         {"n_boxes", spec.n_boxes},
         {"min_range", spec.min_range},
         {"max_range", spec.max_range},
         {"rig",
          {{"count", r.count},
           {"yaw_spacing", r.yaw_spacing},
           {"fx", r.fx},
           {"fy", r.fy},
           {"image_width", r.image_width},
           {"image_height", r.image_height},
           {"map_width", r.map_width},
           {"map_height", r.map_height},
           {"channels", r.channels},
           {"mount_height", r.mount_height}}},
         {"trajectory", traj},
         {"field", field_name(spec.field)},
         {"grid", to_json(spec.grid)},
         {"with_images", spec.with_images}};
  return j.dump(2) + "\n";
}

SceneSpec scene_spec_from_json(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    if (!j.is_object()) throw FormatError("scene spec: expected a JSON object");
    SceneSpec s;
    s.seed = j.value("seed", s.seed);
    s.n_points = j.value("n_points", s.n_points);
    s.ground_fraction = j.value("ground_fraction", s.ground_fraction);
    s.n_boxes = j.value("n_boxes", s.n_boxes);
    s.min_range = j.value("min_range", s.min_range);
    s.max_range = j.value("max_range", s.max_range);
    if (j.contains("rig")) {
      const Json& r = j.at("rig");
      s.rig.count = r.value("count", s.rig.count);
      s.rig.yaw_spacing = r.value("yaw_spacing", s.rig.yaw_spacing);
      s.rig.fx = r.value("fx", s.rig.fx);
      s.rig.fy = r.value("fy", s.rig.fy);
      s.rig.image_width = r.value("image_width", s.rig.image_width);
      s.rig.image_height = r.value("image_height", s.rig.image_height);
      s.rig.map_width = r.value("map_width", s.rig.map_width);
      s.rig.map_height = r.value("map_height", s.rig.map_height);
      s.rig.channels = r.value("channels", s.rig.channels);
      s.rig.mount_height = r.value("mount_height", s.rig.mount_height);
    }
    if (j.contains("trajectory")) {
      s.trajectory.clear();
      for (const Json& p : j.at("trajectory")) s.trajectory.push_back(pose_from_json(p));
    }
    if (j.contains("field")) s.field = field_from_name(j.at("field").get<std::string>());
    if (j.contains("grid")) s.grid = grid_meta_from_json(j.at("grid"));
    s.with_images = j.value("with_images", s.with_images);
    s.validate();
    return s;
  } catch (const Json::exception& e) {
    throw FormatError(std::string("scene spec: ") + e.what());
  }
}

Scene synth_scene(const SceneSpec& spec) {
  spec.validate();
  const World world = make_world(spec);
  const std::vector<CameraGeometry> rig = make_rig(spec.rig);
  Scene scene;
  scene.grid = spec.grid;
  for (std::size_t f = 0; f < spec.trajectory.size(); ++f) {
    const Pose2& pose = spec.trajectory[f];
    SceneFrame frame;
    frame.input.ego_pose = pose;
    for (const LidarPoint& wp : world.points) {
      LidarPoint p{world_to_ego(wp.position, pose), wp.intensity};
      if (world_to_voxel(p.position, spec.grid)) frame.input.points.push_back(p);
    }
    for (int k = 0; k < spec.rig.count; ++k) {
      CameraView v;
      v.id = k;
      v.geometry = rig[static_cast<std::size_t>(k)];
      v.feature_map = camera_map(spec, v.geometry, k, pose, f);
      frame.input.cameras.push_back(std::move(v));
      if (spec.with_images) {
        Tensor img({3, 4 * spec.rig.map_height, 4 * spec.rig.map_width});
        Rng rng(mix(mix(spec.seed, 100 + f), static_cast<std::uint64_t>(k)));
        for (double& x : img.data()) x = rng.uniform(0.0, 1.0);
        frame.input.images.push_back(std::move(img));
      }
    }
    for (const WorldBox& b : world.boxes) {
      GtBox g;
      g.center = world_to_ego(b.center, pose);
      g.size = b.size;
      g.yaw = normalize_angle(b.yaw - pose.yaw);
      frame.boxes.push_back(g);
    }
    scene.frames.push_back(std::move(frame));
  }
  return scene;
}

LinearField make_linear_field(std::size_t channels, std::uint64_t seed) {
  Rng rng(mix(seed, 11));
  LinearField f;
  for (std::size_t k = 0; k < channels; ++k) {
    f.a.push_back(rng.uniform(-0.1, 0.1));
    f.b.push_back(rng.uniform(-0.1, 0.1));
    f.c.push_back(rng.uniform(-1.0, 1.0));
  }
  return f;
}

Tensor linear_world_bev(const GridMeta& bev_meta, const Pose2& pose, const LinearField& field) {
  const auto gw = static_cast<std::size_t>(bev_meta.W), gh = static_cast<std::size_t>(bev_meta.H);
  Tensor out({field.channels(), gh, gw});
  for (std::size_t r = 0; r < gh; ++r) {
    for (std::size_t c = 0; c < gw; ++c) {
      const Vec3 p = voxel_center({static_cast<int>(c), static_cast<int>(r), 0}, bev_meta);
      const Vec3 w = ego_to_world(p, pose);
      for (std::size_t k = 0; k < field.channels(); ++k) {
        out[(k * gh + r) * gw + c] = field.a[k] * w.x() + field.b[k] * w.y() + field.c[k];
      }
    }
  }
  return out;
}

bool in_fov(double x, double y, double lo, double hi) {
  const double az = std::atan2(y, x);
  return az >= lo && az <= hi;
}

PointCloud limit_fov(const PointCloud& points, double lo, double hi) {
  if (!(lo < hi)) throw ConfigError("limit_fov: need lo < hi");
  PointCloud kept;
  for (const LidarPoint& p : points) {
    if (in_fov(p.position.x(), p.position.y(), lo, hi)) kept.push_back(p);
  }
  return kept;
}

void save_scene(std::ostream& out, const Scene& scene) {
  Json frames = Json::array();
  for (const SceneFrame& f : scene.frames) {
    Json cams = Json::array();
    for (std::size_t k = 0; k < f.input.cameras.size(); ++k) {
      const CameraView& c = f.input.cameras[k];
      cams.push_back({{"id", c.id}, {"geometry", to_json(c.geometry)}, {"map_shape", c.feature_map.shape()}});
    }
    Json images = Json::array();
    for (const Tensor& img : f.input.images) images.push_back(img.shape());
    Json boxes = Json::array();
    for (const GtBox& b : f.boxes) {
      boxes.push_back({{"center", {b.center.x(), b.center.y(), b.center.z()}},
                       {"size", {b.size.x(), b.size.y(), b.size.z()}},
                       {"yaw", b.yaw}});
    }
    Json frame{{"pose", to_json(f.input.ego_pose)},
               {"aug", to_json(f.input.aug)},
               {"points", f.input.points.size()},
               {"cameras", cams},
               {"images", images},
               {"boxes", boxes}};
    if (f.input.prev_bev) frame["prev_bev_shape"] = f.input.prev_bev->shape();
    frames.push_back(frame);
  }
  const std::string meta =
      Json{{"format", "sdf-scene"}, {"grid", to_json(scene.grid)}, {"frames", frames}}.dump();
  out.write("SDFS", 4);
  io::write_u32(out, kSceneVersion);
  io::write_u32(out, static_cast<std::uint32_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  for (const SceneFrame& f : scene.frames) {
    for (const LidarPoint& p : f.input.points) {
      io::write_f64(out, p.position.x());
      io::write_f64(out, p.position.y());
      io::write_f64(out, p.position.z());
      io::write_f64(out, p.intensity);
    }
    for (const CameraView& c : f.input.cameras) write_tensor_payload(out, c.feature_map);
    for (const Tensor& img : f.input.images) write_tensor_payload(out, img);
    if (f.input.prev_bev) write_tensor_payload(out, *f.input.prev_bev);
  }
  if (!out) throw Error("save_scene: write failed");
}

Scene load_scene(std::istream& in) {
  io::expect_magic(in, "SDFS", "scene");
  const std::uint32_t version = io::read_u32(in, "header");
  if (version != kSceneVersion) throw FormatError("scene: unsupported version " + std::to_string(version));
  const std::uint32_t len = io::read_u32(in, "header");
  const std::string text = io::read_bytes(in, len, "metadata");
  Scene scene;
  try {
    const Json meta = Json::parse(text);
    if (meta.value("format", std::string()) != "sdf-scene") throw FormatError("scene: unexpected format tag");
    scene.grid = grid_meta_from_json(meta.at("grid"));
    std::size_t fi = 0;
    for (const Json& fj : meta.at("frames")) {
      const std::string tag = "frame" + std::to_string(fi++);
      SceneFrame f;
      f.input.ego_pose = pose_from_json(fj.at("pose"));
      f.input.aug = aug_from_json(fj.at("aug"));
      for (const Json& b : fj.at("boxes")) {
        GtBox g;
        const Json& c = b.at("center");
        const Json& s = b.at("size");
        g.center = Vec3(c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>());
        g.size = Vec3(s.at(0).get<double>(), s.at(1).get<double>(), s.at(2).get<double>());
        g.yaw = b.at("yaw").get<double>();
        f.boxes.push_back(g);
      }
      const std::string pts_section = tag + ".points";
      const auto n = fj.at("points").get<std::size_t>();
      f.input.points.resize(n);
      for (LidarPoint& p : f.input.points) {
        const double x = io::read_f64(in, pts_section.c_str());
        const double y = io::read_f64(in, pts_section.c_str());
        const double z = io::read_f64(in, pts_section.c_str());
        p.position = Vec3(x, y, z);
        p.intensity = io::read_f64(in, pts_section.c_str());
      }
      for (const Json& cj : fj.at("cameras")) {
        CameraView v;
        v.id = cj.at("id").get<int>();
        v.geometry = camera_from_json(cj.at("geometry"));
        v.feature_map = read_tensor_payload(in, shape_from_json(cj.at("map_shape")),
                                            tag + ".camera" + std::to_string(v.id) + ".map");
        f.input.cameras.push_back(std::move(v));
      }
      std::size_t ii = 0;
      for (const Json& ij : fj.at("images")) {
        f.input.images.push_back(read_tensor_payload(in, shape_from_json(ij), tag + ".image" + std::to_string(ii++)));
      }
      if (fj.contains("prev_bev_shape")) {
        f.input.prev_bev = read_tensor_payload(in, shape_from_json(fj.at("prev_bev_shape")), tag + ".prev_bev");
      }
      scene.frames.push_back(std::move(f));
    }
  } catch (const Json::exception& e) {
    throw FormatError(std::string("scene metadata: ") + e.what());
  }
  return scene;
}

void save_scene_file(const std::string& path, const Scene& scene) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  save_scene(out, scene);
}

Scene load_scene_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open scene file '" + path + "'");
  return load_scene(in);
}

bool identical(const Scene& a, const Scene& b) {
  std::ostringstream sa, sb;
  save_scene(sa, a);
  save_scene(sb, b);
  return sa.str() == sb.str();
}

}  // namespace sdf
