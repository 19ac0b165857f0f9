// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

// JSON mappings for the geometry types used in file headers.

#pragma once

#include <json.hpp>

#include "sdf/errors.hpp"
#include "sdf/geometry.hpp"

namespace sdf {

using Json = nlohmann::json;

inline Json to_json(const GridMeta& m) {
  return Json{{"W", m.W}, {"H", m.H}, {"Z", m.Z}, {"sx", m.sx},
              {"sy", m.sy}, {"sz", m.sz}, {"z_base", m.z_base}};
}

inline GridMeta grid_meta_from_json(const Json& j) {
  GridMeta m;
  m.W = j.at("W").get<int>();
  m.H = j.at("H").get<int>();
  m.Z = j.at("Z").get<int>();
  m.sx = j.at("sx").get<double>();
  m.sy = j.at("sy").get<double>();
  m.sz = j.at("sz").get<double>();
  m.z_base = j.at("z_base").get<double>();
  return m;
}

inline Json to_json(const CameraGeometry& c) {
  Json r = Json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(c.rotation(i, k));
  return Json{{"fx", c.fx},
              {"fy", c.fy},
              {"cx", c.cx},
              {"cy", c.cy},
              {"R", r},
              {"T", {c.translation.x(), c.translation.y(), c.translation.z()}},
              {"width", c.width},
              {"height", c.height}};
}

inline CameraGeometry camera_from_json(const Json& j) {
  CameraGeometry c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  const Json& r = j.at("R");
  if (r.size() != 9) throw FormatError("camera rotation must have 9 entries");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) c.rotation(i, k) = r.at(i * 3 + k).get<double>();
  const Json& t = j.at("T");
  c.translation = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  return c;
}

inline const char* aug_kind_name(AugKind k) {
  switch (k) {
    case AugKind::kRotationZ:
      return "rotation-z";
    case AugKind::kFlipX:
      return "flip-x";
    case AugKind::kFlipY:
      return "flip-y";
    case AugKind::kScale:
      return "scale";
    case AugKind::kTranslation:
      return "translation";
  }
  return "?";
}

inline AugKind aug_kind_from_name(const std::string& s) {
  if (s == "rotation-z") return AugKind::kRotationZ;
  if (s == "flip-x") return AugKind::kFlipX;
  if (s == "flip-y") return AugKind::kFlipY;
  if (s == "scale") return AugKind::kScale;
  if (s == "translation") return AugKind::kTranslation;
  throw FormatError("unknown augmentation kind '" + s + "'");
}

inline Json to_json(const AugRecord& a) {
  Json steps = Json::array();
  for (const AugStep& s : a.steps) {
    steps.push_back({{"kind", aug_kind_name(s.kind)},
                     {"amount", s.amount},
                     {"offset", {s.offset.x(), s.offset.y(), s.offset.z()}}});
  }
  return steps;
}

inline AugRecord aug_from_json(const Json& j) {
  AugRecord a;
  for (const Json& s : j) {
    AugStep step;
    step.kind = aug_kind_from_name(s.at("kind").get<std::string>());
    step.amount = s.value("amount", 0.0);
    if (s.contains("offset")) {
      const Json& o = s.at("offset");
      step.offset = Vec3(o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>());
    }
    a.steps.push_back(step);
  }
  return a;
}

inline Json to_json(const Pose2& p) { return Json{{"x", p.x}, {"y", p.y}, {"yaw", p.yaw}}; }

inline Pose2 pose_from_json(const Json& j) {
  return Pose2{j.at("x").get<double>(), j.at("y").get<double>(), j.at("yaw").get<double>()};
}

}  // namespace sdf
