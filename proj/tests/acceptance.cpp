// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "checks.hpp"
#include "oracles.hpp"
#include "primitive_cases.hpp"
#include "sdf/attention.hpp"
#include "sdf/dense_fusion.hpp"
#include "sdf/experiments.hpp"
#include "sdf/geometry.hpp"
#include "sdf/gradcheck.hpp"
#include "sdf/pipeline.hpp"
#include "sdf/scene.hpp"
#include "sdf/voxel.hpp"

using namespace sdf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, double time_limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (time_limit_s > 0 && secs > time_limit_s) {
    o.pass = false;
    o.detail += "; over time limit " + std::to_string(time_limit_s) + " s";
  }
  char t[32];
  std::snprintf(t, sizeof t, "%.2f s", secs);
  std::printf("%s  %-28s %s (%s)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), t);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

// --- fusion-grid count ------------------------------------------------------

Outcome fusion_grid_count() {
  const Scene scene = synth_scene(SceneSpec{});
  const EncoderConfig enc = default_pipeline_config(scene.grid).encoder;
  const ExperimentReport r = run_efficiency(scene, enc, 180);
  const std::string want = "C" + std::to_string(static_cast<int>(enc.insertion_point));
  bool ok = true;
  double sparse = -1, dense = -1;
  for (const ReportRow& row : r.rows) {
    ok &= row.number("dense_blocks") == 32400.0;
    if (row.variant == want) {
      sparse = row.number("sparse_blocks");
      dense = row.number("dense_blocks");
    }
  }
  ok &= dense == 32400.0 && sparse >= 0 && sparse < dense;
  return {ok, "points=" + std::to_string(scene.frames[0].input.points.size()) + " " + want +
                  " sparse=" + fmt(sparse) + " dense=" + fmt(dense)};
}

// --- projection and voxel round trips --------------------------------------

Outcome geometry_round_trips() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double worst = 0.0;
  std::size_t n = 0;
  while (n < 1000) {
    CameraGeometry cam;
    cam.fx = 200 + 300 * (U(rng) + 1);
    cam.fy = 200 + 300 * (U(rng) + 1);
    cam.width = 320 + static_cast<int>(200 * (U(rng) + 1));
    cam.height = 240 + static_cast<int>(100 * (U(rng) + 1));
    cam.cx = cam.width * (0.5 + 0.1 * U(rng));
    cam.cy = cam.height * (0.5 + 0.1 * U(rng));
    cam.rotation = Eigen::Quaterniond(U(rng), U(rng), U(rng), U(rng)).normalized().toRotationMatrix();
    cam.translation = Vec3(U(rng), U(rng), U(rng)) * 2.0;
    const double u = (U(rng) + 1) * 0.5 * cam.width * 0.999, v = (U(rng) + 1) * 0.5 * cam.height * 0.999;
    const double depth = 0.5 + 40 * (U(rng) + 1);
    const Vec3 p = unproject(u, v, depth, cam);
    const auto back = project_to_image(p, cam);
    const auto ref = oracle::project(p, cam);
    if (!back || !ref) return {false, "round-trip point left the image"};
    worst = std::max({worst, std::abs(back->u - u), std::abs(back->v - v), std::abs(back->depth - depth) / depth,
                      std::abs((*ref)[0] - u), std::abs((*ref)[1] - v)});
    ++n;
  }
  GridMeta m;
  m.W = 8;
  m.H = 8;
  m.Z = 4;
  m.sx = 0.6;
  m.sy = 0.45;
  m.sz = 0.8;
  m.z_base = 1.2;
  double vworst = 0.0;
  bool injective = true;
  std::map<std::tuple<long, long, long>, int> seen;
  for (int x = 0; x < 8; ++x)
    for (int y = 0; y < 8; ++y)
      for (int z = 0; z < 4; ++z) {
        const VoxelIndex idx{x, y, z};
        const Vec3 c = voxel_center(idx, m);
        const Vec3 want((x + 0.5 - 4.0) * m.sx, (y + 0.5 - 4.0) * m.sy, (z + 0.5 - 4.0) * m.sz + m.z_base);
        vworst = std::max(vworst, (c - want).cwiseAbs().maxCoeff());
        const auto back = world_to_voxel(c, m);
        injective &= back.has_value() && *back == idx;
        injective &= seen.emplace(std::make_tuple(std::lround(c.x() * 1e6), std::lround(c.y() * 1e6),
                                                  std::lround(c.z() * 1e6)), 1).second;
      }
  const bool ok = worst < 1e-9 && vworst < 1e-9 && injective;
  return {ok, "projections=" + std::to_string(n) + " max_err=" + fmt(worst) + " voxels=256 max_err=" + fmt(vworst) +
                  (injective ? "" : " voxel round-trip broken")};
}

// --- V2C against the explicit double sum ------------------------------------

CameraGeometry toy_camera(double yaw, double pitch) {
  CameraGeometry c;
  c.fx = c.fy = 40.0;
  c.cx = 32.0;
  c.cy = 24.0;
  c.width = 64;
  c.height = 48;
  c.rotation = (Eigen::AngleAxisd(pitch, Vec3::UnitX()) * Eigen::AngleAxisd(yaw, Vec3::UnitY())).toRotationMatrix();
  return c;
}

struct ToyInstance {
  std::vector<CameraView> cams;
  std::vector<std::vector<Vec3>> refs;
  Tensor queries;
};

ToyInstance toy_instance(std::uint64_t seed, std::size_t channels, std::size_t d) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  ToyInstance s;
  const int ids[2] = {static_cast<int>(seed % 5) + 1, static_cast<int>(seed % 3)};
  for (int k = 0; k < 2; ++k) {
    s.cams.push_back({ids[k], toy_camera(0.4 * U(rng), 0.1 * U(rng)),
                      oracle::random_tensor({channels, 12, 16}, seed * 7 + k)});
  }
  for (int v = 0; v < 4; ++v) {
    std::vector<Vec3> pts;
    const int np = 1 + static_cast<int>(rng() % 3);
    for (int p = 0; p < np; ++p) pts.emplace_back(2.5 * U(rng), 1.5 * U(rng), 4.0 + 2.0 * U(rng));
    // Occasionally a voxel sits behind both cameras.
    if (rng() % 6 == 0) pts = {Vec3(U(rng), U(rng), -3.0)};
    s.refs.push_back(pts);
  }
  s.queries = oracle::random_tensor({4, d}, seed * 7 + 5);
  return s;
}

std::vector<CameraGeometry> geometries(const std::vector<CameraView>& cams) {
  std::vector<CameraGeometry> g;
  for (const CameraView& c : cams) g.push_back(c.geometry);
  return g;
}

Outcome v2c_oracle() {
  double worst = 0.0;
  std::size_t hit = 0, unhit = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    DeformAttnConfig cfg;
    cfg.num_heads = 1 + trial % 2;
    cfg.num_points = 1 + trial % 4;
    cfg.embed_dim = 8;
    cfg.offset_units = trial % 3 == 0 ? OffsetUnits::kPixels : OffsetUnits::kNormalized;
    const ToyInstance s = toy_instance(trial, 3, cfg.embed_dim);
    ParamStore store(trial + 100);
    const RefPointSet refs = build_ref_points(s.refs, geometries(s.cams));
    std::vector<std::pair<VoxelIndex, Tensor>> qs;
    for (std::size_t i = 0; i < 4; ++i) {
      Tensor q({cfg.embed_dim});
      for (std::size_t j = 0; j < cfg.embed_dim; ++j) q[j] = s.queries[i * cfg.embed_dim + j];
      qs.emplace_back(VoxelIndex{static_cast<int>(i), 0, 0}, q);
    }
    const auto out = v2c_cross_attention(qs, refs, s.cams, cfg, store, "v2c");
    for (std::size_t i = 0; i < 4; ++i) {
      std::vector<double> q(qs[i].second.values().begin(), qs[i].second.values().end());
      const std::vector<double> want = oracle::v2c_update(q, s.refs[i], s.cams, cfg, store, "v2c");
      (refs.hit_view_count(i) ? hit : unhit)++;
      for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
        worst = std::max(worst, std::abs(out[i].second[j] - q[j] - want[j]));
      }
    }
  }
  return {worst < 1e-10 && hit > 0,
          "trials=100 hit_voxels=" + std::to_string(hit) + " unhit=" + std::to_string(unhit) + " max_err=" + fmt(worst)};
}

// --- gradients --------------------------------------------------------------

Outcome gradient_suite() {
  double prim = 0.0;
  std::string prim_worst;
  for (const auto& c : cases::primitive_cases()) {
    ParamStore store(1);
    for (const auto& [n, v] : c.params) store.set(n, v);
    GradcheckOptions opt;
    opt.step = 1e-5;
    const GradcheckResult r = gradcheck_detailed(cases::weighted(c.f), store, opt);
    if (r.max_rel_error >= prim) {
      prim = r.max_rel_error;
      prim_worst = c.name;
    }
  }

  // One V2C layer, including the camera maps and the queries.
  DeformAttnConfig acfg;
  acfg.num_heads = 2;
  acfg.num_points = 2;
  acfg.embed_dim = 8;
  const ToyInstance s = toy_instance(4, 3, 8);
  const RefPointSet refs = build_ref_points(s.refs, geometries(s.cams));
  ParamStore vstore(4);
  vstore.set("q", s.queries);
  vstore.set("mapA", s.cams[0].feature_map);
  vstore.set("mapB", s.cams[1].feature_map);
  const Tensor rv = oracle::random_tensor({4, 8}, 77);
  const ScalarFn vfn = [&](ad::Tape& t, ParamStore& st) {
    const std::vector<ViewInput> views = {{s.cams[0].id, s.cams[0].geometry, t.param(st, "mapA")},
                                          {s.cams[1].id, s.cams[1].geometry, t.param(st, "mapB")}};
    return ad::sum(ad::mul(v2c_cross_attention(t.param(st, "q"), refs, views, acfg, st, "v2c"), t.constant(rv)));
  };
  GradcheckOptions opt;
  opt.step = 1e-5;
  opt.kink_aware = true;
  const GradcheckResult gv = gradcheck_detailed(vfn, vstore, opt);

  // One dense-fusion layer on the minimal configuration.
  const PipelineConfig mcfg = minimal_pipeline_config();
  const FrameInput mframe = minimal_frame(mcfg, 0);
  const std::size_t cells = mcfg.bev_side * mcfg.bev_side, d = mcfg.bev_dim;
  ParamStore dstore(9);
  dstore.set("q0", oracle::random_tensor({cells, d}, 1));
  for (const CameraView& c : mframe.cameras) dstore.set("map" + std::to_string(c.id), c.feature_map);
  ad::Tape t0;
  const BevState proto = init_bev(t0, mcfg.bev_side, d, mcfg.anchor_count, mcfg.grid, dstore);
  const Tensor prev = oracle::random_tensor({cells, d}, 2);
  const Tensor lidar = oracle::random_tensor({cells, d}, 3);
  const Tensor rd = oracle::random_tensor({cells, d}, 4);
  DenseLayerConfig dcfg = mcfg.dense;
  dcfg.num_layers = 1;
  const ScalarFn dfn = [&](ad::Tape& t, ParamStore& st) {
    BevState bev = proto;
    bev.queries = t.param(st, "q0");
    std::vector<ViewInput> views;
    for (const CameraView& c : mframe.cameras) {
      views.push_back({c.id, c.geometry, t.param(st, "map" + std::to_string(c.id))});
    }
    ad::Var out = dense_fusion_encoder(bev, t.constant(prev), t.constant(lidar), views, {}, dcfg, st);
    return ad::sum(ad::mul(out, t.constant(rd)));
  };
  const GradcheckResult gd = gradcheck_detailed(dfn, dstore, opt);

  // Full minimal pipeline, every coordinate.
  const GradcheckResult gp = pipeline_gradcheck(mcfg, mframe, opt, 0);

  const bool ok = prim < 1e-6 && gv.max_rel_error < 1e-3 && gd.max_rel_error < 1e-3 && gp.max_rel_error < 1e-3 &&
                  mcfg.bev_side == 8 && mcfg.bev_dim == 16 && mcfg.dense.num_layers == 1;
  return {ok, "primitives=" + fmt(prim) + " (" + prim_worst + ") v2c=" + fmt(gv.max_rel_error) + " dense_layer=" +
                  fmt(gd.max_rel_error) + " pipeline=" + fmt(gp.max_rel_error) + " coords=" +
                  std::to_string(gp.coordinates_checked)};
}

// --- residual ablation ------------------------------------------------------

ForwardResult run_with(const FrameInput& frame, const PipelineConfig& cfg, const std::vector<std::string>& zeroed) {
  ParamStore store(cfg.seed);
  ForwardResult r = sdf_forward(frame, cfg, store);
  if (zeroed.empty()) return r;
  for (const std::string& w : zeroed) store.at(w).value.fill(0.0);
  return sdf_forward(frame, cfg, store);
}

bool same(const ForwardResult& a, const ForwardResult& b) { return a.bev_feature == b.bev_feature && a.head == b.head; }

Outcome residual_ablation() {
  SceneSpec spec;
  spec.n_points = 8000;
  spec.seed = 3;
  const Scene scene = synth_scene(spec);
  const FrameInput& frame = scene.frames[0].input;
  PipelineConfig base = default_pipeline_config(scene.grid);
  base.seed = 5;
  std::map<std::string, PipelineConfig> v;
  for (const auto& [name, cfg] : component_variants(base)) v[name] = cfg;
  const std::string sparse_w = "v2c.0.output.weight", dense_w = "dense.output.weight";

  const ForwardResult lidar = run_with(frame, v["lidar-only"], {});
  const ForwardResult s = run_with(frame, v["S"], {});
  const ForwardResult d = run_with(frame, v["D"], {});
  std::vector<std::string> bad;
  // lidar-only: both modules disabled equals both zeroed in SD.
  if (!same(run_with(frame, v["SD"], {sparse_w, dense_w}), lidar)) bad.push_back("lidar-only");
  // S: disabling sparse fusion equals zeroing its output projection.
  if (!same(run_with(frame, v["S"], {sparse_w}), lidar)) bad.push_back("S");
  // D: disabling dense fusion equals zeroing its output projection.
  if (!same(run_with(frame, v["D"], {dense_w}), lidar)) bad.push_back("D");
  // SD: removing either module leaves the other variant.
  if (!same(run_with(frame, v["SD"], {dense_w}), s) || !same(run_with(frame, v["SD"], {sparse_w}), d)) {
    bad.push_back("SD");
  }
  // The variants really differ, so equality is not vacuous.
  const bool distinct = !same(lidar, s) && !same(lidar, d) && !same(s, d);
  std::string detail = "configs=lidar-only,S,D,SD";
  for (const std::string& b : bad) detail += " mismatch:" + b;
  if (!distinct) detail += " variants not distinct";
  return {bad.empty() && distinct, detail + " bit-exact"};
}

// --- robustness -------------------------------------------------------------

Outcome robustness() {
  const Scene scene = synth_scene(SceneSpec{});
  RobustnessOptions opts;
  opts.fov_lo = -std::numbers::pi / 2;
  opts.fov_hi = std::numbers::pi / 2;
  const ExperimentReport r = run_robustness(scene, default_pipeline_config(scene.grid), opts);
  const checks::RobustnessVerdict v = checks::check_robustness(r);
  double cam_min = 1e300, diff_max = 0.0;
  for (const ReportRow& row : r.rows) {
    if (row.condition != "limited") continue;
    if (row.variant.find('D') != std::string::npos) cam_min = std::min(cam_min, row.number("camera_norm_removed_hit"));
    if (row.has("retained_max_abs_diff")) diff_max = std::max(diff_max, row.number("retained_max_abs_diff"));
  }
  return {v.ok, (v.ok ? std::string() : v.failure + "; ") + "min_dense_camera_norm_removed=" + fmt(cam_min) +
                    " sparse_retained_max_diff=" + fmt(diff_max)};
}

// --- temporal alignment -----------------------------------------------------

Vec3 ego_to_world(const Vec3& p, const Pose2& pose) {
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  return {pose.x + c * p.x() - s * p.y(), pose.y + s * p.x() + c * p.y(), p.z()};
}

Vec3 world_to_ego(const Vec3& w, const Pose2& pose) {
  const double c = std::cos(pose.yaw), s = std::sin(pose.yaw);
  const double dx = w.x() - pose.x, dy = w.y() - pose.y;
  return {c * dx + s * dy, -s * dx + c * dy, w.z()};
}

Outcome temporal_alignment() {
  GridMeta bev = bev_grid(desk_grid(), 64);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  double worst = 0.0;
  std::size_t interior = 0;
  bool identity = true;
  for (int trial = 0; trial < 20; ++trial) {
    const LinearField f = make_linear_field(6, 100 + trial);
    const Pose2 prev{10 * U(rng), 10 * U(rng), std::numbers::pi * U(rng)};
    const Pose2 cur{prev.x + 3 * U(rng), prev.y + 3 * U(rng), prev.yaw + 0.3 * U(rng)};
    const Tensor history = linear_world_bev(bev, prev, f);
    const Tensor aligned = align_bev(history, relative_motion(prev, cur), bev);
    const Tensor current = linear_world_bev(bev, cur, f);
    // Interior: the cell centre, expressed in world and then in the previous
    // ego frame, lands between texel centres of the previous grid.
    for (int r = 0; r < bev.H; ++r)
      for (int c = 0; c < bev.W; ++c) {
        const Vec3 ego((c + 0.5 - bev.W / 2.0) * bev.sx, (r + 0.5 - bev.H / 2.0) * bev.sy, 0.0);
        const Vec3 w = ego_to_world(ego, cur);
        const Vec3 p = world_to_ego(w, prev);
        const double gu = p.x() / bev.sx + bev.W / 2.0, gv = p.y() / bev.sy + bev.H / 2.0;
        if (gu < 0.5 || gu > bev.W - 0.5 || gv < 0.5 || gv > bev.H - 0.5) continue;
        ++interior;
        for (std::size_t k = 0; k < f.channels(); ++k) {
          worst = std::max(worst, std::abs(aligned.at({k, std::size_t(r), std::size_t(c)}) -
                                           current.at({k, std::size_t(r), std::size_t(c)})));
        }
      }
    identity &= align_bev(history, EgoMotion{}, bev) == history;
  }
  // Zero motion through the pipeline's sequence runner.
  const PipelineConfig cfg = minimal_pipeline_config();
  FrameInput a = minimal_frame(cfg, 1);
  a.prev_bev.reset();
  FrameInput b = a;
  ParamStore store(2);
  const std::vector<ForwardResult> seq = run_sequence({a, b}, cfg, store);
  identity &= seq.size() == 2 && seq[1].temporal_input && *seq[1].temporal_input == seq[0].bev_feature;
  return {worst < 1e-9 && interior > 0 && identity,
          "motions=20 interior_cells=" + std::to_string(interior) + " max_err=" + fmt(worst) +
              (identity ? " zero-motion identity exact" : " zero-motion identity broken")};
}

// --- ray-coded ---------------------------------------------------------------

Outcome ray_coded() {
  const checks::RayCodedResult r = checks::ray_coded_check(31, 35000);
  return {r.max_error < 1e-6 && r.checked > 0,
          "checked=" + std::to_string(r.checked) + " border_skipped=" + std::to_string(r.skipped) +
              " unhit=" + std::to_string(r.unhit) + " max_err=" + fmt(r.max_error)};
}

// --- smoke-train -------------------------------------------------------------

Outcome smoke_train_criterion() {
  const Scene scene = synth_scene(SceneSpec{});
  const PipelineConfig cfg = smoke_train_config(scene.grid);
  ParamStore store(cfg.seed);
  const SmokeTrainResult r = smoke_train(scene.frames[0], cfg, 200, 0.05, store);
  const double reduction = 1.0 - r.final() / r.initial();
  return {cfg.enable_sparse && cfg.enable_dense && reduction >= 0.5,
          "steps=200 loss " + fmt(r.initial()) + " -> " + fmt(r.final()) + " reduction=" + fmt(100 * reduction) + "%"};
}

// --- determinism -------------------------------------------------------------

#ifdef SDF_CLI_PATH
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = "'" SDF_CLI_PATH "' " + args + " >> '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("sdf_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::vector<fs::path> dirs;
  for (const char* name : {"a", "b"}) {
    const fs::path d = root / name;
    fs::create_directories(d);
    const fs::path log = d / "log.txt";
    const std::string scene = (d / "scene.bin").string();
    int rc = run_cli("synth --out '" + scene + "'", log);
    if (!rc) rc = run_cli("run --scene '" + scene + "' --out '" + (d / "run").string() + "'", log);
    if (!rc) rc = run_cli("robustness --scene '" + scene + "' --out '" + (d / "robustness").string() + "'", log);
    if (!rc) rc = run_cli("count-blocks --scene '" + scene + "' --out '" + (d / "blocks").string() + "'", log);
    if (rc) return {false, "harness run failed with exit " + std::to_string(rc) + ": " + slurp(log)};
    dirs.push_back(d);
  }
  std::size_t compared = 0;
  std::vector<std::string> diffs;
  for (const auto& e : fs::recursive_directory_iterator(dirs[0])) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), dirs[0]);
    if (rel == "log.txt") continue;
    const std::string n = rel.string();
    if (n.find("manifest") == std::string::npos && n.find(".json") == std::string::npos &&
        n.find(".csv") == std::string::npos && n.find(".bin") == std::string::npos) {
      continue;
    }
    ++compared;
    if (!fs::exists(dirs[1] / rel) || slurp(e.path()) != slurp(dirs[1] / rel)) diffs.push_back(n);
  }
  fs::remove_all(root);
  std::string detail = "files_compared=" + std::to_string(compared);
  for (const std::string& d : diffs) detail += " differs:" + d;
  return {diffs.empty() && compared >= 8, detail};
}
#else
Outcome determinism() { return {false, "built without the command-line tool"}; }
#endif

}  // namespace

int main() {
  criterion("fusion-grid-count", 10, fusion_grid_count);
  criterion("geometry-round-trips", 1, geometry_round_trips);
  criterion("v2c-double-sum-oracle", 30, v2c_oracle);
  criterion("gradient-suite", 300, gradient_suite);
  criterion("residual-ablation", 0, residual_ablation);
  criterion("fov-robustness", 60, robustness);
  criterion("temporal-alignment", 0, temporal_alignment);
  criterion("ray-coded-v2c", 0, ray_coded);
  criterion("smoke-train", 300, smoke_train_criterion);
  criterion("determinism", 0, determinism);
  std::printf("summary: %d of 10 criteria failed\n", failures);
  return failures ? 1 : 0;
}
