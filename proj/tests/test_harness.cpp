// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "checks.hpp"
#include "sdf/errors.hpp"
#include "sdf/experiments.hpp"
#include "sdf/scene.hpp"

namespace sdf {
namespace {

namespace fs = std::filesystem;

SceneSpec small_spec(std::uint64_t seed, std::size_t n = 6000) {
  SceneSpec s;
  s.seed = seed;
  s.n_points = n;
  return s;
}

PointCloud ring(std::size_t n, double radius) {
  PointCloud pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = -std::numbers::pi + (static_cast<double>(i) + 0.5) * 2.0 * std::numbers::pi / n;
    pts.push_back({Vec3(radius * std::cos(a), radius * std::sin(a), 0.0), 0.0});
  }
  return pts;
}

TEST(Scene, ZeroPointsGivesEmptyCloudWithValidCameras) {
  const Scene s = synth_scene(small_spec(1, 0));
  ASSERT_EQ(s.frames.size(), 1u);
  EXPECT_TRUE(s.frames[0].input.points.empty());
  ASSERT_EQ(s.frames[0].input.cameras.size(), 6u);
  for (const CameraView& c : s.frames[0].input.cameras) {
    EXPECT_NO_THROW(c.geometry.validate());
    EXPECT_EQ(c.feature_map.shape(), (Shape{8, 64, 112}));
  }
}

TEST(Scene, SameSeedSameScene) {
  EXPECT_TRUE(identical(synth_scene(small_spec(7)), synth_scene(small_spec(7))));
  EXPECT_FALSE(identical(synth_scene(small_spec(7)), synth_scene(small_spec(8))));
}

TEST(Scene, DefaultPointCountNearTarget) {
  const Scene s = synth_scene(SceneSpec{});
  const double n = static_cast<double>(s.frames[0].input.points.size());
  EXPECT_NEAR(n, 35000.0, 350.0);
}

TEST(Scene, PointsInsideGrid) {
  const Scene s = synth_scene(small_spec(3));
  for (const LidarPoint& p : s.frames[0].input.points) {
    EXPECT_TRUE(world_to_voxel(p.position, s.grid).has_value());
  }
}

TEST(Scene, RigCamerasSpreadByYaw) {
  const auto cams = make_rig(CameraRig{});
  ASSERT_EQ(cams.size(), 6u);
  // A point far along each camera's yaw projects to its principal point.
  for (int k = 0; k < 6; ++k) {
    const double a = k * CameraRig{}.yaw_spacing;
    const auto p = project_to_image(Vec3(20 * std::cos(a), 20 * std::sin(a), 0.0), cams[k]);
    ASSERT_TRUE(p.has_value()) << k;
    EXPECT_NEAR(p->u, cams[k].cx, 1e-9);
    EXPECT_NEAR(p->v, cams[k].cy, 1e-9);
  }
}

TEST(Scene, RayCodedMaps) {
  SceneSpec spec = small_spec(2, 0);
  spec.field = FeatureField::kRayCoded;
  const Scene s = synth_scene(spec);
  const CameraView& c = s.frames[0].input.cameras[4];
  EXPECT_DOUBLE_EQ(c.feature_map.at({0, 3, 10}), 10.5 / 112.0);
  EXPECT_DOUBLE_EQ(c.feature_map.at({1, 3, 10}), 3.5 / 64.0);
  EXPECT_DOUBLE_EQ(c.feature_map.at({2, 3, 10}), c.id / 6.0);
}

TEST(Scene, SpecJsonRoundTrip) {
  SceneSpec s = small_spec(5);
  s.trajectory = {Pose2{}, Pose2{1.0, 0.5, 0.1}};
  s.field = FeatureField::kLinearWorld;
  const SceneSpec r = scene_spec_from_json(scene_spec_to_json(s));
  EXPECT_EQ(scene_spec_to_json(r), scene_spec_to_json(s));
  EXPECT_EQ(r.trajectory.size(), 2u);
}

TEST(Scene, InvalidSpecRejected) {
  SceneSpec s = small_spec(1);
  s.trajectory.clear();
  EXPECT_THROW(synth_scene(s), ConfigError);
}

TEST(Fov, FullCircleKeepsAll) {
  const PointCloud pts = ring(1000, 10.0);
  EXPECT_EQ(limit_fov(pts, -std::numbers::pi, std::numbers::pi).size(), pts.size());
}

TEST(Fov, HalfCircleKeepsHalf) {
  const PointCloud pts = ring(10000, 10.0);
  const double kept = static_cast<double>(limit_fov(pts, -std::numbers::pi / 2, std::numbers::pi / 2).size());
  EXPECT_NEAR(kept / 10000.0, 0.5, 0.02);
}

TEST(Fov, BoundaryInclusive) {
  PointCloud pts{{Vec3(std::cos(0.3), std::sin(0.3), 0.0), 0.0}};
  EXPECT_EQ(limit_fov(pts, std::atan2(pts[0].position.y(), pts[0].position.x()), 1.0).size(), 1u);
  EXPECT_EQ(limit_fov(pts, -1.0, std::atan2(pts[0].position.y(), pts[0].position.x())).size(), 1u);
}

TEST(Fov, Idempotent) {
  const Scene s = synth_scene(small_spec(4));
  const PointCloud once = limit_fov(s.frames[0].input.points, -1.0, 0.5);
  const PointCloud twice = limit_fov(once, -1.0, 0.5);
  ASSERT_EQ(once.size(), twice.size());
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(once[i].position, twice[i].position);
}

TEST(Fov, EmptyIntervalRejected) {
  EXPECT_THROW(limit_fov({}, 1.0, 1.0), ConfigError);
  EXPECT_THROW(limit_fov({}, 1.0, 0.5), ConfigError);
}

TEST(Fov, InFovMatchesLimit) {
  EXPECT_TRUE(in_fov(1.0, 0.0, -0.1, 0.1));
  EXPECT_FALSE(in_fov(-1.0, 0.0, -0.1, 0.1));
}

class Robustness : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const Scene scene = synth_scene(small_spec(11, 9000));
    report_ = new ExperimentReport(run_robustness(scene, default_pipeline_config(scene.grid)));
  }
  static void TearDownTestSuite() {
    delete report_;
    report_ = nullptr;
  }
  static ExperimentReport* report_;
};
ExperimentReport* Robustness::report_ = nullptr;

TEST_F(Robustness, EightRows) {
  ASSERT_EQ(report_->rows.size(), 8u);
  std::size_t limited = 0;
  for (const ReportRow& r : report_->rows) limited += r.condition == "limited";
  EXPECT_EQ(limited, 4u);
}

TEST_F(Robustness, InvariantsHold) {
  const checks::RobustnessVerdict v = checks::check_robustness(*report_);
  EXPECT_TRUE(v.ok) << v.failure;
}

TEST_F(Robustness, LimitedRemovesPoints) {
  for (const ReportRow& r : report_->rows) {
    if (r.condition == "limited") {
      EXPECT_EQ(r.number("points_outside_fov"), 0.0);
      EXPECT_GT(r.number("removed_point_fraction"), 0.3);
    } else {
      EXPECT_GT(r.number("points_outside_fov"), 0.0);
      EXPECT_EQ(r.number("removed_point_fraction"), 0.0);
    }
  }
}

TEST_F(Robustness, SparseOnlyHasNoCameraContributionWhenBlind) {
  for (const ReportRow& r : report_->rows) {
    if (r.variant == "lidar-only") {
      EXPECT_EQ(r.number("camera_norm_removed"), 0.0);
      EXPECT_EQ(r.number("camera_norm_retained"), 0.0);
    }
  }
}

TEST_F(Robustness, CsvShape) {
  const std::string csv = report_to_csv(*report_);
  std::istringstream in(csv);
  std::string line;
  std::size_t lines = 0;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("variant,condition,", 0), 0u);
  while (std::getline(in, line)) lines += !line.empty();
  EXPECT_EQ(lines, 8u);
}

TEST(RobustnessCheck, DetectsViolations) {
  ExperimentReport r;
  for (const char* v : {"lidar-only", "S", "D", "SD"}) {
    ReportRow row;
    row.variant = v;
    row.condition = "limited";
    row.set("input_voxels_removed", std::int64_t{0});
    row.set("sparse_blocks_removed", std::int64_t{0});
    row.set("removed_hit_cells", std::int64_t{10});
    row.set("camera_norm_removed_hit", 1.0);
    row.set("retained_exact_cells", std::int64_t{5});
    row.set("retained_max_abs_diff", 0.0);
    r.rows.push_back(row);
  }
  EXPECT_TRUE(checks::check_robustness(r).ok);
  r.rows[0].set("retained_max_abs_diff", 1e-3);
  EXPECT_FALSE(checks::check_robustness(r).ok);
  r.rows[0].set("retained_max_abs_diff", 0.0);
  r.rows[2].set("camera_norm_removed_hit", 0.0);
  EXPECT_FALSE(checks::check_robustness(r).ok);
  r.rows[2].set("camera_norm_removed_hit", 1.0);
  r.rows[3].set("input_voxels_removed", std::int64_t{1});
  EXPECT_FALSE(checks::check_robustness(r).ok);
}

TEST(Report, JsonAndCsvContents) {
  ExperimentReport r;
  r.name = "demo";
  r.seed = 3;
  ReportRow a;
  a.variant = "S";
  a.condition = "full";
  a.set("n", std::int64_t{4});
  a.set("x", 0.25);
  ReportRow b;
  b.variant = "D";
  b.condition = "full";
  b.set("x", 1.5);
  b.set("tag", std::string("ok"));
  r.rows = {a, b};
  EXPECT_EQ(report_to_csv(r), "variant,condition,n,x,tag\nS,full,4,0.25,\nD,full,,1.5,ok\n");
  EXPECT_NE(report_to_json(r).find("\"demo\""), std::string::npos);
  EXPECT_THROW(b.number("tag"), RangeError);
  EXPECT_THROW(b.number("missing"), RangeError);
}

TEST(Efficiency, FullScaleCounts) {
  const Scene scene = synth_scene(SceneSpec{});
  PipelineConfig cfg = default_pipeline_config(scene.grid);
  const ExperimentReport r = run_efficiency(scene, cfg.encoder, 180);
  ASSERT_EQ(r.rows.size(), 5u);
  const ReportRow* c4 = nullptr;
  for (const ReportRow& row : r.rows) {
    if (row.variant == "C4") c4 = &row;
  }
  ASSERT_NE(c4, nullptr);
  EXPECT_EQ(c4->number("dense_blocks"), 32400.0);
  EXPECT_EQ(c4->number("stage_W"), 180.0);
  EXPECT_LT(c4->number("sparse_blocks"), 32400.0);
  EXPECT_EQ(c4->number("sparse_below_dense"), 1.0);
}

TEST(Efficiency, EmptySceneHasNoSparseBlocks) {
  const Scene scene = synth_scene(small_spec(1, 0));
  const ExperimentReport r = run_efficiency(scene, default_pipeline_config(scene.grid).encoder, 180);
  for (const ReportRow& row : r.rows) EXPECT_EQ(row.number("sparse_blocks"), 0.0);
}

TEST(Serialization, SceneRoundTripBitIdentical) {
  SceneSpec spec = small_spec(9);
  spec.trajectory = {Pose2{}, Pose2{0.5, 0.0, 0.05}};
  spec.with_images = true;
  const Scene s = synth_scene(spec);
  std::stringstream a;
  save_scene(a, s);
  const std::string bytes = a.str();
  std::stringstream in(bytes);
  const Scene r = load_scene(in);
  EXPECT_TRUE(identical(s, r));
  std::stringstream b;
  save_scene(b, r);
  EXPECT_EQ(b.str(), bytes);
}

TEST(Serialization, TruncationNamesSection) {
  const Scene s = synth_scene(small_spec(9, 500));
  std::stringstream a;
  save_scene(a, s);
  const std::string bytes = a.str();
  // Header: magic, version, metadata length, metadata; then frame 0 points.
  std::uint32_t meta_len = 0;
  for (int i = 0; i < 4; ++i) meta_len |= std::uint32_t(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  const std::size_t points_start = 12 + meta_len;
  bool saw_points = false;
  for (std::size_t cut : {std::size_t{6}, points_start - 1, points_start + 100, bytes.size() / 2, bytes.size() - 3}) {
    std::stringstream in(bytes.substr(0, cut));
    try {
      load_scene(in);
      ADD_FAILURE() << "no error at cut " << cut;
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      EXPECT_NE(msg.find("truncated"), std::string::npos) << msg;
      saw_points |= msg.find("frame0.points") != std::string::npos;
    }
  }
  EXPECT_TRUE(saw_points);
}

TEST(Serialization, BadMagic) {
  std::stringstream in(std::string("NOPE\x01\x00\x00\x00", 8));
  EXPECT_THROW(load_scene(in), FormatError);
}

TEST(RayCoded, UpdatesEncodeViewCoordinates) {
  const checks::RayCodedResult r = checks::ray_coded_check(21, 4000);
  EXPECT_GT(r.checked, 100u);
  EXPECT_LT(r.max_error, 1e-6);
}

// --- command line ----------------------------------------------------------

#ifdef SDF_CLI_PATH

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("sdf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int sdf(const std::string& args, const std::string& env = "") const {
    const std::string cmd = env + " '" SDF_CLI_PATH "' " + args + " > '" + (dir_ / "log.txt").string() + "' 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
  }
  void write(const std::string& name, const std::string& text) const {
    std::ofstream(path(name), std::ios::binary) << text;
  }
  void small_scene(const std::string& name) const {
    write(name + ".spec.json", scene_spec_to_json(small_spec(5, 3000)));
    ASSERT_EQ(sdf("synth --spec " + path(name + ".spec.json") + " --out " + path(name)), 0);
  }

  fs::path dir_;
};

TEST_F(Cli, SynthAndRun) {
  small_scene("scene.bin");
  EXPECT_TRUE(fs::exists(path("scene.bin.manifest.json")));
  ASSERT_EQ(sdf("run --scene " + path("scene.bin") + " --out " + path("run")), 0);
  EXPECT_TRUE(fs::exists(path("run/manifest.json")));
  EXPECT_TRUE(fs::exists(path("run/frame0_bev.bin")));
  EXPECT_TRUE(fs::exists(path("run/frame0_head.bin")));
}

TEST_F(Cli, RunTwiceIdenticalManifest) {
  small_scene("scene.bin");
  ASSERT_EQ(sdf("run --scene " + path("scene.bin") + " --out " + path("a")), 0);
  ASSERT_EQ(sdf("run --scene " + path("scene.bin") + " --out " + path("b")), 0);
  EXPECT_EQ(slurp(path("a/manifest.json")), slurp(path("b/manifest.json")));
}

TEST_F(Cli, SeedOverrideChangesOutput) {
  small_scene("scene.bin");
  ASSERT_EQ(sdf("run --scene " + path("scene.bin") + " --out " + path("a"), "SDF_SEED=1"), 0);
  ASSERT_EQ(sdf("run --scene " + path("scene.bin") + " --out " + path("b"), "SDF_SEED=2"), 0);
  EXPECT_NE(slurp(path("a/frame0_bev.bin")), slurp(path("b/frame0_bev.bin")));
  EXPECT_NE(slurp(path("a/manifest.json")).find("\"seed\": 1"), std::string::npos);
  EXPECT_EQ(sdf("run --scene " + path("scene.bin") + " --out " + path("c"), "SDF_SEED=abc"), 1);
}

TEST_F(Cli, CorruptSceneIsFormatError) {
  write("bad.bin", "NOPE garbage");
  EXPECT_EQ(sdf("run --scene " + path("bad.bin") + " --out " + path("run")), 3);
  small_scene("scene.bin");
  const std::string bytes = slurp(path("scene.bin"));
  write("short.bin", bytes.substr(0, bytes.size() / 2));
  EXPECT_EQ(sdf("count-blocks --scene " + path("short.bin")), 3);
  EXPECT_NE(slurp(path("log.txt")).find("truncated"), std::string::npos);
}

TEST_F(Cli, BadConfigIsError) {
  small_scene("scene.bin");
  write("cfg.json", "{\"bev_side\": 0}");
  EXPECT_EQ(sdf("run --scene " + path("scene.bin") + " --config " + path("cfg.json") + " --out " + path("r")), 1);
  EXPECT_EQ(sdf("robustness --scene " + path("scene.bin") + " --fov 1,0 --out " + path("r")), 1);
}

TEST_F(Cli, RobustnessAndCountBlocks) {
  small_scene("scene.bin");
  ASSERT_EQ(sdf("robustness --scene " + path("scene.bin") + " --out " + path("rob")), 0) << slurp(path("log.txt"));
  EXPECT_TRUE(fs::exists(path("rob/robustness.json")));
  EXPECT_TRUE(fs::exists(path("rob/robustness.csv")));
  EXPECT_TRUE(fs::exists(path("rob/manifest.json")));
  ASSERT_EQ(sdf("count-blocks --scene " + path("scene.bin") + " --out " + path("eff")), 0);
  EXPECT_TRUE(fs::exists(path("eff/efficiency.csv")));
}

TEST_F(Cli, SmokeTrainWritesLosses) {
  small_scene("scene.bin");
  ASSERT_EQ(sdf("smoke-train --scene " + path("scene.bin") + " --steps 3 --out " + path("st")), 0)
      << slurp(path("log.txt"));
  const std::string csv = slurp(path("st/smoke_train.csv"));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);  // header + 4 losses
}

TEST_F(Cli, GradcheckSubsampled) {
  EXPECT_EQ(sdf("gradcheck --max-coords 4"), 0) << slurp(path("log.txt"));
}

#endif

}  // namespace
}  // namespace sdf
