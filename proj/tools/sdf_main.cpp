// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

// sdf: command-line front end for scene synthesis, pipeline runs and the
// robustness / efficiency / gradient / training experiments.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "sdf/dense_fusion.hpp"
#include "sdf/digest.hpp"
#include "sdf/errors.hpp"
#include "sdf/experiments.hpp"
#include "sdf/pipeline.hpp"
#include "sdf/scene.hpp"

namespace fs = std::filesystem;
using namespace sdf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitInvariant = 2;
constexpr int kExitFormat = 3;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string write_text(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
  return sha256_hex(text);
}

std::string file_digest(const fs::path& path) { return sha256_hex(read_text(path.string())); }

// SDF_SEED, when set, replaces the configured seed.
void apply_seed_override(PipelineConfig& cfg) {
  if (const char* s = std::getenv("SDF_SEED")) {
    try {
      cfg.seed = std::stoull(s);
    } catch (const std::exception&) {
      throw ConfigError(std::string("SDF_SEED is not an unsigned integer: '") + s + "'");
    }
  }
}

PipelineConfig load_config(const std::string& path, const PipelineConfig& fallback) {
  PipelineConfig cfg = fallback;
  if (!path.empty()) cfg = pipeline_config_from_json(read_text(path), fallback.grid);
  apply_seed_override(cfg);
  cfg.validate();
  return cfg;
}

void write_manifest(const fs::path& dir, const std::string& command, const std::string& config_text,
                    std::uint64_t seed, const std::map<std::string, std::string>& digests) {
  std::ofstream(dir / "manifest.json", std::ios::binary) << make_manifest(command, config_text, seed, digests);
}

int cmd_synth(const std::string& spec_path, const std::string& out) {
  SceneSpec spec;
  if (!spec_path.empty()) spec = scene_spec_from_json(read_text(spec_path));
  const Scene scene = synth_scene(spec);
  save_scene_file(out, scene);
  std::map<std::string, std::string> digests{{fs::path(out).filename().string(), file_digest(out)}};
  std::ofstream(out + ".manifest.json", std::ios::binary)
      << make_manifest("synth", scene_spec_to_json(spec), spec.seed, digests);
  std::cout << "scene: " << scene.frames.size() << " frame(s), "
            << (scene.frames.empty() ? 0 : scene.frames[0].input.points.size()) << " points in frame 0\n";
  return kExitOk;
}

int cmd_run(const std::string& scene_path, const std::string& config_path, const std::string& out) {
  const Scene scene = load_scene_file(scene_path);
  const PipelineConfig cfg = load_config(config_path, default_pipeline_config(scene.grid));
  fs::create_directories(out);
  const std::string config_text = pipeline_config_to_json(cfg);
  std::map<std::string, std::string> digests;
  digests["config.json"] = write_text(fs::path(out) / "config.json", config_text);

  std::vector<FrameInput> frames;
  for (const SceneFrame& f : scene.frames) frames.push_back(f.input);
  ParamStore store(cfg.seed);
  const std::vector<ForwardResult> results = run_sequence(frames, cfg, store);
  const GridMeta bev_meta = bev_grid(cfg.grid, cfg.bev_side);
  for (std::size_t t = 0; t < results.size(); ++t) {
    const std::string bev_name = "frame" + std::to_string(t) + "_bev.bin";
    const std::string head_name = "frame" + std::to_string(t) + "_head.bin";
    {
      std::ofstream o(fs::path(out) / bev_name, std::ios::binary);
      write_bev_dump(o, results[t].bev_feature, bev_meta);
    }
    {
      // [G x G x 5] -> [5 x G x G] so the head shares the BEV dump layout.
      const Tensor& h = results[t].head;
      const std::size_t g = cfg.bev_side;
      Tensor planes({kHeadChannels, g, g});
      for (std::size_t cell = 0; cell < g * g; ++cell)
        for (std::size_t k = 0; k < kHeadChannels; ++k) planes[k * g * g + cell] = h[cell * kHeadChannels + k];
      std::ofstream o(fs::path(out) / head_name, std::ios::binary);
      write_bev_dump(o, planes, bev_meta);
    }
    digests[bev_name] = file_digest(fs::path(out) / bev_name);
    digests[head_name] = file_digest(fs::path(out) / head_name);
    digests["frame" + std::to_string(t) + "_bev.tensor"] = tensor_digest(results[t].bev_feature);
  }
  write_manifest(out, "run", config_text, cfg.seed, digests);
  std::cout << "run: " << results.size() << " frame(s) written to " << out << "\n";
  return kExitOk;
}

std::pair<double, double> parse_fov(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw ConfigError("--fov expects LO,HI");
  try {
    return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ConfigError("--fov expects two numbers, got '" + text + "'");
  }
}

int cmd_robustness(const std::string& scene_path, const std::string& fov_text, const std::string& config_path,
                   const std::string& out) {
  const Scene scene = load_scene_file(scene_path);
  const PipelineConfig cfg = load_config(config_path, default_pipeline_config(scene.grid));
  RobustnessOptions opts;
  std::tie(opts.fov_lo, opts.fov_hi) = parse_fov(fov_text);
  const ExperimentReport report = run_robustness(scene, cfg, opts);
  fs::create_directories(out);
  const auto [json_path, csv_path] = write_report(report, out);
  write_manifest(out, "robustness", pipeline_config_to_json(cfg), cfg.seed,
                 {{"robustness.json", file_digest(json_path)}, {"robustness.csv", file_digest(csv_path)}});
  std::cout << report_to_csv(report);

  bool ok = true;
  for (const ReportRow& row : report.rows) {
    if (row.condition != "limited") continue;
    if (row.number("input_voxels_removed") != 0 || row.number("sparse_blocks_removed") != 0) {
      std::cerr << "invariant violated: " << row.variant << " has valid voxels in the removed region\n";
      ok = false;
    }
    if (row.has("retained_max_abs_diff") && row.number("retained_max_abs_diff") > 1e-6) {
      std::cerr << "invariant violated: " << row.variant << " retained-region output differs from full FOV\n";
      ok = false;
    }
    if (row.variant.find('D') != std::string::npos && row.number("removed_hit_cells") > 0 &&
        !(row.number("camera_norm_removed_hit") > 0)) {
      std::cerr << "invariant violated: " << row.variant << " lost the camera contribution outside the FOV\n";
      ok = false;
    }
  }
  return ok ? kExitOk : kExitInvariant;
}

int cmd_count_blocks(const std::string& scene_path, int bev_side, const std::string& config_path,
                     const std::string& out) {
  const Scene scene = load_scene_file(scene_path);
  const PipelineConfig cfg = load_config(config_path, default_pipeline_config(scene.grid));
  const ExperimentReport report = run_efficiency(scene, cfg.encoder, bev_side);
  std::cout << report_to_csv(report);
  if (!out.empty()) {
    fs::create_directories(out);
    const auto [json_path, csv_path] = write_report(report, out);
    write_manifest(out, "count-blocks", pipeline_config_to_json(cfg), cfg.seed,
                   {{"efficiency.json", file_digest(json_path)}, {"efficiency.csv", file_digest(csv_path)}});
  }
  for (const ReportRow& row : report.rows) {
    if (row.number("dense_blocks") != static_cast<double>(bev_side) * bev_side) return kExitInvariant;
  }
  return kExitOk;
}

int cmd_gradcheck(const std::string& config_path, double step, std::size_t max_coords) {
  const PipelineConfig cfg = load_config(config_path, minimal_pipeline_config());
  const FrameInput frame = minimal_frame(cfg, cfg.seed);
  GradcheckOptions opts;
  opts.step = step;
  opts.max_coords_per_entry = max_coords;
  opts.kink_aware = true;
  const GradcheckResult r = pipeline_gradcheck(cfg, frame, opts, cfg.seed);
  std::cout << "max_rel_error " << r.max_rel_error << " at " << r.worst_param << "[" << r.worst_index
            << "] analytic " << r.analytic << " numeric " << r.numeric << "\n"
            << "coordinates " << r.coordinates_checked << " kinks " << r.kinks << "\n";
  return r.max_rel_error < 1e-3 ? kExitOk : kExitInvariant;
}

int cmd_smoke_train(const std::string& scene_path, std::size_t steps, double lr, const std::string& config_path,
                    const std::string& out) {
  const Scene scene = load_scene_file(scene_path);
  if (scene.frames.empty()) throw ConfigError("smoke-train: scene has no frames");
  const PipelineConfig cfg = load_config(config_path, smoke_train_config(scene.grid));
  ParamStore store(cfg.seed);
  const SmokeTrainResult r = smoke_train(scene.frames[0], cfg, steps, lr, store);
  std::ostringstream csv;
  csv << "step,loss\n";
  char buf[64];
  for (std::size_t i = 0; i < r.losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, r.losses[i]);
    csv << buf;
  }
  if (!out.empty()) {
    fs::create_directories(out);
    const std::string d = write_text(fs::path(out) / "smoke_train.csv", csv.str());
    write_manifest(out, "smoke-train", pipeline_config_to_json(cfg), cfg.seed, {{"smoke_train.csv", d}});
  }
  std::cout << "loss " << r.initial() << " -> " << r.final() << " (" << 100.0 * (1.0 - r.final() / r.initial())
            << "% reduction over " << steps << " steps)\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse-dense camera-LiDAR fusion toolkit"};
  app.require_subcommand(1);

  std::string spec_path, out, scene_path, config_path, fov = "-1.5707963267948966,1.5707963267948966";
  int bev_side = 180;
  double step = 1e-5, lr = 0.05;
  std::size_t steps = 200, max_coords = 0;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene");
  synth->add_option("--spec", spec_path, "Scene spec JSON (defaults when omitted)");
  synth->add_option("--out", out, "Output scene file")->required();

  auto* run = app.add_subcommand("run", "Run the pipeline over every frame of a scene");
  run->add_option("--scene", scene_path)->required();
  run->add_option("--config", config_path, "Pipeline config JSON");
  run->add_option("--out", out, "Output directory")->required();

  auto* robust = app.add_subcommand("robustness", "Limited-FOV experiment");
  robust->add_option("--scene", scene_path)->required();
  robust->add_option("--fov", fov, "Kept azimuth interval LO,HI in radians");
  robust->add_option("--config", config_path);
  robust->add_option("--out", out, "Report directory")->default_val("robustness_out");

  auto* count = app.add_subcommand("count-blocks", "Sparse vs dense fusion block counts");
  count->add_option("--scene", scene_path)->required();
  count->add_option("--bev-side", bev_side)->default_val(180);
  count->add_option("--config", config_path);
  count->add_option("--out", out, "Report directory");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the minimal pipeline");
  grad->add_option("--config", config_path);
  grad->add_option("--step", step)->default_val(1e-5);
  grad->add_option("--max-coords", max_coords, "Coordinates per parameter (0 = all)");

  auto* smoke = app.add_subcommand("smoke-train", "SGD on the head-stub loss of one frame");
  smoke->add_option("--scene", scene_path)->required();
  smoke->add_option("--steps", steps)->default_val(200);
  smoke->add_option("--lr", lr)->default_val(0.05);
  smoke->add_option("--config", config_path);
  smoke->add_option("--out", out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(spec_path, out);
    if (*run) return cmd_run(scene_path, config_path, out);
    if (*robust) return cmd_robustness(scene_path, fov, config_path, out);
    if (*count) return cmd_count_blocks(scene_path, bev_side, config_path, out);
    if (*grad) return cmd_gradcheck(config_path, step, max_coords);
    if (*smoke) return cmd_smoke_train(scene_path, steps, lr, config_path, out);
  } catch (const InvariantViolation& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
