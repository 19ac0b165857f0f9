// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "sdf/experiments.hpp"
#include "sdf/pipeline.hpp"
#include "sdf/scene.hpp"

namespace {

using namespace sdf;

// Arg: 0 lidar-only, 1 S, 2 D, 3 SD.
void BM_Forward(benchmark::State& state) {
  const Scene scene = synth_scene(SceneSpec{});
  const auto variants = component_variants(default_pipeline_config(scene.grid));
  const auto& [name, cfg] = variants.at(static_cast<std::size_t>(state.range(0)));
  state.SetLabel(name);
  ParamStore store(cfg.seed);
  for (auto _ : state) benchmark::DoNotOptimize(sdf_forward(scene.frames[0].input, cfg, store).bev_feature.numel());
}
BENCHMARK(BM_Forward)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const Scene scene = synth_scene(SceneSpec{});
  const PipelineConfig cfg = smoke_train_config(scene.grid);
  ParamStore store(cfg.seed);
  for (auto _ : state) benchmark::DoNotOptimize(smoke_train(scene.frames[0], cfg, 1, 0.05, store).final());
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
