// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "sdf/attention.hpp"
#include "sdf/scene.hpp"
#include "sdf/voxel.hpp"

namespace {

using namespace sdf;

Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

void BM_BilinearSample(benchmark::State& state) {
  const Tensor map = random_tensor({8, 64, 112}, 1);
  double u = 3.25, v = 7.5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(bilinear_sample(map, u, v));
    u = u > 100.0 ? 3.25 : u + 0.37;
    v = v > 60.0 ? 7.5 : v + 0.21;
  }
}
BENCHMARK(BM_BilinearSample);

void BM_DeformAttnBatched(benchmark::State& state) {
  const std::size_t m = static_cast<std::size_t>(state.range(0));
  DeformAttnConfig cfg;
  cfg.num_heads = 2;
  cfg.num_points = 4;
  cfg.embed_dim = 32;
  const Tensor map = random_tensor({8, 64, 112}, 2);
  const Tensor q = random_tensor({m, 32}, 3);
  std::vector<std::array<double, 2>> uv(m);
  for (std::size_t i = 0; i < m; ++i) uv[i] = {5.0 + (i % 100), 3.0 + (i % 55)};
  ParamStore store(4);
  for (auto _ : state) {
    ad::Tape tape;
    ad::Var out = deform_attn(tape.constant(q), uv, tape.constant(map), cfg, store, "bench");
    benchmark::DoNotOptimize(out.value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m));
}
BENCHMARK(BM_DeformAttnBatched)->Arg(64)->Arg(1024);

void BM_Voxelize(benchmark::State& state) {
  SceneSpec spec;
  spec.n_points = static_cast<std::size_t>(state.range(0));
  const Scene scene = synth_scene(spec);
  const PointCloud& pts = scene.frames[0].input.points;
  for (auto _ : state) benchmark::DoNotOptimize(voxelize(pts, scene.grid).size());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(pts.size()));
}
BENCHMARK(BM_Voxelize)->Arg(35000);

void BM_StageLayoutsFullScale(benchmark::State& state) {
  const Scene scene = synth_scene(SceneSpec{});
  const SparseVoxelGrid grid = voxelize(scene.frames[0].input.points, full_scale_grid());
  const EncoderConfig enc;
  for (auto _ : state) benchmark::DoNotOptimize(stage_layouts(grid.layout, enc).size());
}
BENCHMARK(BM_StageLayoutsFullScale);

}  // namespace
