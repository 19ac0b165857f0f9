// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdf/dense_fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "binary_io.hpp"
#include "json_io.hpp"
#include "sdf/errors.hpp"
#include "sdf/layers.hpp"

namespace sdf {

ad::Var bev_to_cells(ad::Var bev) {
  if (bev.value().rank() != 3 || bev.dim(1) != bev.dim(2)) {
    throw DimensionError("bev_to_cells: expected [D x G x G], got " + shape_to_string(bev.shape()));
  }
  const std::size_t d = bev.dim(0), g = bev.dim(1);
  return ad::transpose(ad::reshape(bev, {d, g * g}));
}

ad::Var cells_to_bev(ad::Var cells, std::size_t grid_side) {
  if (cells.value().rank() != 2 || cells.dim(0) != grid_side * grid_side) {
    throw DimensionError("cells_to_bev: expected [G*G x D] with G = " + std::to_string(grid_side) +
                         ", got " + shape_to_string(cells.shape()));
  }
  const std::size_t d = cells.dim(1);
  return ad::reshape(ad::transpose(cells), {d, grid_side, grid_side});
}

Tensor cells_to_bev(const Tensor& cells, std::size_t grid_side) {
  ad::Tape tape;
  return cells_to_bev(tape.constant(cells), grid_side).value();
}

GridMeta bev_grid(const GridMeta& voxel_meta, std::size_t grid_side) {
  if (grid_side == 0) throw ConfigError("bev grid side must be >= 1");
  GridMeta m;
  m.W = static_cast<int>(grid_side);
  m.H = static_cast<int>(grid_side);
  m.Z = 1;
  m.sx = voxel_meta.W * voxel_meta.sx / static_cast<double>(grid_side);
  m.sy = voxel_meta.H * voxel_meta.sy / static_cast<double>(grid_side);
  m.sz = voxel_meta.Z * voxel_meta.sz;
  m.z_base = voxel_meta.z_base;
  return m;
}

std::vector<double> anchor_heights(std::size_t count, double z_min, double z_max) {
  if (count == 0) throw ConfigError("anchor heights: count must be >= 1");
  if (!(z_max > z_min)) throw ConfigError("anchor heights: empty z range");
  std::vector<double> h(count);
  const double slice = (z_max - z_min) / static_cast<double>(count);
  for (std::size_t i = 0; i < count; ++i) h[i] = z_min + (static_cast<double>(i) + 0.5) * slice;
  return h;
}

void BevState::validate() const {
  if (grid_side == 0 || embed_dim == 0) throw ConfigError("bev: dimensions must be positive");
  if (!queries.valid() || queries.dim(0) != grid_side * grid_side ||
      queries.dim(1) != embed_dim) {
    throw DimensionError("bev: queries must be [G*G x D]");
  }
  if (!std::is_sorted(anchor_heights.begin(), anchor_heights.end())) {
    throw ConfigError("bev: anchor heights must be ascending");
  }
}

void DenseLayerConfig::validate() const {
  attn.validate();
  if (ffn_hidden == 0) throw ConfigError("dense: ffn_hidden must be positive");
}

BevState init_bev(ad::Tape& tape, std::size_t grid_side, std::size_t embed_dim,
                  std::size_t heights_n, const GridMeta& voxel_meta, ParamStore& store) {
  if (grid_side == 0 || embed_dim == 0) throw ConfigError("init_bev: dimensions must be positive");
  BevState bev;
  bev.grid_side = grid_side;
  bev.embed_dim = embed_dim;
  store.get_or_init("dense.bev_queries", {grid_side * grid_side, embed_dim}, embed_dim);
  bev.queries = tape.param(store, "dense.bev_queries");
  bev.anchor_heights = anchor_heights(heights_n, voxel_meta.z_min(), voxel_meta.z_max());
  bev.bev_meta = bev_grid(voxel_meta, grid_side);
  return bev;
}

ad::Var lidar_bev_from_voxels(const VoxelFeatures& voxels, const GridMeta& bev_meta,
                              std::size_t embed_dim, ParamStore& store) {
  const GridMeta& vm = voxels.layout.meta();
  const double tol = 1e-9 * std::max(1.0, vm.W * vm.sx);
  if (std::abs(vm.W * vm.sx - bev_meta.W * bev_meta.sx) > tol ||
      std::abs(vm.H * vm.sy - bev_meta.H * bev_meta.sy) > tol) {
    throw ConfigError("lidar_bev_from_voxels: voxel and BEV footprints differ");
  }
  const std::size_t g = static_cast<std::size_t>(bev_meta.W);
  std::map<std::size_t, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < voxels.layout.size(); ++i) {
    const Vec3 c = voxel_center(voxels.layout.indices()[i], vm);
    const auto cell = world_to_voxel(Vec3(c.x(), c.y(), bev_meta.z_base - 0.5 * bev_meta.sz),
                                     bev_meta);
    if (!cell) throw InvariantViolation("lidar_bev_from_voxels: voxel centre outside BEV");
    cells[static_cast<std::size_t>(cell->y) * g + static_cast<std::size_t>(cell->x)].push_back(i);
  }
  ad::RowPlan pool;
  ad::RowPlan place;
  std::size_t row = 0;
  auto it = cells.begin();
  for (auto& [cell, members] : cells) {
    const double w = 1.0 / static_cast<double>(members.size());
    for (std::size_t i : members) pool.add(i, w);
    pool.end_row();
  }
  for (std::size_t cell = 0; cell < g * g; ++cell) {
    if (it != cells.end() && it->first == cell) {
      place.add(row++, 1.0);
      ++it;
    }
    place.end_row();
  }
  ad::Var pooled = ad::row_combine(voxels.features, pool);
  ad::Var projected = linear(store, "dense.lidar_proj", pooled, embed_dim);
  return ad::row_combine(projected, place);
}

Tensor lidar_bev_from_voxels(const SparseVoxelGrid& grid, std::size_t grid_side,
                             std::size_t embed_dim, ParamStore& store) {
  ad::Tape tape;
  VoxelFeatures v{grid.layout, tape.constant(grid.features)};
  const GridMeta bm = bev_grid(grid.layout.meta(), grid_side);
  return cells_to_bev(lidar_bev_from_voxels(v, bm, embed_dim, store), grid_side).value();
}

namespace {

std::vector<std::array<double, 2>> own_cell_refs(std::size_t g) {
  std::vector<std::array<double, 2>> refs(g * g);
  for (std::size_t r = 0; r < g; ++r)
    for (std::size_t c = 0; c < g; ++c) refs[r * g + c] = {c + 0.5, r + 0.5};
  return refs;
}

BevState with_queries(const BevState& bev, ad::Var q) {
  BevState out = bev;
  out.queries = q;
  return out;
}

void require_cells(const BevState& bev, ad::Var cells, const char* what) {
  if (cells.shape() != Shape{bev.grid_side * bev.grid_side, bev.embed_dim}) {
    throw DimensionError(std::string(what) + ": " + shape_to_string(cells.shape()) +
                         " does not match the BEV [G*G x D]");
  }
}

}  // namespace

BevState temporal_cross_attention(const BevState& bev, std::optional<ad::Var> prev_aligned,
                                  const DeformAttnConfig& cfg, ParamStore& store,
                                  const std::string& prefix) {
  const ad::Var x = bev.queries;
  ad::Var history = prev_aligned.value_or(x);
  require_cells(bev, history, "temporal_cross_attention");
  const auto refs = own_cell_refs(bev.grid_side);
  ad::Var q = layer_norm(store, prefix + ".norm", x);
  ad::Var update =
      deform_attn(q, refs, cells_to_bev(history, bev.grid_side), cfg, store, prefix + ".attn");
  return with_queries(bev, ad::add(x, update));
}

BevState lidar_cross_attention(const BevState& bev, ad::Var lidar_cells,
                               const DeformAttnConfig& cfg, ParamStore& store,
                               const std::string& prefix) {
  require_cells(bev, lidar_cells, "lidar_cross_attention");
  const ad::Var x = bev.queries;
  const auto refs = own_cell_refs(bev.grid_side);
  ad::Var q = layer_norm(store, prefix + ".norm", x);
  ad::Var update =
      deform_attn(q, refs, cells_to_bev(lidar_cells, bev.grid_side), cfg, store, prefix + ".attn");
  return with_queries(bev, ad::add(x, update));
}

std::vector<std::vector<Vec3>> bev_anchor_points(const BevState& bev) {
  const std::size_t g = bev.grid_side;
  std::vector<std::vector<Vec3>> pts(g * g);
  for (std::size_t r = 0; r < g; ++r)
    for (std::size_t c = 0; c < g; ++c) {
      const double x = (c + 0.5 - 0.5 * bev.bev_meta.W) * bev.bev_meta.sx;
      const double y = (r + 0.5 - 0.5 * bev.bev_meta.H) * bev.bev_meta.sy;
      auto& cell = pts[r * g + c];
      cell.reserve(bev.anchor_heights.size());
      for (double h : bev.anchor_heights) cell.emplace_back(x, y, h);
    }
  return pts;
}

BevState b2c_cross_attention(const BevState& bev, std::span<const ViewInput> views,
                             const AugRecord& aug, const DeformAttnConfig& cfg,
                             ParamStore& store, const std::string& prefix) {
  if (bev.anchor_heights.empty()) throw ConfigError("b2c: anchor heights must be non-empty");
  std::vector<CameraGeometry> cams;
  cams.reserve(views.size());
  for (const ViewInput& v : views) cams.push_back(v.geometry);
  const auto points = bev_anchor_points(bev);
  const RefPointSet refs = build_ref_points(points, cams, aug);
  const ad::Var x = bev.queries;
  ad::Var q = layer_norm(store, prefix + ".norm", x);
  ad::Var update = v2c_update(q, refs, views, cfg, store, prefix + ".attn");
  return with_queries(bev, ad::add(x, update));
}

BevState feed_forward(const BevState& bev, std::size_t hidden, ParamStore& store,
                      const std::string& prefix) {
  const ad::Var x = bev.queries;
  ad::Var h = ad::relu(linear(store, prefix + ".fc1", layer_norm(store, prefix + ".norm", x), hidden));
  ad::Var y = linear(store, prefix + ".output", h, bev.embed_dim, /*with_bias=*/false);
  return with_queries(bev, ad::add(x, y));
}

ad::Var dense_fusion_encoder(const BevState& bev, std::optional<ad::Var> prev_aligned,
                             ad::Var lidar_cells, std::span<const ViewInput> views,
                             const AugRecord& aug, const DenseLayerConfig& cfg,
                             ParamStore& store) {
  cfg.validate();
  bev.validate();
  if (cfg.attn.embed_dim != bev.embed_dim) {
    throw ConfigError("dense: attention embed_dim differs from the BEV embed_dim");
  }
  BevState cur = bev;
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    const std::string base = "dense.layer" + std::to_string(l);
    if (cfg.temporal) cur = temporal_cross_attention(cur, prev_aligned, cfg.attn, store, base + ".temporal");
    if (cfg.lidar) cur = lidar_cross_attention(cur, lidar_cells, cfg.attn, store, base + ".lidar");
    cur = b2c_cross_attention(cur, views, aug, cfg.attn, store, base + ".b2c");
    cur = feed_forward(cur, cfg.ffn_hidden, store, base + ".ffn");
  }
  return cur.queries;
}

ad::Var dynamic_fusion_baseline(ad::Var lidar_cells, ad::Var cam_cells, ParamStore& store) {
  if (lidar_cells.shape() != cam_cells.shape() || lidar_cells.value().rank() != 2) {
    throw DimensionError("dynamic_fusion_baseline: " + shape_to_string(lidar_cells.shape()) +
                         " vs " + shape_to_string(cam_cells.shape()));
  }
  const std::size_t d = lidar_cells.dim(1);
  ad::Var fused = linear(store, "dynfuse.fuse", ad::concat_cols(lidar_cells, cam_cells), d);
  ad::Var gate = ad::sigmoid(linear(store, "dynfuse.gate", ad::mean_rows(fused), d));
  return ad::mul_row(fused, gate);
}

Tensor dynamic_fusion_baseline(const Tensor& lidar_bev, const Tensor& cam_bev, ParamStore& store) {
  ad::Tape tape;
  ad::Var l = bev_to_cells(tape.constant(lidar_bev));
  ad::Var c = bev_to_cells(tape.constant(cam_bev));
  return cells_to_bev(dynamic_fusion_baseline(l, c, store), lidar_bev.dim(1)).value();
}

void write_bev_dump(std::ostream& out, const Tensor& bev, const GridMeta& bev_meta) {
  if (bev.rank() != 3 || bev.dim(1) != static_cast<std::size_t>(bev_meta.H) ||
      bev.dim(2) != static_cast<std::size_t>(bev_meta.W)) {
    throw DimensionError("write_bev_dump: BEV " + shape_to_string(bev.shape()) +
                         " does not match its grid");
  }
  const std::size_t d = bev.dim(0), h = bev.dim(1), w = bev.dim(2);
  Json header{{"format", "sdf-bev-dump"}, {"version", 1}, {"meta", to_json(bev_meta)},
              {"channels", d}, {"records", h * w}, {"index_rank", 2}};
  out << header.dump() << '\n';
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      io::write_i32(out, static_cast<std::int32_t>(c));
      io::write_i32(out, static_cast<std::int32_t>(r));
      for (std::size_t k = 0; k < d; ++k) io::write_f64(out, bev[k * h * w + r * w + c]);
    }
}

Tensor read_bev_dump(std::istream& in, GridMeta* bev_meta) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("bev dump: missing header");
  Json header;
  try {
    header = Json::parse(line);
  } catch (const Json::exception& e) {
    throw FormatError(std::string("bev dump: bad header: ") + e.what());
  }
  if (header.value("format", "") != "sdf-bev-dump" || header.value("index_rank", 0) != 2) {
    throw FormatError("bev dump: not a BEV dump");
  }
  const GridMeta meta = grid_meta_from_json(header.at("meta"));
  const std::size_t d = header.at("channels").get<std::size_t>();
  const std::size_t h = static_cast<std::size_t>(meta.H), w = static_cast<std::size_t>(meta.W);
  if (header.at("records").get<std::size_t>() != h * w) throw FormatError("bev dump: record count");
  Tensor bev({d, h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    const auto c = static_cast<std::size_t>(io::read_i32(in, "records"));
    const auto r = static_cast<std::size_t>(io::read_i32(in, "records"));
    if (c >= w || r >= h) throw FormatError("bev dump: cell index out of range");
    for (std::size_t k = 0; k < d; ++k) bev[k * h * w + r * w + c] = io::read_f64(in, "records");
  }
  if (bev_meta) *bev_meta = meta;
  return bev;
}

}  // namespace sdf
