// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdf/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "binary_io.hpp"
#include "json_io.hpp"
#include "sdf/errors.hpp"
#include "sdf/layers.hpp"

namespace sdf {

namespace {

std::uint64_t pack(const VoxelIndex& i) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i.x)) << 42) |
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i.y) & 0x1FFFFFu) << 21) |
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i.z) & 0x1FFFFFu));
}

}  // namespace

VoxelLayout::VoxelLayout(GridMeta meta, std::vector<VoxelIndex> indices,
                         std::vector<std::int64_t> counts)
    : meta_(meta), indices_(std::move(indices)), counts_(std::move(counts)) {
  meta_.validate();
  if (counts_.size() != indices_.size()) {
    throw ContractError("voxel layout: " + std::to_string(indices_.size()) + " indices but " +
                        std::to_string(counts_.size()) + " counts");
  }
  lookup_.reserve(indices_.size());
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (!in_range(indices_[i], meta_)) throw RangeError("voxel layout: index outside grid");
    if (i && !(indices_[i - 1] < indices_[i])) {
      throw ContractError("voxel layout: indices must be strictly increasing");
    }
    if (counts_[i] < 1) throw ContractError("voxel layout: valid voxels need point_count >= 1");
    lookup_.emplace(pack(indices_[i]), i);
  }
}

std::optional<std::size_t> VoxelLayout::find(const VoxelIndex& index) const {
  if (!in_range(index, meta_)) return std::nullopt;
  auto it = lookup_.find(pack(index));
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

VoxelizeResult voxelize_counted(const PointCloud& points, const GridMeta& meta) {
  meta.validate();
  struct Acc {
    double dx = 0, dy = 0, dz = 0, intensity = 0;
    std::int64_t count = 0;
  };
  std::map<VoxelIndex, Acc> acc;
  std::size_t dropped = 0;
  for (const LidarPoint& p : points) {
    const auto idx = world_to_voxel(p.position, meta);
    if (!idx) {
      ++dropped;
      continue;
    }
    const Vec3 c = voxel_center(*idx, meta);
    Acc& a = acc[*idx];
    a.dx += p.position.x() - c.x();
    a.dy += p.position.y() - c.y();
    a.dz += p.position.z() - c.z();
    a.intensity += p.intensity;
    ++a.count;
  }
  std::vector<VoxelIndex> indices;
  std::vector<std::int64_t> counts;
  indices.reserve(acc.size());
  counts.reserve(acc.size());
  Tensor features({acc.size(), kVoxelInputChannels});
  std::size_t row = 0;
  for (const auto& [idx, a] : acc) {
    const double n = static_cast<double>(a.count);
    double* f = &features[row * kVoxelInputChannels];
    f[0] = a.dx / n;
    f[1] = a.dy / n;
    f[2] = a.dz / n;
    f[3] = a.intensity / n;
    f[4] = std::log1p(n);
    indices.push_back(idx);
    counts.push_back(a.count);
    ++row;
  }
  return {SparseVoxelGrid{VoxelLayout(meta, std::move(indices), std::move(counts)),
                          std::move(features)},
          dropped};
}

SparseVoxelGrid voxelize(const PointCloud& points, const GridMeta& meta) {
  return voxelize_counted(points, meta).grid;
}

std::vector<ValidCenter> valid_centers(const VoxelLayout& layout) {
  std::vector<ValidCenter> out;
  out.reserve(layout.size());
  for (const VoxelIndex& i : layout.indices()) out.push_back({i, voxel_center(i, layout.meta())});
  return out;
}

std::vector<ValidCenter> valid_centers(const SparseVoxelGrid& grid) {
  return valid_centers(grid.layout);
}

void EncoderConfig::validate() const {
  const int ip = static_cast<int>(insertion_point);
  if (ip < 1 || ip > 5) throw ConfigError("encoder: insertion point must be C1..C5");
  for (std::size_t c : stage_channels) {
    if (c == 0) throw ConfigError("encoder: stage channels must be positive");
  }
}

std::size_t EncoderConfig::insertion_channels() const {
  const int ip = static_cast<int>(insertion_point);
  return ip == 5 ? stage_channels[3] : stage_channels[static_cast<std::size_t>(ip - 1)];
}

std::pair<VoxelLayout, ad::RowPlan> downsample_layout(const VoxelLayout& layout) {
  // Children are visited in lexicographic order, so each parent's reduction
  // order is fixed.
  std::map<VoxelIndex, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const VoxelIndex& c = layout.indices()[i];
    groups[VoxelIndex{c.x / 2, c.y / 2, c.z / 2}].push_back(i);
  }
  std::vector<VoxelIndex> indices;
  std::vector<std::int64_t> counts;
  ad::RowPlan plan;
  for (const auto& [parent, children] : groups) {
    std::int64_t total = 0;
    for (std::size_t c : children) total += layout.counts()[c];
    for (std::size_t c : children) {
      plan.add(c, static_cast<double>(layout.counts()[c]) / static_cast<double>(total));
    }
    plan.end_row();
    indices.push_back(parent);
    counts.push_back(total);
  }
  return {VoxelLayout(layout.meta().downsampled(), std::move(indices), std::move(counts)),
          std::move(plan)};
}

ad::RowPlan neighbor_mean_plan(const VoxelLayout& layout) {
  static constexpr int kOffsets[6][3] = {{-1, 0, 0}, {1, 0, 0},  {0, -1, 0},
                                         {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
  ad::RowPlan plan;
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const VoxelIndex& v = layout.indices()[i];
    members.assign(1, i);
    for (const auto& o : kOffsets) {
      if (auto j = layout.find({v.x + o[0], v.y + o[1], v.z + o[2]})) members.push_back(*j);
    }
    const double w = 1.0 / static_cast<double>(members.size());
    for (std::size_t j : members) plan.add(j, w);
    plan.end_row();
  }
  return plan;
}

std::vector<VoxelLayout> stage_layouts(const VoxelLayout& input, const EncoderConfig& cfg) {
  std::vector<VoxelLayout> out;
  VoxelLayout cur = input;
  for (std::size_t s = 0; s < 4; ++s) {
    if (cfg.downsample[s]) cur = downsample_layout(cur).first;
    out.push_back(cur);
  }
  return out;
}

VoxelFeatures sparse_encode(const SparseVoxelGrid& grid, const EncoderConfig& cfg,
                            ParamStore& store, ad::Tape& tape, const FusionHook& hook) {
  cfg.validate();
  VoxelFeatures cur{grid.layout, tape.constant(grid.features)};
  if (grid.features.rank() != 2 || grid.features.dim(0) != grid.size()) {
    throw DimensionError("sparse_encode: voxel features must be [N x C]");
  }
  const int insertion = static_cast<int>(cfg.insertion_point);

  auto run_hook = [&](VoxelFeatures& v) {
    if (!hook) return;
    const VoxelLayout before = v.layout;
    const Shape shape = v.features.shape();
    hook(v);
    if (!(v.layout.meta() == before.meta())) {
      throw ContractError("fusion hook changed the grid metadata");
    }
    if (!(v.layout == before)) throw ContractError("fusion hook changed the voxel set");
    if (v.features.shape() != shape) {
      throw ContractError("fusion hook changed the feature shape " + shape_to_string(shape) +
                          " -> " + shape_to_string(v.features.shape()));
    }
  };

  for (std::size_t s = 0; s < 4; ++s) {
    const std::string name = "encoder.stage" + std::to_string(s + 1);
    ad::Var h = ad::relu(linear(store, name, cur.features, cfg.stage_channels[s]));
    h = ad::row_combine(h, neighbor_mean_plan(cur.layout));
    if (cfg.downsample[s]) {
      auto [layout, plan] = downsample_layout(cur.layout);
      h = ad::row_combine(h, plan);
      cur.layout = std::move(layout);
    }
    cur.features = h;
    if (insertion == static_cast<int>(s) + 1) run_hook(cur);
  }
  cur.features = linear(store, "encoder.post", cur.features, cfg.stage_channels[3]);
  if (insertion == 5) run_hook(cur);
  return cur;
}

SparseVoxelGrid sparse_encode(const SparseVoxelGrid& grid, const EncoderConfig& cfg,
                              ParamStore& store, const FusionHook& hook) {
  ad::Tape tape;
  VoxelFeatures out = sparse_encode(grid, cfg, store, tape, hook);
  return SparseVoxelGrid{out.layout, out.features.value()};
}

FusionBlockCount count_fusion_blocks(const VoxelLayout& at_insertion, int bev_side) {
  if (bev_side < 1) throw RangeError("count_fusion_blocks: bev_side must be >= 1");
  return {static_cast<std::int64_t>(at_insertion.size()),
          static_cast<std::int64_t>(bev_side) * bev_side};
}

void write_voxel_dump(std::ostream& out, const SparseVoxelGrid& grid, int stage) {
  const std::size_t c = grid.channels();
  Json header{{"format", "sdf-voxel-dump"}, {"version", 1},
              {"meta", to_json(grid.layout.meta())}, {"stage", stage},
              {"channels", c}, {"records", grid.size()}, {"index_rank", 3}};
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const VoxelIndex& v = grid.layout.indices()[i];
    io::write_i32(out, v.x);
    io::write_i32(out, v.y);
    io::write_i32(out, v.z);
    for (std::size_t k = 0; k < c; ++k) io::write_f64(out, grid.features[i * c + k]);
  }
}

SparseVoxelGrid read_voxel_dump(std::istream& in, int* stage) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("voxel dump: missing header");
  Json header;
  try {
    header = Json::parse(line);
  } catch (const Json::exception& e) {
    throw FormatError(std::string("voxel dump: bad header: ") + e.what());
  }
  if (header.value("format", "") != "sdf-voxel-dump" || header.value("index_rank", 0) != 3) {
    throw FormatError("voxel dump: not a voxel dump");
  }
  const GridMeta meta = grid_meta_from_json(header.at("meta"));
  const std::size_t c = header.at("channels").get<std::size_t>();
  const std::size_t n = header.at("records").get<std::size_t>();
  std::vector<VoxelIndex> indices(n);
  Tensor features({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    indices[i].x = io::read_i32(in, "records");
    indices[i].y = io::read_i32(in, "records");
    indices[i].z = io::read_i32(in, "records");
    for (std::size_t k = 0; k < c; ++k) features[i * c + k] = io::read_f64(in, "records");
  }
  if (stage) *stage = header.value("stage", 0);
  return SparseVoxelGrid{VoxelLayout(meta, std::move(indices), std::vector<std::int64_t>(n, 1)),
                         std::move(features)};
}

}  // namespace sdf
