// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdf/param_store.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "binary_io.hpp"
#include "sdf/errors.hpp"

namespace sdf {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

}  // namespace

Tensor initial_value(std::string_view name, const Shape& shape, std::size_t fan_in,
                     std::uint64_t seed, Init init) {
  switch (init) {
    case Init::kZeros:
      return Tensor(shape, 0.0);
    case Init::kOnes:
      return Tensor(shape, 1.0);
    case Init::kUniformFanIn:
      break;
  }
  std::uint64_t h = fnv1a(kFnvOffset, name.data(), name.size());
  for (std::size_t d : shape) {
    const std::uint64_t d64 = d;
    h = fnv1a(h, &d64, sizeof d64);
  }
  h = fnv1a(h, &seed, sizeof seed);
  std::mt19937_64 rng(h);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in == 0 ? 1 : fan_in));
  Tensor t(shape);
  for (std::size_t i = 0; i < t.numel(); ++i) {
    // 53 random mantissa bits -> [0, 1); avoids implementation-defined
    // distribution algorithms so values are portable.
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    t[i] = (2.0 * u - 1.0) * bound;
  }
  return t;
}

ParamStore::Entry& ParamStore::get_or_init(const std::string& name, const Shape& shape,
                                           std::size_t fan_in, Init init) {
  if (auto it = entries_.find(name); it != entries_.end()) {
    if (it->second.value.shape() != shape) {
      throw DimensionError("parameter '" + name + "' has shape " +
                           shape_to_string(it->second.value.shape()) + ", requested " +
                           shape_to_string(shape));
    }
    return it->second;
  }
  Entry e{initial_value(name, shape, fan_in, seed_, init), Tensor::zeros(shape)};
  return entries_.emplace(name, std::move(e)).first->second;
}

ParamStore::Entry& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw RangeError("unknown parameter '" + name + "'");
  return it->second;
}

const ParamStore::Entry& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw RangeError("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::set(const std::string& name, Tensor value) {
  Tensor grad = Tensor::zeros(value.shape());
  entries_.insert_or_assign(name, Entry{std::move(value), std::move(grad)});
}

void ParamStore::zero_grad() {
  for (auto& [name, e] : entries_) e.grad.fill(0.0);
}

void ParamStore::sgd_step(double learning_rate) {
  for (auto& [name, e] : entries_) {
    for (std::size_t i = 0; i < e.value.numel(); ++i) e.value[i] -= learning_rate * e.grad[i];
  }
}

std::size_t ParamStore::zero_values(std::string_view prefix) {
  std::size_t n = 0;
  for (auto& [name, e] : entries_) {
    if (std::string_view(name).substr(0, prefix.size()) == prefix) {
      e.value.fill(0.0);
      ++n;
    }
  }
  return n;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.numel();
  return n;
}

void ParamStore::save(std::ostream& out) const {
  out.write("SDFP", 4);
  io::write_u32(out, kFormatVersion);
  io::write_u32(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, e] : entries_) {
    io::write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    io::write_u32(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t d : e.value.shape()) io::write_u64(out, d);
    for (double v : e.value.data()) io::write_f64(out, v);
  }
}

ParamStore ParamStore::load(std::istream& in, std::uint64_t seed) {
  io::expect_magic(in, "SDFP", "parameter file");
  const std::uint32_t version = io::read_u32(in, "header");
  if (version != kFormatVersion) {
    throw FormatError("parameter file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = io::read_u32(in, "header");
  ParamStore store(seed);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = io::read_u32(in, "entry name");
    std::string name = io::read_bytes(in, len, "entry name");
    const std::uint32_t rank = io::read_u32(in, "entry shape");
    Shape shape(rank);
    for (auto& d : shape) d = io::read_u64(in, "entry shape");
    Tensor value(shape);
    for (auto& v : value.data()) v = io::read_f64(in, "entry payload");
    store.set(name, std::move(value));
  }
  return store;
}

void ParamStore::save_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  save(out);
}

ParamStore ParamStore::load_file(const std::string& path, std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return load(in, seed);
}

}  // namespace sdf
