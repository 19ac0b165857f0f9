// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>

#include "sdf/tensor.hpp"

namespace sdf {

enum class Init {
  kUniformFanIn,  // U(-1/sqrt(fan_in), +1/sqrt(fan_in))
  kZeros,
  kOnes,
};

// Deterministic initial value of a parameter: a pure function of
// (name, shape, seed).
Tensor initial_value(std::string_view name, const Shape& shape,
                     std::size_t fan_in, std::uint64_t seed, Init init);

/// Named parameters with gradient accumulators.
///
/// Entries are kept sorted by name so iteration, serialization and SGD
/// updates happen in a fixed order.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
  };

  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  bool contains(const std::string& name) const {
    return entries_.count(name) != 0;
  }

  // Returns the entry, creating it from initial_value() on first use.
  // Throws DimensionError when an existing entry has a different shape.
  Entry& get_or_init(const std::string& name, const Shape& shape,
                     std::size_t fan_in, Init init = Init::kUniformFanIn);

  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;

  // Inserts or overwrites an entry; its gradient is reset to zeros.
  void set(const std::string& name, Tensor value);

  void zero_grad();
  void sgd_step(double learning_rate);
  // Zeroes the values of every entry whose name starts with `prefix`.
  // Returns the number of entries touched.
  std::size_t zero_values(std::string_view prefix);

  std::size_t size() const { return entries_.size(); }
  std::size_t total_elements() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // Flat little-endian binary: "SDFP", u32 version, u32 entry count, then per
  // entry u32 name length, name bytes, u32 rank, u64 dims, f64 payload.
  void save(std::ostream& out) const;
  static ParamStore load(std::istream& in, std::uint64_t seed = 0);
  void save_file(const std::string& path) const;
  static ParamStore load_file(const std::string& path, std::uint64_t seed = 0);

  static constexpr std::uint32_t kFormatVersion = 1;

 private:
  std::uint64_t seed_;
  std::map<std::string, Entry, std::less<>> entries_;
};

}  // namespace sdf
