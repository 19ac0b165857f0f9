// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdf/tensor.hpp"

namespace sdf {
class ParamStore;
}

namespace sdf::ad {

class Tape;

// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape
// lives.
class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  std::size_t numel() const { return value().numel(); }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so walking them
// backwards is a valid topological order. Single-writer: one thread records
// and back-propagates a given tape.
class Tape {
 public:
  // Receives the tape and the id of the node being back-propagated. The
  // node's own gradient is available through grad(self).
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // A free input whose gradient can be read back with grad() after backward.
  Var leaf(Tensor value);
  // Parameter leaf bound to store entry `name`. Repeated calls return the
  // same node. Gradients are added into the store on backward().
  Var param(ParamStore& store, const std::string& name);

  Var record(const char* op, Tensor value, std::initializer_list<Var> parents,
             BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient of the most recent backward() root w.r.t. this node (zeros when
  // the node received no gradient).
  Tensor grad(Var v) const;
  // Accumulator used by backward functions; allocated on first use.
  Tensor& grad_slot(std::size_t id);
  const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }

  // Back-propagates from a single-element root and accumulates parameter
  // gradients into their stores. Node gradients are reset first.
  void backward(Var root);

  // Name of the first op that produced a non-finite value, if any.
  std::optional<std::string> first_nonfinite() const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    ParamStore* store = nullptr;
    std::string param_name;
  };

  std::deque<Node> nodes_;
  std::map<std::pair<const ParamStore*, std::string>, std::size_t> param_ids_;
};

// Row gather/scatter plan: output row r = sum_k weights[k] * src[sources[k]]
// for k in [offsets[r], offsets[r+1]). Entries are reduced in stored order.
struct RowPlan {
  std::size_t out_rows = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> sources;
  std::vector<double> weights;

  void add(std::size_t source, double weight) {
    sources.push_back(source);
    weights.push_back(weight);
  }
  // Closes the current output row.
  void end_row() {
    offsets.push_back(sources.size());
    ++out_rows;
  }
};

// Elementwise, same shape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var relu(Var a);
Var sigmoid(Var a);
Var abs(Var a);

// [N x D] + [D] broadcast over rows.
Var add_row(Var a, Var row);
// [N x D] * [D] broadcast over rows.
Var mul_row(Var a, Var row);
// [N x K] . [K x M]
Var matmul(Var a, Var b);
// [A x B] -> [B x A]
Var transpose(Var a);
Var reshape(Var a, Shape shape);
// [N x A], [N x B] -> [N x (A+B)]
Var concat_cols(Var a, Var b);
// Columns [start, start+count) of an [N x D] matrix.
Var slice_cols(Var a, std::size_t start, std::size_t count);
// [N x D] -> [1 x D]
Var mean_rows(Var a);

// Softmax over the last axis, max-subtracted.
Var softmax(Var a);
// Normalizes each row of [N x D], then applies gain and bias ([D] each).
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

Var sum(Var a);
Var mean(Var a);

// Applies a RowPlan to an [N x C] matrix, giving [plan.out_rows x C].
Var row_combine(Var src, const RowPlan& plan);

// Samples a [C x H x W] map at [M x 2] pixel locations (u, v), giving [M x C].
// Texel (i, j) is centred at (j + 0.5, i + 0.5); outside texels read zero.
Var bilinear_sample(Var map, Var locations);

// weights [N*heads x K], values [N*heads*K x D] -> [N x D] with
// out[n, h*dh + c] = sum_k weights[n*heads + h, k] * values[(n*heads + h)*K + k, h*dh + c].
Var head_weighted_sum(Var weights, Var values, std::size_t heads);

// [C x H x W] -> [(H/2 * W/2) x 4C]; row p = (i, j) holds the 2x2 patch at
// (2i, 2j), channel-major then (di, dj).
Var patchify2x2(Var map);

// Mean binary cross-entropy of sigmoid(logits) against targets in [0, 1].
Var bce_with_logits(Var logits, const Tensor& targets);

}  // namespace sdf::ad
