// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdf/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "sdf/errors.hpp"
#include "sdf/param_store.hpp"

namespace sdf::ad {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  Node node;
  node.op = "constant";
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::leaf(Tensor value) {
  Node node;
  node.op = "leaf";
  node.value = std::move(value);
  node.requires_grad = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamStore& store, const std::string& name) {
  auto key = std::make_pair(static_cast<const ParamStore*>(&store), name);
  if (auto it = param_ids_.find(key); it != param_ids_.end()) {
    return Var(this, it->second);
  }
  Node node;
  node.op = "param";
  node.value = store.at(name).value;
  node.requires_grad = true;
  node.store = &store;
  node.param_name = name;
  nodes_.push_back(std::move(node));
  param_ids_.emplace(std::move(key), nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> parents,
                 BackwardFn backward) {
  Node node;
  node.op = op;
  node.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape_ != this) throw ContractError(std::string(op) + ": operand from another tape");
    node.requires_grad = node.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor Tape::grad(Var v) const {
  const Node& node = nodes_[v.id()];
  if (node.grad.empty() && node.value.numel() != 0) return Tensor::zeros(node.value.shape());
  return node.grad;
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.shape() != node.value.shape()) node.grad = Tensor::zeros(node.value.shape());
  return node.grad;
}

void Tape::backward(Var root) {
  if (root.tape_ != this) throw ContractError("backward: root from another tape");
  if (root.numel() != 1) {
    throw DimensionError("backward: root must hold one element, got " +
                         shape_to_string(root.shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor();
  grad_slot(root.id_).fill(1.0);
  for (std::size_t id = root.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.grad.empty()) continue;
    if (node.backward) node.backward(*this, id);
    if (node.store) node.store->at(node.param_name).grad.add_inplace(node.grad);
  }
}

std::optional<std::string> Tape::first_nonfinite() const {
  for (const Node& node : nodes_) {
    if (!node.value.all_finite()) return std::string(node.op);
  }
  return std::nullopt;
}

namespace {

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes " + shape_to_string(a.shape()) +
                         " and " + shape_to_string(b.shape()) + " differ");
  }
}

void require_rank(const char* op, Var a, std::size_t rank) {
  if (a.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_to_string(a.shape()));
  }
}

// Elementwise op with a unary local derivative computed from (x, y).
template <class Fwd, class Deriv>
Var unary(const char* op, Var a, Fwd fwd, Deriv deriv) {
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = fwd(x[i]);
  const std::size_t pa = a.id();
  return a.tape().record(op, std::move(y), {a}, [pa, deriv](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& x = t.value(pa);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad_slot(pa);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor y = a.value();
  y.add_inplace(b.value());
  const std::size_t pa = a.id(), pb = b.id();
  return a.tape().record("add", std::move(y), {a, b}, [pa, pb](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(pa)) t.grad_slot(pa).add_inplace(g);
    if (t.requires_grad(pb)) t.grad_slot(pb).add_inplace(g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] -= bv[i];
  const std::size_t pa = a.id(), pb = b.id();
  return a.tape().record("sub", std::move(y), {a, b}, [pa, pb](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    if (t.requires_grad(pa)) t.grad_slot(pa).add_inplace(g);
    if (t.requires_grad(pb)) {
      Tensor& gb = t.grad_slot(pb);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] *= bv[i];
  const std::size_t pa = a.id(), pb = b.id();
  return a.tape().record("mul", std::move(y), {a, b}, [pa, pb](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& av = t.value(pa);
    const Tensor& bv = t.value(pb);
    if (t.requires_grad(pa)) {
      Tensor& ga = t.grad_slot(pa);
      for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(pb)) {
      Tensor& gb = t.grad_slot(pb);
      for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(
      "scale", a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Var relu(Var a) {
  return unary(
      "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var abs(Var a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var add_row(Var a, Var row) {
  require_rank("add_row", a, 2);
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (row.numel() != d) {
    throw DimensionError("add_row: row " + shape_to_string(row.shape()) +
                         " does not broadcast over " + shape_to_string(a.shape()));
  }
  Tensor y = a.value();
  const Tensor& r = row.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] += r[j];
  const std::size_t pa = a.id(), pr = row.id();
  return a.tape().record("add_row", std::move(y), {a, row},
                         [pa, pr, n, d](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad_of(self);
                           if (t.requires_grad(pa)) t.grad_slot(pa).add_inplace(g);
                           if (t.requires_grad(pr)) {
                             Tensor& gr = t.grad_slot(pr);
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < d; ++j) gr[j] += g[i * d + j];
                           }
                         });
}

Var mul_row(Var a, Var row) {
  require_rank("mul_row", a, 2);
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (row.numel() != d) {
    throw DimensionError("mul_row: row " + shape_to_string(row.shape()) +
                         " does not broadcast over " + shape_to_string(a.shape()));
  }
  Tensor y = a.value();
  const Tensor& r = row.value();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i * d + j] *= r[j];
  const std::size_t pa = a.id(), pr = row.id();
  return a.tape().record("mul_row", std::move(y), {a, row},
                         [pa, pr, n, d](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad_of(self);
                           const Tensor& av = t.value(pa);
                           const Tensor& rv = t.value(pr);
                           if (t.requires_grad(pa)) {
                             Tensor& ga = t.grad_slot(pa);
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < d; ++j)
                                 ga[i * d + j] += g[i * d + j] * rv[j];
                           }
                           if (t.requires_grad(pr)) {
                             Tensor& gr = t.grad_slot(pr);
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < d; ++j)
                                 gr[j] += g[i * d + j] * av[i * d + j];
                           }
                         });
}

Var matmul(Var a, Var b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: " + shape_to_string(a.shape()) + " . " +
                         shape_to_string(b.shape()) + " inner dimensions differ");
  }
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  Tensor y({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double* yi = &y[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = &bv[p * m];
      for (std::size_t j = 0; j < m; ++j) yi[j] += aip * bp[j];
    }
  }
  const std::size_t pa = a.id(), pb = b.id();
  return a.tape().record("matmul", std::move(y), {a, b},
                         [pa, pb, n, k, m](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad_of(self);
                           const Tensor& av = t.value(pa);
                           const Tensor& bv = t.value(pb);
                           if (t.requires_grad(pa)) {
                             Tensor& ga = t.grad_slot(pa);
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t p = 0; p < k; ++p) {
                                 double s = 0.0;
                                 for (std::size_t j = 0; j < m; ++j)
                                   s += g[i * m + j] * bv[p * m + j];
                                 ga[i * k + p] += s;
                               }
                           }
                           if (t.requires_grad(pb)) {
                             Tensor& gb = t.grad_slot(pb);
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t p = 0; p < k; ++p) {
                                 const double aip = av[i * k + p];
                                 if (aip == 0.0) continue;
                                 for (std::size_t j = 0; j < m; ++j)
                                   gb[p * m + j] += aip * g[i * m + j];
                               }
                           }
                         });
}

Var transpose(Var a) {
  require_rank("transpose", a, 2);
  const std::size_t r = a.dim(0), c = a.dim(1);
  const Tensor& x = a.value();
  Tensor y({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j * r + i] = x[i * c + j];
  const std::size_t pa = a.id();
  return a.tape().record("transpose", std::move(y), {a}, [pa, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_slot(pa);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
  });
}

Var reshape(Var a, Shape shape) {
  Tensor y = a.value().reshaped(std::move(shape));
  const std::size_t pa = a.id();
  return a.tape().record("reshape", std::move(y), {a}, [pa](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_slot(pa);
    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

Var concat_cols(Var a, Var b) {
  require_rank("concat_cols", a, 2);
  require_rank("concat_cols", b, 2);
  const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
  if (b.dim(0) != n) {
    throw DimensionError("concat_cols: " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " row counts differ");
  }
  const std::size_t d = da + db;
  Tensor y({n, d});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(&av[i * da], da, &y[i * d]);
    std::copy_n(&bv[i * db], db, &y[i * d + da]);
  }
  const std::size_t pa = a.id(), pb = b.id();
  return a.tape().record("concat_cols", std::move(y), {a, b},
                         [pa, pb, n, da, db, d](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad_of(self);
                           if (t.requires_grad(pa)) {
                             Tensor& ga = t.grad_slot(pa);
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < da; ++j) ga[i * da + j] += g[i * d + j];
                           }
                           if (t.requires_grad(pb)) {
                             Tensor& gb = t.grad_slot(pb);
                             for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < db; ++j)
                                 gb[i * db + j] += g[i * d + da + j];
                           }
                         });
}

Var slice_cols(Var a, std::size_t start, std::size_t count) {
  require_rank("slice_cols", a, 2);
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (start + count > d) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") exceed " + shape_to_string(a.shape()));
  }
  const Tensor& x = a.value();
  Tensor y({n, count});
  for (std::size_t i = 0; i < n; ++i) std::copy_n(&x[i * d + start], count, &y[i * count]);
  const std::size_t pa = a.id();
  return a.tape().record("slice_cols", std::move(y), {a},
                         [pa, n, d, start, count](Tape& t, std::size_t self) {
                           const Tensor& g = t.grad_of(self);
                           Tensor& ga = t.grad_slot(pa);
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < count; ++j)
                               ga[i * d + start + j] += g[i * count + j];
                         });
}

Var mean_rows(Var a) {
  require_rank("mean_rows", a, 2);
  const std::size_t n = a.dim(0), d = a.dim(1);
  if (n == 0) throw DimensionError("mean_rows: no rows");
  const Tensor& x = a.value();
  Tensor y({1, d});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) y[j] += x[i * d + j];
  for (std::size_t j = 0; j < d; ++j) y[j] /= static_cast<double>(n);
  const std::size_t pa = a.id();
  return a.tape().record("mean_rows", std::move(y), {a}, [pa, n, d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    Tensor& ga = t.grad_slot(pa);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) ga[i * d + j] += g[j] * inv;
  });
}

Var softmax(Var a) {
  const Tensor& x = a.value();
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw DimensionError("softmax: last axis must be non-empty, got " + shape_to_string(x.shape()));
  }
  const std::size_t k = x.shape().back();
  const std::size_t rows = x.numel() / k;
  Tensor y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &x[r * k];
    double* yr = &y[r * k];
    const double mx = *std::max_element(xr, xr + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      s += yr[j];
    }
    for (std::size_t j = 0; j < k; ++j) yr[j] /= s;
  }
  const std::size_t pa = a.id();
  return a.tape().record("softmax", std::move(y), {a}, [pa, rows, k](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_of(self);
    const Tensor& y = t.value(self);
    Tensor& ga = t.grad_slot(pa);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * y[r * k + j];
      for (std::size_t j = 0; j < k; ++j) ga[r * k + j] += y[r * k + j] * (g[r * k + j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_rank("layer_norm", x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain " + shape_to_string(gain.shape()) + " / bias " +
                         shape_to_string(bias.shape()) + " do not match " +
                         shape_to_string(x.shape()));
  }
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  Tensor y({n, d});
  // Per-row normalized values and inverse std, kept for backward.
  auto xhat = std::make_shared<std::vector<double>>(n * d);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv[i * d + j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv[i * d + j] - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xv[i * d + j] - mu) * is;
      (*xhat)[i * d + j] = h;
      y[i * d + j] = h * gv[j] + bv[j];
    }
  }
  const std::size_t px = x.id(), pg = gain.id(), pb = bias.id();
  return x.tape().record(
      "layer_norm", std::move(y), {x, gain, bias},
      [px, pg, pb, n, d, xhat, inv_std](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& gv = t.value(pg);
        if (t.requires_grad(pg)) {
          Tensor& gg = t.grad_slot(pg);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * (*xhat)[i * d + j];
        }
        if (t.requires_grad(pb)) {
          Tensor& gb = t.grad_slot(pb);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
        }
        if (t.requires_grad(px)) {
          Tensor& gx = t.grad_slot(px);
          std::vector<double> dh(d);
          for (std::size_t i = 0; i < n; ++i) {
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dh[j] = g[i * d + j] * gv[j];
              m1 += dh[j];
              m2 += dh[j] * (*xhat)[i * d + j];
            }
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              gx[i * d + j] += (*inv_std)[i] * (dh[j] - m1 - (*xhat)[i * d + j] * m2);
            }
          }
        }
      });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t pa = a.id();
  return a.tape().record("sum", Tensor::scalar(s), {a}, [pa](Tape& t, std::size_t self) {
    const double g = t.grad_of(self)[0];
    Tensor& ga = t.grad_slot(pa);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const std::size_t n = a.numel();
  if (n == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(n));
}

Var row_combine(Var src, const RowPlan& plan) {
  require_rank("row_combine", src, 2);
  const std::size_t n = src.dim(0), c = src.dim(1);
  if (plan.offsets.size() != plan.out_rows + 1 || plan.sources.size() != plan.weights.size()) {
    throw ContractError("row_combine: malformed plan");
  }
  for (std::size_t s : plan.sources) {
    if (s >= n) {
      throw RangeError("row_combine: source row " + std::to_string(s) + " out of range for " +
                       shape_to_string(src.shape()));
    }
  }
  const Tensor& x = src.value();
  Tensor y({plan.out_rows, c});
  for (std::size_t r = 0; r < plan.out_rows; ++r) {
    double* yr = &y[r * c];
    for (std::size_t k = plan.offsets[r]; k < plan.offsets[r + 1]; ++k) {
      const double w = plan.weights[k];
      const double* xs = &x[plan.sources[k] * c];
      for (std::size_t j = 0; j < c; ++j) yr[j] += w * xs[j];
    }
  }
  const std::size_t ps = src.id();
  return src.tape().record("row_combine", std::move(y), {src},
                           [ps, c, plan](Tape& t, std::size_t self) {
                             const Tensor& g = t.grad_of(self);
                             Tensor& gs = t.grad_slot(ps);
                             for (std::size_t r = 0; r < plan.out_rows; ++r) {
                               const double* gr = &g[r * c];
                               for (std::size_t k = plan.offsets[r]; k < plan.offsets[r + 1]; ++k) {
                                 const double w = plan.weights[k];
                                 double* out = &gs[plan.sources[k] * c];
                                 for (std::size_t j = 0; j < c; ++j) out[j] += w * gr[j];
                               }
                             }
                           });
}

namespace {

struct BilinearTap {
  long x0, y0;
  double fx, fy;
};

BilinearTap bilinear_tap(double u, double v) {
  const double x = u - 0.5;
  const double y = v - 0.5;
  const double xf = std::floor(x);
  const double yf = std::floor(y);
  return {static_cast<long>(xf), static_cast<long>(yf), x - xf, y - yf};
}

}  // namespace

Var bilinear_sample(Var map, Var locations) {
  require_rank("bilinear_sample", map, 3);
  require_rank("bilinear_sample", locations, 2);
  if (locations.dim(1) != 2) {
    throw DimensionError("bilinear_sample: locations must be [M x 2], got " +
                         shape_to_string(locations.shape()));
  }
  const std::size_t ch = map.dim(0), h = map.dim(1), w = map.dim(2);
  const std::size_t m = locations.dim(0);
  const std::size_t plane = h * w;
  const Tensor& mv = map.value();
  const Tensor& lv = locations.value();
  Tensor y({m, ch});
  const long lh = static_cast<long>(h), lw = static_cast<long>(w);
  auto inside = [lh, lw](long yy, long xx) { return yy >= 0 && yy < lh && xx >= 0 && xx < lw; };
  for (std::size_t s = 0; s < m; ++s) {
    const BilinearTap tap = bilinear_tap(lv[2 * s], lv[2 * s + 1]);
    const long ys[2] = {tap.y0, tap.y0 + 1};
    const long xs[2] = {tap.x0, tap.x0 + 1};
    const double wy[2] = {1.0 - tap.fy, tap.fy};
    const double wx[2] = {1.0 - tap.fx, tap.fx};
    double* ys_out = &y[s * ch];
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        if (!inside(ys[a], xs[b])) continue;
        const double wt = wy[a] * wx[b];
        const std::size_t off = static_cast<std::size_t>(ys[a]) * w + static_cast<std::size_t>(xs[b]);
        for (std::size_t c = 0; c < ch; ++c) ys_out[c] += wt * mv[c * plane + off];
      }
  }
  const std::size_t pm = map.id(), pl = locations.id();
  return map.tape().record(
      "bilinear_sample", std::move(y), {map, locations},
      [pm, pl, ch, h, w, m, plane, lh, lw, inside](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& mv = t.value(pm);
        const Tensor& lv = t.value(pl);
        const bool need_map = t.requires_grad(pm);
        const bool need_loc = t.requires_grad(pl);
        Tensor* gm = need_map ? &t.grad_slot(pm) : nullptr;
        Tensor* gl = need_loc ? &t.grad_slot(pl) : nullptr;
        for (std::size_t s = 0; s < m; ++s) {
          const BilinearTap tap = bilinear_tap(lv[2 * s], lv[2 * s + 1]);
          const long ys[2] = {tap.y0, tap.y0 + 1};
          const long xs[2] = {tap.x0, tap.x0 + 1};
          const double wy[2] = {1.0 - tap.fy, tap.fy};
          const double wx[2] = {1.0 - tap.fx, tap.fx};
          const double* gs = &g[s * ch];
          double du = 0.0, dv = 0.0;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) {
              if (!inside(ys[a], xs[b])) continue;
              const std::size_t off =
                  static_cast<std::size_t>(ys[a]) * w + static_cast<std::size_t>(xs[b]);
              const double wt = wy[a] * wx[b];
              // d(wy*wx)/du = wy * (+-1), d/dv = wx * (+-1).
              const double sx = b == 0 ? -1.0 : 1.0;
              const double sy = a == 0 ? -1.0 : 1.0;
              double dot = 0.0;
              for (std::size_t c = 0; c < ch; ++c) {
                const double gc = gs[c];
                if (gm) (*gm)[c * plane + off] += wt * gc;
                dot += gc * mv[c * plane + off];
              }
              du += dot * wy[a] * sx;
              dv += dot * wx[b] * sy;
            }
          if (gl) {
            (*gl)[2 * s] += du;
            (*gl)[2 * s + 1] += dv;
          }
        }
      });
}

Var head_weighted_sum(Var weights, Var values, std::size_t heads) {
  require_rank("head_weighted_sum", weights, 2);
  require_rank("head_weighted_sum", values, 2);
  const std::size_t k = weights.dim(1);
  const std::size_t d = values.dim(1);
  if (heads == 0 || weights.dim(0) % heads != 0 || d % heads != 0 ||
      values.dim(0) != weights.dim(0) * k) {
    throw DimensionError("head_weighted_sum: weights " + shape_to_string(weights.shape()) +
                         " and values " + shape_to_string(values.shape()) +
                         " are inconsistent for " + std::to_string(heads) + " heads");
  }
  const std::size_t n = weights.dim(0) / heads;
  const std::size_t dh = d / heads;
  const Tensor& wv = weights.value();
  const Tensor& vv = values.value();
  Tensor y({n, d});
  for (std::size_t q = 0; q < n; ++q)
    for (std::size_t hh = 0; hh < heads; ++hh) {
      const std::size_t row = q * heads + hh;
      double* out = &y[q * d + hh * dh];
      for (std::size_t p = 0; p < k; ++p) {
        const double a = wv[row * k + p];
        const double* val = &vv[(row * k + p) * d + hh * dh];
        for (std::size_t c = 0; c < dh; ++c) out[c] += a * val[c];
      }
    }
  const std::size_t pw = weights.id(), pv = values.id();
  return weights.tape().record(
      "head_weighted_sum", std::move(y), {weights, values},
      [pw, pv, n, heads, k, d, dh](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_of(self);
        const Tensor& wv = t.value(pw);
        const Tensor& vv = t.value(pv);
        Tensor* gw = t.requires_grad(pw) ? &t.grad_slot(pw) : nullptr;
        Tensor* gv = t.requires_grad(pv) ? &t.grad_slot(pv) : nullptr;
        for (std::size_t q = 0; q < n; ++q)
          for (std::size_t hh = 0; hh < heads; ++hh) {
            const std::size_t row = q * heads + hh;
            const double* go = &g[q * d + hh * dh];
            for (std::size_t p = 0; p < k; ++p) {
              const std::size_t vrow = (row * k + p) * d + hh * dh;
              if (gw) {
                double dot = 0.0;
                for (std::size_t c = 0; c < dh; ++c) dot += go[c] * vv[vrow + c];
                (*gw)[row * k + p] += dot;
              }
              if (gv) {
                const double a = wv[row * k + p];
                for (std::size_t c = 0; c < dh; ++c) (*gv)[vrow + c] += a * go[c];
              }
            }
          }
      });
}

Var patchify2x2(Var map) {
  require_rank("patchify2x2", map, 3);
  const std::size_t ch = map.dim(0), h = map.dim(1), w = map.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw DimensionError("patchify2x2: spatial dims of " + shape_to_string(map.shape()) +
                         " must be even");
  }
  const std::size_t ho = h / 2, wo = w / 2;
  const Tensor& x = map.value();
  Tensor y({ho * wo, 4 * ch});
  for (std::size_t i = 0; i < ho; ++i)
    for (std::size_t j = 0; j < wo; ++j)
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t di = 0; di < 2; ++di)
          for (std::size_t dj = 0; dj < 2; ++dj)
            y[(i * wo + j) * 4 * ch + c * 4 + di * 2 + dj] =
                x[c * h * w + (2 * i + di) * w + 2 * j + dj];
  const std::size_t pm = map.id();
  return map.tape().record("patchify2x2", std::move(y), {map},
                           [pm, ch, h, w, ho, wo](Tape& t, std::size_t self) {
                             const Tensor& g = t.grad_of(self);
                             Tensor& gm = t.grad_slot(pm);
                             for (std::size_t i = 0; i < ho; ++i)
                               for (std::size_t j = 0; j < wo; ++j)
                                 for (std::size_t c = 0; c < ch; ++c)
                                   for (std::size_t di = 0; di < 2; ++di)
                                     for (std::size_t dj = 0; dj < 2; ++dj)
                                       gm[c * h * w + (2 * i + di) * w + 2 * j + dj] +=
                                           g[(i * wo + j) * 4 * ch + c * 4 + di * 2 + dj];
                           });
}

Var bce_with_logits(Var logits, const Tensor& targets) {
  if (logits.numel() != targets.numel()) {
    throw DimensionError("bce_with_logits: logits " + shape_to_string(logits.shape()) +
                         " vs targets " + shape_to_string(targets.shape()));
  }
  const std::size_t n = logits.numel();
  if (n == 0) throw DimensionError("bce_with_logits: empty input");
  const Tensor& z = logits.value();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double zi = z[i];
    s += std::max(zi, 0.0) - zi * targets[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  const std::size_t pz = logits.id();
  return logits.tape().record(
      "bce_with_logits", Tensor::scalar(s / static_cast<double>(n)), {logits},
      [pz, n, targets](Tape& t, std::size_t self) {
        const double g = t.grad_of(self)[0] / static_cast<double>(n);
        const Tensor& z = t.value(pz);
        Tensor& gz = t.grad_slot(pz);
        for (std::size_t i = 0; i < n; ++i) {
          const double zi = z[i];
          const double sig = zi >= 0.0 ? 1.0 / (1.0 + std::exp(-zi))
                                       : std::exp(zi) / (1.0 + std::exp(zi));
          gz[i] += g * (sig - targets[i]);
        }
      });
}

}  // namespace sdf::ad
