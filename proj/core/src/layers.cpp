// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdf/layers.hpp"

#include "sdf/errors.hpp"

namespace sdf {

ad::Var linear(ParamStore& store, const std::string& name, ad::Var x, std::size_t out_dim,
               bool with_bias) {
  if (x.value().rank() != 2) {
    throw DimensionError("linear '" + name + "': input " + shape_to_string(x.shape()) +
                         " is not a matrix");
  }
  const std::size_t in_dim = x.dim(1);
  const std::string wname = name + ".weight";
  if (store.contains(wname)) {
    const Shape& ws = store.at(wname).value.shape();
    if (ws.size() != 2 || ws[0] != in_dim || ws[1] != out_dim) {
      throw DimensionError("linear '" + name + "': input " + shape_to_string(x.shape()) +
                           " incompatible with weight " + shape_to_string(ws));
    }
  }
  store.get_or_init(wname, {in_dim, out_dim}, in_dim);
  ad::Tape& tape = x.tape();
  ad::Var y = ad::matmul(x, tape.param(store, wname));
  if (with_bias) {
    const std::string bname = name + ".bias";
    store.get_or_init(bname, {out_dim}, in_dim);
    y = ad::add_row(y, tape.param(store, bname));
  }
  return y;
}

ad::Var layer_norm(ParamStore& store, const std::string& name, ad::Var x) {
  const std::size_t d = x.dim(1);
  store.get_or_init(name + ".gain", {d}, d, Init::kOnes);
  store.get_or_init(name + ".bias", {d}, d, Init::kZeros);
  ad::Tape& tape = x.tape();
  return ad::layer_norm(x, tape.param(store, name + ".gain"), tape.param(store, name + ".bias"));
}

}  // namespace sdf
