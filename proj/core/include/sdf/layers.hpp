// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "sdf/autodiff.hpp"
#include "sdf/param_store.hpp"

namespace sdf {

// y = x . W + b with W = "<name>.weight" [D_in x D_out] and
// b = "<name>.bias" [D_out], both lazily initialized with fan_in = D_in.
// Throws DimensionError naming both shapes if x is not [N x D_in] for an
// existing W.
ad::Var linear(ParamStore& store, const std::string& name, ad::Var x,
               std::size_t out_dim, bool with_bias = true);

// Layer norm with "<name>.gain" (ones) and "<name>.bias" (zeros).
ad::Var layer_norm(ParamStore& store, const std::string& name, ad::Var x);

}  // namespace sdf
