// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "sdf/autodiff.hpp"
#include "sdf/param_store.hpp"

namespace sdf {

// A deterministic scalar-valued computation over a store's parameters.
using ScalarFn = std::function<ad::Var(ad::Tape&, ParamStore&)>;

struct GradcheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t coordinates_checked = 0;
  // Coordinates where a one-sided difference beat the central one by more
  // than 10x (kink_aware only).
  std::size_t kinks = 0;
};

struct GradcheckOptions {
  double step = 1e-5;
  // 0 checks every coordinate; otherwise at most this many evenly strided
  // coordinates per entry.
  std::size_t max_coords_per_entry = 0;
  // Piecewise-smooth losses (ReLU, bilinear texel boundaries): when the
  // central error exceeds kink_refine, the coordinate is also compared with
  // second-order one-sided differences (steps h/2 and h) on each side and
  // the smallest of the three errors is kept. A kink inside one side's
  // interval leaves the other side exact to O(h^2).
  bool kink_aware = false;
  double kink_refine = 1e-7;
};

// Compares reverse-mode gradients with central differences over every
// parameter in `store`. The error of one coordinate is
// |analytic - numeric| / max(1, |numeric|). Throws NumericError naming the
// offending op if the loss is not finite.
GradcheckResult gradcheck_detailed(const ScalarFn& fn, ParamStore& store,
                                   const GradcheckOptions& options);

double gradcheck(const ScalarFn& fn, ParamStore& store, double step);

}  // namespace sdf
