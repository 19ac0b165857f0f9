// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "sdf/tensor.hpp"

namespace sdf {

// Bilinear read of a [C x H x W] map at pixel position (u, v) into `out`
// (length C). Texel (i, j) is centred at (j + 0.5, i + 0.5); texels outside
// the map contribute zero.
void bilinear_read(const Tensor& map, double u, double v, std::span<double> out);

}  // namespace sdf
