// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdf/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "sdf/errors.hpp"

namespace sdf {

void bilinear_read(const Tensor& map, double u, double v, std::span<double> out) {
  if (map.rank() != 3 || out.size() != map.dim(0)) {
    throw DimensionError("bilinear_read: map " + shape_to_string(map.shape()) +
                         " vs output length " + std::to_string(out.size()));
  }
  const std::size_t ch = map.dim(0), h = map.dim(1), w = map.dim(2);
  std::fill(out.begin(), out.end(), 0.0);
  const double x = u - 0.5;
  const double y = v - 0.5;
  const double xf = std::floor(x), yf = std::floor(y);
  const long x0 = static_cast<long>(xf), y0 = static_cast<long>(yf);
  const double fx = x - xf, fy = y - yf;
  const long ys[2] = {y0, y0 + 1};
  const long xs[2] = {x0, x0 + 1};
  const double wy[2] = {1.0 - fy, fy};
  const double wx[2] = {1.0 - fx, fx};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      if (ys[a] < 0 || xs[b] < 0 || ys[a] >= static_cast<long>(h) || xs[b] >= static_cast<long>(w))
        continue;
      const double wt = wy[a] * wx[b];
      const std::size_t off = static_cast<std::size_t>(ys[a]) * w + static_cast<std::size_t>(xs[b]);
      for (std::size_t c = 0; c < ch; ++c) out[c] += wt * map[c * h * w + off];
    }
}

}  // namespace sdf
