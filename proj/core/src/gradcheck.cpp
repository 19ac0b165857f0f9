// Copyright 2026 The SDF Fusion Authors
// SPDX-License-Identifier: Apache-2.0

#include "sdf/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sdf/errors.hpp"

namespace sdf {

namespace {

double evaluate(const ScalarFn& fn, ParamStore& store) {
  ad::Tape tape;
  ad::Var loss = fn(tape, store);
  const double v = loss.value()[0];
  if (!std::isfinite(v)) {
    const auto op = tape.first_nonfinite();
    throw NumericError("gradcheck: non-finite loss; first non-finite value from op '" +
                       op.value_or("unknown") + "'");
  }
  return v;
}

}  // namespace

GradcheckResult gradcheck_detailed(const ScalarFn& fn, ParamStore& store,
                                   const GradcheckOptions& options) {
  if (!(options.step > 0.0)) throw ConfigError("gradcheck: step must be positive");

  // Analytic pass; the first evaluation also creates lazily initialized
  // parameters so the sweep below sees all of them.
  store.zero_grad();
  {
    ad::Tape tape;
    ad::Var loss = fn(tape, store);
    if (loss.numel() != 1) {
      throw DimensionError("gradcheck: loss must be scalar, got " + shape_to_string(loss.shape()));
    }
    if (!std::isfinite(loss.value()[0])) {
      throw NumericError("gradcheck: non-finite loss; first non-finite value from op '" +
                         tape.first_nonfinite().value_or("unknown") + "'");
    }
    tape.backward(loss);
  }

  GradcheckResult result;
  const double h = options.step;
  const double f0 = options.kink_aware ? evaluate(fn, store) : 0.0;
  for (auto& [name, entry] : store) {
    const std::size_t n = entry.value.numel();
    std::size_t stride = 1;
    if (options.max_coords_per_entry && n > options.max_coords_per_entry) {
      stride = (n + options.max_coords_per_entry - 1) / options.max_coords_per_entry;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      const double original = entry.value[i];
      entry.value[i] = original + h;
      const double fp = evaluate(fn, store);
      entry.value[i] = original - h;
      const double fm = evaluate(fn, store);
      entry.value[i] = original;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = entry.grad[i];
      double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      if (options.kink_aware && err > options.kink_refine) {
        entry.value[i] = original + 0.5 * h;
        const double fph = evaluate(fn, store);
        entry.value[i] = original - 0.5 * h;
        const double fmh = evaluate(fn, store);
        entry.value[i] = original;
        const double fwd = (-3.0 * f0 + 4.0 * fph - fp) / h;
        const double bwd = (3.0 * f0 - 4.0 * fmh + fm) / h;
        const double best = std::min(std::abs(analytic - fwd) / std::max(1.0, std::abs(fwd)),
                                     std::abs(analytic - bwd) / std::max(1.0, std::abs(bwd)));
        if (best * 10.0 < err) ++result.kinks;
        err = std::min(err, best);
      }
      ++result.coordinates_checked;
      if (err > result.max_rel_error || result.worst_param.empty()) {
        if (err >= result.max_rel_error) {
          result.max_rel_error = err;
          result.worst_param = name;
          result.worst_index = i;
          result.analytic = analytic;
          result.numeric = numeric;
        }
      }
    }
  }
  return result;
}

double gradcheck(const ScalarFn& fn, ParamStore& store, double step) {
  GradcheckOptions options;
  options.step = step;
  return gradcheck_detailed(fn, store, options).max_rel_error;
}

}  // namespace sdf
