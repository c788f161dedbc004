// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/gradcheck.hpp"

#include <cmath>

APE_BEGIN_NAMESPACE

GradCheckResult finite_difference_check(const std::function<double()>& f, Tensor& param,
                                        const Tensor& analytic, double eps) {
  if (!(eps > 0)) throw RangeError("finite_difference_check: eps must be positive");
  if (analytic.shape() != param.shape()) {
    throw DimensionError("finite_difference_check: gradient " +
                         shape_to_string(analytic.shape()) + " vs parameter " +
                         shape_to_string(param.shape()));
  }
  check_finite(analytic, "analytic gradient");
  GradCheckResult result;
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const real saved = param[i];
    // Divide by the step actually taken; in 32-bit mode saved +- eps rounds.
    param[i] = static_cast<real>(saved + eps);
    const double hi = param[i];
    const double up = f();
    param[i] = static_cast<real>(saved - eps);
    const double lo = param[i];
    const double down = f();
    param[i] = saved;
    const double numeric = (up - down) / (hi - lo);
    if (!std::isfinite(numeric)) {
      throw NumericError("finite_difference_check: non-finite difference at index " +
                         std::to_string(i));
    }
    const double a = analytic[i];
    const double err = std::abs(a - numeric) / (std::abs(numeric) + 1e-8);
    if (i == 0 || err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_index = i;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

APE_END_NAMESPACE
