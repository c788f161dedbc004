// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

#include "ape/tensor.hpp"

APE_BEGIN_NAMESPACE

struct GradCheckResult {
  double max_rel_error = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
};

/// Compares `analytic` against central differences of `f` taken by nudging
/// each entry of `param` by +-eps (restored afterwards). Relative error per
/// entry is |analytic - numeric| / (|numeric| + 1e-8).
GradCheckResult finite_difference_check(const std::function<double()>& f, Tensor& param,
                                        const Tensor& analytic, double eps);

APE_END_NAMESPACE
