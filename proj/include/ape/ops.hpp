// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ape/tape.hpp"

APE_BEGIN_NAMESPACE

/// out[..., :] = x[..., :] · w + b over every leading position of x.
/// w is [d_in x d_out], b is [d_out].
Var affine(Tape& tape, Var x, Var w, Var b);

/// Elementwise GELU, tanh approximation.
Var gelu(Tape& tape, Var x);
real gelu_value(real x) noexcept;
real gelu_derivative(real x) noexcept;

/// Mean over the valid positions of x [B x T x D] where mask is B*T bytes of
/// 0/1. Rows with no valid position are a precondition failure.
Var masked_mean(Tape& tape, Var x, std::span<const std::uint8_t> mask);

/// Mean of `table` rows selected by each sequence's token ids -> [B x D].
Var lookup_mean(Tape& tape, Var table, const std::vector<std::vector<std::uint32_t>>& token_ids);

/// Divides every row of a [B x D] tensor by its L2 norm.
Var normalize_rows(Tape& tape, Var x);

/// Plain (tape-free) row normalization used by evaluation and tests.
Tensor normalized_rows(const Tensor& x);

namespace kernels {
// y[n x o] = x[n x i] · w[i x o] (+ bias[o] when non-null)
void matmul_bias(const real* x, const real* w, const real* bias, real* y, std::size_t n,
                 std::size_t d_in, std::size_t d_out);
// dx[n x i] += dy[n x o] · w^T
void matmul_dx(const real* dy, const real* w, real* dx, std::size_t n, std::size_t d_in,
               std::size_t d_out);
// dw[i x o] += x^T · dy, reduction over n in index order
void matmul_dw(const real* x, const real* dy, real* dw, std::size_t n, std::size_t d_in,
               std::size_t d_out);
}  // namespace kernels

APE_END_NAMESPACE
