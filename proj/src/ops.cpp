// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/ops.hpp"

#include <cmath>
#include <numbers>

#include "ape/parallel.hpp"

APE_BEGIN_NAMESPACE

namespace kernels {

void matmul_bias(const real* x, const real* w, const real* bias, real* y, std::size_t n,
                 std::size_t d_in, std::size_t d_out) {
  parallel_for(n, 64, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      real* yr = y + r * d_out;
      const real* xr = x + r * d_in;
      for (std::size_t o = 0; o < d_out; ++o) yr[o] = bias ? bias[o] : real(0);
      for (std::size_t i = 0; i < d_in; ++i) {
        const real xi = xr[i];
        const real* wi = w + i * d_out;
        for (std::size_t o = 0; o < d_out; ++o) yr[o] += xi * wi[o];
      }
    }
  });
}

void matmul_dx(const real* dy, const real* w, real* dx, std::size_t n, std::size_t d_in,
               std::size_t d_out) {
  // Transposed copy so the inner loop is a contiguous axpy.
  std::vector<real> wt(d_in * d_out);
  for (std::size_t i = 0; i < d_in; ++i) {
    for (std::size_t o = 0; o < d_out; ++o) wt[o * d_in + i] = w[i * d_out + o];
  }
  parallel_for(n, 64, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      real* dxr = dx + r * d_in;
      const real* dyr = dy + r * d_out;
      for (std::size_t o = 0; o < d_out; ++o) {
        const real g = dyr[o];
        const real* wo = wt.data() + o * d_in;
        for (std::size_t i = 0; i < d_in; ++i) dxr[i] += g * wo[i];
      }
    }
  });
}

void matmul_dw(const real* x, const real* dy, real* dw, std::size_t n, std::size_t d_in,
               std::size_t d_out) {
  // Split over rows of dw so every element keeps the same reduction order.
  parallel_for(d_in, 8, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = 0; r < n; ++r) {
      const real* xr = x + r * d_in;
      const real* dyr = dy + r * d_out;
      for (std::size_t i = begin; i < end; ++i) {
        const real xi = xr[i];
        real* dwi = dw + i * d_out;
        for (std::size_t o = 0; o < d_out; ++o) dwi[o] += xi * dyr[o];
      }
    }
  });
}

}  // namespace kernels

Var affine(Tape& tape, Var x, Var w, Var b) {
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  const Tensor& bv = tape.value(b);
  if (wv.rank() != 2 || xv.rank() == 0 || xv.cols() != wv.dim(0) || bv.rank() != 1 ||
      bv.dim(0) != wv.dim(1)) {
    throw DimensionError("affine: x " + shape_to_string(xv.shape()) + ", W " +
                         shape_to_string(wv.shape()) + ", b " + shape_to_string(bv.shape()));
  }
  const std::size_t n = xv.rows();
  const std::size_t d_in = wv.dim(0);
  const std::size_t d_out = wv.dim(1);
  Shape out_shape = xv.shape();
  out_shape.back() = d_out;
  Tensor out(out_shape);
  kernels::matmul_bias(xv.data().data(), wv.data().data(), bv.data().data(), out.data().data(),
                       n, d_in, d_out);

  Tape::BackwardFn fn;
  if (tape.requires_grad(x) || tape.requires_grad(w) || tape.requires_grad(b)) {
    fn = [x, w, b, n, d_in, d_out](Tape& t, Var self) {
      const Tensor& dy = t.grad(self);
      if (t.requires_grad(x)) {
        kernels::matmul_dx(dy.data().data(), t.value(w).data().data(),
                           t.grad_buffer(x).data().data(), n, d_in, d_out);
      }
      if (t.requires_grad(w)) {
        kernels::matmul_dw(t.value(x).data().data(), dy.data().data(),
                           t.grad_buffer(w).data().data(), n, d_in, d_out);
      }
      if (t.requires_grad(b)) {
        real* db = t.grad_buffer(b).data().data();
        for (std::size_t r = 0; r < n; ++r) {
          const real* dyr = dy.row(r);
          for (std::size_t o = 0; o < d_out; ++o) db[o] += dyr[o];
        }
      }
    };
  }
  return tape.record(std::move(out), std::move(fn));
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

real gelu_value(real x) noexcept {
  const real inner = real(kGeluC) * (x + real(kGeluA) * x * x * x);
  return real(0.5) * x * (real(1) + std::tanh(inner));
}

real gelu_derivative(real x) noexcept {
  const real inner = real(kGeluC) * (x + real(kGeluA) * x * x * x);
  const real t = std::tanh(inner);
  const real d_inner = real(kGeluC) * (real(1) + real(3 * kGeluA) * x * x);
  return real(0.5) * (real(1) + t) + real(0.5) * x * (real(1) - t * t) * d_inner;
}

Var gelu(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) out[i] = gelu_value(xv[i]);
  Tape::BackwardFn fn;
  if (tape.requires_grad(x)) {
    fn = [x](Tape& t, Var self) {
      const Tensor& xv = t.value(x);
      const Tensor& dy = t.grad(self);
      Tensor& dx = t.grad_buffer(x);
      for (std::size_t i = 0; i < xv.numel(); ++i) dx[i] += dy[i] * gelu_derivative(xv[i]);
    };
  }
  return tape.record(std::move(out), std::move(fn));
}

Var masked_mean(Tape& tape, Var x, std::span<const std::uint8_t> mask) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 3 || mask.size() != xv.dim(0) * xv.dim(1)) {
    throw DimensionError("masked_mean: x " + shape_to_string(xv.shape()) + " with mask of " +
                         std::to_string(mask.size()) + " entries");
  }
  const std::size_t batch = xv.dim(0);
  const std::size_t seq = xv.dim(1);
  const std::size_t d = xv.dim(2);
  std::vector<real> inv_count(batch);
  Tensor out({batch, d});
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t count = 0;
    real* o = out.row(b);
    for (std::size_t t = 0; t < seq; ++t) {
      if (!mask[b * seq + t]) continue;
      ++count;
      const real* xr = xv.data().data() + (b * seq + t) * d;
      for (std::size_t k = 0; k < d; ++k) o[k] += xr[k];
    }
    if (count == 0) {
      throw ConfigError("masked_mean: row " + std::to_string(b) + " has no valid positions");
    }
    inv_count[b] = real(1) / static_cast<real>(count);
    for (std::size_t k = 0; k < d; ++k) o[k] *= inv_count[b];
  }
  Tape::BackwardFn fn;
  if (tape.requires_grad(x)) {
    fn = [x, m = std::vector<std::uint8_t>(mask.begin(), mask.end()), inv_count, seq, d](
             Tape& t, Var self) {
      const Tensor& dy = t.grad(self);
      Tensor& dx = t.grad_buffer(x);
      for (std::size_t b = 0; b < inv_count.size(); ++b) {
        const real* g = dy.row(b);
        for (std::size_t s = 0; s < seq; ++s) {
          if (!m[b * seq + s]) continue;
          real* dxr = dx.data().data() + (b * seq + s) * d;
          for (std::size_t k = 0; k < d; ++k) dxr[k] += g[k] * inv_count[b];
        }
      }
    };
  }
  return tape.record(std::move(out), std::move(fn));
}

Var lookup_mean(Tape& tape, Var table, const std::vector<std::vector<std::uint32_t>>& token_ids) {
  const Tensor& tv = tape.value(table);
  if (tv.rank() != 2) {
    throw DimensionError("lookup_mean: table must be 2-D, got " + shape_to_string(tv.shape()));
  }
  const std::size_t vocab = tv.dim(0);
  const std::size_t d = tv.dim(1);
  Tensor out({token_ids.size(), d});
  for (std::size_t b = 0; b < token_ids.size(); ++b) {
    const auto& ids = token_ids[b];
    if (ids.empty()) {
      throw ConfigError("lookup_mean: sequence " + std::to_string(b) + " has no tokens");
    }
    real* o = out.row(b);
    for (auto id : ids) {
      if (id >= vocab) {
        throw RangeError("lookup_mean: token id " + std::to_string(id) + " >= vocab size " +
                         std::to_string(vocab));
      }
      const real* r = tv.row(id);
      for (std::size_t k = 0; k < d; ++k) o[k] += r[k];
    }
    const real inv = real(1) / static_cast<real>(ids.size());
    for (std::size_t k = 0; k < d; ++k) o[k] *= inv;
  }
  Tape::BackwardFn fn;
  if (tape.requires_grad(table)) {
    fn = [table, token_ids, d](Tape& t, Var self) {
      const Tensor& dy = t.grad(self);
      Tensor& dt = t.grad_buffer(table);
      for (std::size_t b = 0; b < token_ids.size(); ++b) {
        const real inv = real(1) / static_cast<real>(token_ids[b].size());
        const real* g = dy.row(b);
        for (auto id : token_ids[b]) {
          real* r = dt.row(id);
          for (std::size_t k = 0; k < d; ++k) r[k] += g[k] * inv;
        }
      }
    };
  }
  return tape.record(std::move(out), std::move(fn));
}

Var normalize_rows(Tape& tape, Var x) {
  const Tensor& xv = tape.value(x);
  if (xv.rank() != 2) {
    throw DimensionError("normalize_rows: expected 2-D input, got " +
                         shape_to_string(xv.shape()));
  }
  const std::size_t rows = xv.dim(0);
  const std::size_t d = xv.dim(1);
  std::vector<real> inv_norm(rows);
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double norm = l2_norm(std::span<const real>(xv.row(r), d));
    if (!(norm > 0) || !std::isfinite(norm)) {
      throw NumericError("normalize_rows: row " + std::to_string(r) + " has norm " +
                         std::to_string(norm));
    }
    inv_norm[r] = static_cast<real>(1.0 / norm);
    for (std::size_t k = 0; k < d; ++k) out.row(r)[k] = xv.row(r)[k] * inv_norm[r];
  }
  Tape::BackwardFn fn;
  if (tape.requires_grad(x)) {
    fn = [x, inv_norm, d](Tape& t, Var self) {
      // dx = (dy - y <y, dy>) / |x|
      const Tensor& y = t.value(self);
      const Tensor& dy = t.grad(self);
      Tensor& dx = t.grad_buffer(x);
      for (std::size_t r = 0; r < inv_norm.size(); ++r) {
        const real* yr = y.row(r);
        const real* g = dy.row(r);
        double dot = 0;
        for (std::size_t k = 0; k < d; ++k) dot += static_cast<double>(yr[k]) * g[k];
        real* dxr = dx.row(r);
        for (std::size_t k = 0; k < d; ++k) {
          dxr[k] += (g[k] - yr[k] * static_cast<real>(dot)) * inv_norm[r];
        }
      }
    };
  }
  return tape.record(std::move(out), std::move(fn));
}

Tensor normalized_rows(const Tensor& x) {
  Tape tape;
  Var v = normalize_rows(tape, tape.constant_ref(x));
  return tape.value(v);
}

APE_END_NAMESPACE
