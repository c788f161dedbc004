// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ape/error.hpp"
#include "ape/real.hpp"

APE_BEGIN_NAMESPACE

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of `real`. Shapes are explicit; there is no
/// broadcasting anywhere in the kernel besides the bias add in `affine`.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, real fill = real(0));
  Tensor(Shape shape, std::vector<real> data);

  /// Convenience for tests: a 2-D tensor from nested rows.
  static Tensor matrix(std::initializer_list<std::initializer_list<real>> rows);
  static Tensor vector(std::initializer_list<real> values);
  static Tensor scalar(real value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Size of the last axis; every leading axis is folded into `rows()`.
  std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const noexcept { return cols() == 0 ? 0 : numel() / cols(); }

  std::span<real> data() noexcept { return data_; }
  std::span<const real> data() const noexcept { return data_; }
  real* row(std::size_t r) noexcept { return data_.data() + r * cols(); }
  const real* row(std::size_t r) const noexcept { return data_.data() + r * cols(); }

  real& operator[](std::size_t i) noexcept { return data_[i]; }
  real operator[](std::size_t i) const noexcept { return data_[i]; }
  real item() const;

  void fill(real value);
  /// Same data viewed under a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<real> data_;
};

/// Throws NumericError naming `what` and the first offending index.
void check_finite(const Tensor& t, std::string_view what);
bool all_finite(std::span<const real> values) noexcept;

/// Rows [begin, end) of a tensor whose leading axis indexes samples.
Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end);
/// Concatenation along the leading axis.
Tensor concat_rows(std::span<const Tensor> parts);

double l2_norm(std::span<const real> v) noexcept;

APE_END_NAMESPACE
