// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

APE_BEGIN_NAMESPACE

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, real fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<real> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape_) + " needs " +
                         std::to_string(shape_numel(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<real>> rows) {
  std::vector<real> data;
  const std::size_t n_cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != n_cols) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), n_cols}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<real> values) {
  return Tensor({values.size()}, std::vector<real>(values));
}

Tensor Tensor::scalar(real value) { return Tensor({1}, std::vector<real>{value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(shape_));
  }
  return shape_[axis];
}

real Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_to_string(shape_));
  }
  return data_[0];
}

void Tensor::fill(real value) { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot reshape " + shape_to_string(shape_) + " to " +
                         shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool all_finite(std::span<const real> values) noexcept {
  return std::all_of(values.begin(), values.end(), [](real v) { return std::isfinite(v); });
}

void check_finite(const Tensor& t, std::string_view what) {
  const auto data = t.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      std::ostringstream os;
      os << "non-finite value " << data[i] << " in " << what << " at flat index " << i
         << " (shape " << shape_to_string(t.shape()) << ")";
      throw NumericError(os.str());
    }
  }
}

Tensor slice_rows(const Tensor& t, std::size_t begin, std::size_t end) {
  if (t.rank() == 0 || begin > end || end > t.dim(0)) {
    throw RangeError("row slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for shape " + shape_to_string(t.shape()));
  }
  Shape shape = t.shape();
  const std::size_t stride = t.numel() / shape[0];
  shape[0] = end - begin;
  std::vector<real> data(t.data().begin() + static_cast<std::ptrdiff_t>(begin * stride),
                         t.data().begin() + static_cast<std::ptrdiff_t>(end * stride));
  return Tensor(std::move(shape), std::move(data));
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  Shape shape = parts.front().shape();
  std::size_t lead = 0;
  std::vector<real> data;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw DimensionError("concat_rows: shape " + shape_to_string(p.shape()) +
                           " incompatible with " + shape_to_string(shape));
    }
    lead += p.dim(0);
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  shape[0] = lead;
  return Tensor(std::move(shape), std::move(data));
}

double l2_norm(std::span<const real> v) noexcept {
  double s = 0;
  for (real x : v) s += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(s);
}

APE_END_NAMESPACE
