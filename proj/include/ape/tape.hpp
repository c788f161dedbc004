// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ape/tensor.hpp"

APE_BEGIN_NAMESPACE

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decay = true;  // false exempts it from decoupled weight decay

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool d = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), decay(d) {}

  void zero_grad() {
    if (grad.shape() != value.shape()) grad = Tensor(value.shape());
    grad.fill(0);
  }
};

/// Handle to a node recorded on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

/// Linear record of executed operations. Each node keeps its forward value
/// and, when any input needs a gradient, a closure that pushes the node's
/// gradient back into its inputs. `backward` walks the nodes strictly in
/// reverse creation order; forward values are never written during backward.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, Var self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Borrowed constant: `value` must outlive the tape.
  Var constant_ref(const Tensor& value);
  /// Leaf whose gradient is added into `p.grad` when backward finishes.
  Var parameter(Parameter& p);
  /// Records an op result. A null `fn` marks it as not requiring a gradient.
  Var record(Tensor value, BackwardFn fn);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  /// Gradient reached so far; empty when nothing flowed into `v`.
  const Tensor& grad(Var v) const;
  /// Zero-initialized on first touch; ops accumulate into it.
  Tensor& grad_buffer(Var v);

  /// Backward from a single-element root with seed 1.
  void backward(Var root);
  /// Backward with an explicit upstream gradient of the root's shape.
  void backward(Var root, const Tensor& seed);
  /// Backward from several roots at once, each with its own upstream
  /// gradient; equivalent to one root that sums <root_i, seed_i>.
  void backward(std::span<const std::pair<Var, const Tensor*>> seeds);

  std::size_t size() const noexcept { return nodes_.size(); }
  /// Node ids whose backward closure ran, in execution order.
  const std::vector<std::size_t>& backward_order() const noexcept { return backward_order_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    BackwardFn fn;
    Parameter* param = nullptr;
    bool requires_grad = false;

    const Tensor& value() const { return borrowed ? *borrowed : owned; }
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  std::vector<std::size_t> backward_order_;
  bool backward_done_ = false;
};

APE_END_NAMESPACE
