// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ape/tape.hpp"

#include <algorithm>

APE_BEGIN_NAMESPACE

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw RangeError("invalid tape variable " + std::to_string(v.id));
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  if (v.id >= nodes_.size()) throw RangeError("invalid tape variable " + std::to_string(v.id));
  return nodes_[v.id];
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant_ref(const Tensor& value) {
  Node n;
  n.borrowed = &value;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.borrowed = &p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, BackwardFn fn) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = static_cast<bool>(fn);
  n.fn = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const { return node(v).value(); }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

const Tensor& Tape::grad(Var v) const { return node(v).grad; }

Tensor& Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (n.grad.empty() && n.value().numel() > 0) n.grad = Tensor(n.value().shape());
  return n.grad;
}

void Tape::backward(Var root) {
  if (value(root).numel() != 1) {
    throw DimensionError("backward(root) needs a single-element root, got shape " +
                         shape_to_string(value(root).shape()));
  }
  backward(root, Tensor(value(root).shape(), real(1)));
}

void Tape::backward(Var root, const Tensor& seed) {
  const std::pair<Var, const Tensor*> one[] = {{root, &seed}};
  backward(one);
}

void Tape::backward(std::span<const std::pair<Var, const Tensor*>> seeds) {
  if (backward_done_) throw ConfigError("backward already ran on this tape");
  backward_done_ = true;
  std::size_t last = 0;
  bool any = false;
  for (const auto& [root, seed] : seeds) {
    if (seed->shape() != value(root).shape()) {
      throw DimensionError("backward seed shape " + shape_to_string(seed->shape()) +
                           " does not match root " + shape_to_string(value(root).shape()));
    }
    if (!requires_grad(root)) continue;
    Tensor& g = grad_buffer(root);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] += (*seed)[i];
    last = std::max(last, root.id);
    any = true;
  }
  backward_order_.clear();
  if (!any) return;

  for (std::size_t i = last + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.fn) {
      backward_order_.push_back(i);
      n.fn(*this, Var{i});
    }
  }
  for (Node& n : nodes_) {
    if (!n.param || n.grad.empty()) continue;
    Tensor& dst = n.param->grad;
    if (dst.shape() != n.grad.shape()) dst = Tensor(n.grad.shape());
    for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += n.grad[i];
  }
}

APE_END_NAMESPACE
