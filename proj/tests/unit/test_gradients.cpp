// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

// 64-bit build: analytic gradients against central differences.

#include <cstdio>

#include "ape/error.hpp"
#include "ape/ops.hpp"
#include "doctest.h"
#include "support/fixtures.hpp"

using namespace ape;

static_assert(kRealIsF64, "this suite runs in 64-bit mode");

namespace {

constexpr double kTol = 1e-7;
constexpr double kEps = 1e-5;

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = rng.normal();
  return t;
}

// Scalar probe: L = <op(x), seed>. Checks d/dx and d/dparams.
double probe(Tape& tape, Var out, const Tensor& seed) {
  const Tensor& v = tape.value(out);
  double s = 0;
  for (std::size_t i = 0; i < v.numel(); ++i) s += v[i] * seed[i];
  return s;
}

}  // namespace

TEST_CASE("affine and gelu gradients") {
  Rng rng(1);
  Parameter x("x", random_tensor({3, 2, 5}, rng)), w("w", random_tensor({5, 4}, rng)),
      b("b", random_tensor({4}, rng));
  const Tensor seed = random_tensor({3, 2, 4}, rng);
  auto build = [&](Tape& t) { return gelu(t, affine(t, t.parameter(x), t.parameter(w), t.parameter(b))); };
  {
    Tape t;
    t.backward(build(t), seed);
  }
  auto f = [&] {
    Tape t;
    return probe(t, build(t), seed);
  };
  for (Parameter* p : {&x, &w, &b}) {
    const Tensor g = p->grad;
    CHECK(finite_difference_check(f, p->value, g, kEps).max_rel_error < kTol);
  }
}

TEST_CASE("masked mean, lookup mean and normalize gradients") {
  Rng rng(2);
  Parameter x("x", random_tensor({2, 3, 4}, rng)), table("t", random_tensor({6, 4}, rng));
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 1, 0};
  const std::vector<std::vector<std::uint32_t>> ids{{0, 5, 5}, {2}};
  const Tensor seed = random_tensor({2, 4}, rng);
  auto build = [&](Tape& t) {
    Var a = masked_mean(t, t.parameter(x), mask);
    Var c = lookup_mean(t, t.parameter(table), ids);
    // Sum through affine with identity-ish weights keeps it one graph.
    Var s = affine(t, a, t.constant(Tensor::matrix({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}})),
                   t.constant(Tensor::vector({0, 0, 0, 0})));
    (void)c;
    return std::pair{normalize_rows(t, s), normalize_rows(t, c)};
  };
  {
    Tape t;
    auto [u, v] = build(t);
    const std::vector<std::pair<Var, const Tensor*>> seeds{{u, &seed}, {v, &seed}};
    t.backward(seeds);
  }
  auto f = [&] {
    Tape t;
    auto [u, v] = build(t);
    return probe(t, u, seed) + probe(t, v, seed);
  };
  for (Parameter* p : {&x, &table}) {
    const Tensor g = p->grad;
    CHECK(finite_difference_check(f, p->value, g, kEps).max_rel_error < kTol);
  }
  // Masked positions get exactly zero gradient.
  CHECK(x.grad[1 * 4 + 0] == 0);
  CHECK(x.grad[5 * 4 + 3] == 0);
}

TEST_CASE("contrastive loss gradients w.r.t. embeddings and log scale") {
  Rng rng(3);
  for (std::size_t B : {2u, 5u, 8u}) {
    Parameter img("img", normalized_rows(random_tensor({B, 6}, rng)));
    Parameter txt("txt", normalized_rows(random_tensor({B, 6}, rng)));
    Parameter ls("ls", Tensor::scalar(1.3));
    {
      Tape t;
      t.backward(contrastive_loss(t, t.parameter(img), t.parameter(txt), t.parameter(ls)));
    }
    auto f = [&] { return contrastive_loss_value(img.value, txt.value, ls.value[0]); };
    for (Parameter* p : {&img, &txt, &ls}) {
      const Tensor g = p->grad;
      CHECK(finite_difference_check(f, p->value, g, kEps).max_rel_error < kTol);
    }
  }
}

TEST_CASE("full pipeline on a random 8-sample batch, D=8") {
  const ShardDims dims{8, 8, 4, 1};
  const auto shard = fixtures::random_shard(dims, 8, 17);
  const Batch batch = fixtures::whole_batch(shard);
  HeadConfig h;
  h.d_img = 8;
  h.d_out = 8;
  h.text_widths = mlp_widths(8, 8, 8, 2);
  h.image_widths = mlp_widths(8, 8, 8, 1);
  AlignmentModel model(h);
  model.init(4);
  fixtures::spread_parameters(model, 5);
  const double err = fixtures::pipeline_grad_error(model, batch, kEps);
  MESSAGE("max relative error " << err);
  CHECK(err < kTol);
}
