// Copyright 2026 The APE Toolkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "ape/error.hpp"
#include "ape/gradcheck.hpp"
#include "ape/ops.hpp"
#include "ape/parallel.hpp"
#include "ape/rng.hpp"
#include "ape/tape.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace ape;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = static_cast<real>(scale * rng.normal());
  return t;
}

oracle::Mat to_mat(const Tensor& t) {
  oracle::Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.row(r)[c];
  return m;
}

Tensor run_affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tape tape;
  return tape.value(affine(tape, tape.constant(x), tape.constant(w), tape.constant(b)));
}

}  // namespace

TEST_CASE("affine worked examples") {
  CHECK(run_affine(Tensor::matrix({{1, 2}}), Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0, 0})) ==
        Tensor::matrix({{1, 2}}));
  CHECK(run_affine(Tensor::matrix({{1, 2}}), Tensor::matrix({{0, 0}, {0, 0}}), Tensor::vector({3, 4})) ==
        Tensor::matrix({{3, 4}}));
  CHECK(run_affine(Tensor::matrix({{1, 1}}), Tensor::matrix({{2, 0}, {0, 3}}), Tensor::vector({1, 1})) ==
        Tensor::matrix({{3, 4}}));
}

TEST_CASE("affine rejects mismatched shapes") {
  CHECK_THROWS_AS(run_affine(Tensor::matrix({{1, 2, 3}}), Tensor::matrix({{1, 0}, {0, 1}}),
                             Tensor::vector({0, 0})),
                  DimensionError);
  CHECK_THROWS_AS(run_affine(Tensor::matrix({{1, 2}}), Tensor::matrix({{1, 0}, {0, 1}}),
                             Tensor::vector({0, 0, 0})),
                  DimensionError);
}

TEST_CASE("affine matches a naive product on random shapes") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + rng.index(9), di = 1 + rng.index(9), d = 1 + rng.index(9);
    const Tensor x = random_tensor({n, di}, rng), w = random_tensor({di, d}, rng), b = random_tensor({d}, rng);
    const Tensor y = run_affine(x, w, b);
    const auto ref = oracle::matmul_bias(to_mat(x), to_mat(w.reshaped({di, d})),
                                         std::vector<double>(b.data().begin(), b.data().end()));
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) CHECK(y.row(r)[c] == doctest::Approx(ref[r][c]).epsilon(1e-5));
  }
}

TEST_CASE("affine is linear in x: f(ax + by) - b0 = a(f(x) - b0) + b(f(y) - b0)") {
  Rng rng(5);
  const Tensor w = random_tensor({4, 3}, rng), bias = random_tensor({3}, rng);
  const Tensor x = random_tensor({2, 4}, rng), y = random_tensor({2, 4}, rng);
  const real a = real(0.7), c = real(-1.3);
  Tensor mix({2, 4});
  for (std::size_t i = 0; i < mix.numel(); ++i) mix[i] = a * x[i] + c * y[i];
  const Tensor zero_b({3});
  const Tensor fx = run_affine(x, w, zero_b), fy = run_affine(y, w, zero_b), fm = run_affine(mix, w, zero_b);
  for (std::size_t i = 0; i < fm.numel(); ++i) CHECK(fm[i] == doctest::Approx(a * fx[i] + c * fy[i]).epsilon(1e-5));
  // With the bias: f(x) - b is what is linear.
  const Tensor gx = run_affine(x, w, bias);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t o = 0; o < 3; ++o) CHECK(gx.row(r)[o] - bias[o] == doctest::Approx(fx.row(r)[o]).epsilon(1e-5));
}

TEST_CASE("gelu values") {
  CHECK(gelu_value(0) == 0);
  CHECK(gelu_value(10) == doctest::Approx(10).epsilon(1e-6));
  CHECK(gelu_value(1) == doctest::Approx(0.841192).epsilon(1e-6));
  for (double x = -6; x <= 6; x += 0.37) CHECK(gelu_value(real(x)) == doctest::Approx(oracle::gelu(x)).epsilon(1e-6));
}

TEST_CASE("gelu derivative matches central differences of the oracle") {
  for (double x = -5; x <= 5; x += 0.25) {
    const double h = 1e-5;
    const double fd = (oracle::gelu(x + h) - oracle::gelu(x - h)) / (2 * h);
    CHECK(gelu_derivative(real(x)) == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("masked mean ignores masked positions") {
  Tape tape;
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  const std::vector<std::uint8_t> mask{1, 0};
  const Tensor y = tape.value(masked_mean(tape, tape.constant(x), mask));
  CHECK(y == Tensor::matrix({{1, 2}}));
}

TEST_CASE("masked mean with an all-masked row is an error") {
  Tape tape;
  const Tensor x({1, 2, 2});
  const std::vector<std::uint8_t> mask{0, 0};
  CHECK_THROWS_AS(masked_mean(tape, tape.constant(x), mask), ConfigError);
}

TEST_CASE("lookup mean averages table rows") {
  Tape tape;
  Parameter table("t", Tensor::matrix({{1, 0}, {0, 1}, {2, 2}}));
  const std::vector<std::vector<std::uint32_t>> ids{{0, 1}, {2}};
  const Tensor y = tape.value(lookup_mean(tape, tape.parameter(table), ids));
  CHECK(y == Tensor::matrix({{0.5, 0.5}, {2, 2}}));
}

TEST_CASE("normalize rows") {
  CHECK(normalized_rows(Tensor::matrix({{3, 4}})) == Tensor::matrix({{real(0.6), real(0.8)}}));
  Tape tape;
  CHECK_THROWS_AS(normalize_rows(tape, tape.constant(Tensor::matrix({{0, 0}}))), NumericError);
}

TEST_CASE("results do not depend on the thread count") {
  Rng rng(3);
  const Tensor x = random_tensor({300, 40}, rng), w = random_tensor({40, 33}, rng), b = random_tensor({33}, rng);
  auto grads = [&] {
    Tape tape;
    Parameter pw("w", w), pb("b", b);
    Var y = gelu(tape, affine(tape, tape.constant(x), tape.parameter(pw), tape.parameter(pb)));
    Tensor seed(tape.value(y).shape(), real(1));
    for (std::size_t i = 0; i < seed.numel(); ++i) seed[i] = real(std::sin(double(i)));
    Tensor out = tape.value(y);
    tape.backward(y, seed);
    return std::make_tuple(out, pw.grad, pb.grad);
  };
  set_num_threads(1);
  const auto one = grads();
  set_num_threads(4);
  const auto four = grads();
  set_num_threads(1);
  CHECK(std::get<0>(one) == std::get<0>(four));
  CHECK(std::get<1>(one) == std::get<1>(four));
  CHECK(std::get<2>(one) == std::get<2>(four));
}

TEST_CASE("parallel_for covers the range exactly once") {
  set_num_threads(3);
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 7, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) ++hits[i];
  });
  set_num_threads(1);
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
}

TEST_CASE("backward runs closures in reverse creation order") {
  Tape tape;
  Parameter w("w", Tensor::matrix({{1, 2}, {3, 4}})), b("b", Tensor::vector({0, 0}));
  Var x = tape.constant(Tensor::matrix({{1, 1}}));
  Var h = affine(tape, x, tape.parameter(w), tape.parameter(b));
  Var g = gelu(tape, h);
  Var n = normalize_rows(tape, g);
  tape.backward(n, Tensor::matrix({{1, 0}}));
  const auto& order = tape.backward_order();
  REQUIRE(order.size() == 3);
  CHECK(order[0] == n.id);
  CHECK(order[1] == g.id);
  CHECK(order[2] == h.id);
  CHECK_THROWS(tape.backward(n, Tensor::matrix({{1, 0}})));
}

TEST_CASE("gradient accumulates when a value is used twice") {
  Tape tape;
  Parameter w("w", Tensor::matrix({{2}})), b("b", Tensor::vector({0}));
  Var x = tape.constant(Tensor::matrix({{3}}));
  Var pw = tape.parameter(w);
  Var y1 = affine(tape, x, pw, tape.parameter(b));
  Var y2 = affine(tape, y1, pw, tape.parameter(b));  // y2 = 3 w^2
  tape.backward(y2);
  CHECK(w.grad[0] == doctest::Approx(12));  // d(3w^2)/dw = 6w
  CHECK(b.grad[0] == doctest::Approx(3));   // d(w(3w + b) + b)/db = w + 1
}

TEST_CASE("finite difference check examples") {
  Tensor theta = Tensor::vector({3});
  auto f = [&] { return double(theta[0]) * double(theta[0]); };
  const auto r = finite_difference_check(f, theta, Tensor::vector({6}), 1e-4);
  CHECK(r.max_rel_error < (kRealIsF64 ? 1e-6 : 1e-3));
  CHECK(theta[0] == 3);  // restored

  Tensor p = Tensor::vector({1, 2, 3});
  const auto c = finite_difference_check([] { return 5.0; }, p, Tensor({3}), 1e-4);
  CHECK(c.max_rel_error == 0);
}

TEST_CASE("tensor helpers") {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  CHECK(slice_rows(m, 1, 3) == Tensor::matrix({{3, 4}, {5, 6}}));
  const std::vector<Tensor> parts{slice_rows(m, 0, 1), slice_rows(m, 1, 3)};
  CHECK(concat_rows(parts) == m);
  CHECK(l2_norm(Tensor::vector({3, 4}).data()) == 5.0);
  Tensor bad = Tensor::vector({1, std::nanf("")});
  CHECK_THROWS_AS(check_finite(bad, "x"), NumericError);
  CHECK_THROWS(m.reshaped({4}));
}
