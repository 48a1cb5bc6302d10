/*
 * Copyright 2026 The UCTransNet-cpp Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "test_support.hpp"
#include "uctransnet/errors.hpp"
#include "uctransnet/ops.hpp"

using namespace uct;
using uct::testing::finite_difference_check;
using uct::testing::random_tensor;
using uct::testing::weighted_sum;

namespace {

Tensor<double> T2(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor<double>({r, c}, std::move(v)); }

}  // namespace

TEST_CASE("tensor rejects inconsistent shape and data") {
  CHECK_THROWS_AS(Tensor<float>({2, 2}, std::vector<float>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor<float>({0, 2}), DimensionError);
  Tensor<float> t({2, 3});
  CHECK(t.size() == 6);
  t.at({1, 2}) = 5.0f;
  CHECK(t[5] == 5.0f);
}

TEST_CASE("matmul") {
  Graph<double> g;
  SUBCASE("identity") {
    auto a = g.constant(T2(2, 2, {1, 2, 3, 4}));
    auto id = g.constant(T2(2, 2, {1, 0, 0, 1}));
    CHECK(ops::matmul(id, a).value() == a.value());
  }
  SUBCASE("hand expansion") {
    auto a = g.constant(T2(2, 2, {1, 2, 3, 4}));
    auto b = g.constant(T2(2, 1, {5, 6}));
    auto c = ops::matmul(a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c.value()[0] == 17.0);
    CHECK(c.value()[1] == 39.0);
  }
  SUBCASE("inner extents must agree") {
    auto a = g.constant(Tensor<double>({2, 3}));
    auto b = g.constant(Tensor<double>({2, 3}));
    try {
      ops::matmul(a, b);
      FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("[2x3]") != std::string::npos);
      CHECK(msg.find("by [2x3]") != std::string::npos);
    }
  }
}

TEST_CASE("softmax") {
  Graph<double> g;
  auto s = ops::softmax(g.constant(Tensor<double>({2}, {0.0, 0.0})), 0);
  CHECK(s.value()[0] == doctest::Approx(0.5));
  CHECK(s.value()[1] == doctest::Approx(0.5));

  s = ops::softmax(g.constant(Tensor<double>({2}, {0.0, std::log(3.0)})), 0);
  CHECK(s.value()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s.value()[1] == doctest::Approx(0.75).epsilon(1e-12));

  auto big = ops::softmax(g.constant(Tensor<float>({2}, {1000.f, 1000.f}).cast<double>()), 0);
  CHECK(big.value()[0] == doctest::Approx(0.5));
  Graph<float> gf;
  auto bigf = ops::softmax(gf.constant(Tensor<float>({2}, {1000.f, 1000.f})), 0);
  CHECK(bigf.value()[0] == doctest::Approx(0.5f));

  SUBCASE("slices sum to one and shift invariance (property)") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
      std::uniform_int_distribution<std::size_t> ext(1, 6);
      Shape shape{ext(rng), ext(rng), ext(rng)};
      const std::size_t axis = trial % 3;
      auto x = random_tensor(shape, rng, -20, 20);
      auto shifted = x;
      const double c = 37.5;
      for (auto& v : shifted.storage()) v += c;
      auto y = ops::softmax(g.constant(x), axis).value();
      auto ys = ops::softmax(g.constant(shifted), axis).value();
      for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ys[i]) < 1e-6);
      // sum along axis
      std::size_t outer = 1, inner = 1;
      for (std::size_t a = 0; a < axis; ++a) outer *= shape[a];
      for (std::size_t a = axis + 1; a < 3; ++a) inner *= shape[a];
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) {
          double total = 0;
          for (std::size_t e = 0; e < shape[axis]; ++e) total += y[(o * shape[axis] + e) * inner + i];
          CHECK(std::abs(total - 1.0) < 1e-6);
        }
    }
  }
}

TEST_CASE("instance_norm") {
  Graph<double> g;
  auto flat = ops::instance_norm(g.constant(Tensor<double>({2, 3}, 4.2)));
  for (auto v : flat.value().data()) CHECK(v == 0.0);

  auto y = ops::instance_norm(g.constant(T2(2, 2, {1, 2, 3, 4})));
  const double denom = std::sqrt(1.25 + 1e-5);
  for (int i = 0; i < 4; ++i) CHECK(y.value()[i] == doctest::Approx((i + 1 - 2.5) / denom).epsilon(1e-12));

  SUBCASE("moments on random maps") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      std::uniform_int_distribution<std::size_t> ext(2, 9);
      auto x = random_tensor({ext(rng), ext(rng)}, rng, -5, 5);
      auto out = ops::instance_norm(g.constant(x)).value();
      double m = 0, v = 0;
      for (auto e : out.data()) m += e;
      m /= out.size();
      for (auto e : out.data()) v += (e - m) * (e - m);
      v /= out.size();
      CHECK(std::abs(m) < 1e-6);
      CHECK(std::abs(v - 1.0) < 1e-3);
    }
  }
  CHECK_THROWS_AS(ops::instance_norm(g.constant(Tensor<double>({1, 1}))), DimensionError);
}

TEST_CASE("layer_norm") {
  Graph<double> g;
  auto ones = g.constant(Tensor<double>({3}, 1.0));
  auto zeros = g.constant(Tensor<double>({3}, 0.0));
  auto flat = ops::layer_norm(g.constant(Tensor<double>({2, 3}, 7.0)), 1, ones, zeros);
  for (auto v : flat.value().data()) CHECK(v == 0.0);

  std::mt19937_64 rng(11);
  auto x = g.constant(random_tensor({4, 3}, rng));
  auto base = ops::layer_norm(x, 1, ones, zeros);
  auto twos = g.constant(Tensor<double>({3}, 2.0));
  auto affine = ops::layer_norm(x, 1, twos, ones);
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(affine.value()[i] == doctest::Approx(2 * base.value()[i] + 1).epsilon(1e-12));
  }

  // On a single slice the two normalisations coincide.
  auto row = g.constant(random_tensor({1, 6}, rng, -3, 3));
  auto ln = ops::layer_norm(row, 1, g.constant(Tensor<double>({6}, 1.0)), g.constant(Tensor<double>({6}, 0.0)));
  auto in = ops::instance_norm(row);
  for (std::size_t i = 0; i < 6; ++i) CHECK(ln.value()[i] == doctest::Approx(in.value()[i]).epsilon(1e-12));

  for (int trial = 0; trial < 20; ++trial) {
    auto xr = g.constant(random_tensor({5, 7}, rng, -4, 4));
    auto out = ops::layer_norm(xr, 1, g.constant(Tensor<double>({7}, 1.0)), g.constant(Tensor<double>({7}, 0.0)));
    for (std::size_t r = 0; r < 5; ++r) {
      double m = 0, v = 0;
      for (std::size_t c = 0; c < 7; ++c) m += out.value()[r * 7 + c];
      m /= 7;
      for (std::size_t c = 0; c < 7; ++c) v += std::pow(out.value()[r * 7 + c] - m, 2);
      v /= 7;
      CHECK(std::abs(m) < 1e-6);
      CHECK(std::abs(v - 1.0) < 1e-3);
    }
  }
  CHECK_THROWS_AS(ops::layer_norm(x, 0, ones, zeros), DimensionError);
}

TEST_CASE("conv2d") {
  Graph<double> g;
  std::mt19937_64 rng(5);
  SUBCASE("1x1 kernel is channel mixing") {
    auto x = random_tensor({3, 4, 5}, rng);
    auto w = random_tensor({2, 3, 1, 1}, rng);
    auto y = ops::conv2d(g.constant(x), g.constant(w), std::nullopt, 0);
    auto ref = ops::matmul(g.constant(w.reshaped({2, 3})), g.constant(x.reshaped({3, 20})));
    REQUIRE(y.shape() == Shape{2, 4, 5});
    for (std::size_t i = 0; i < 40; ++i) CHECK(y.value()[i] == doctest::Approx(ref.value()[i]).epsilon(1e-12));
  }
  SUBCASE("all-ones 3x3 on a constant map") {
    const double c = 1.5;
    auto y = ops::conv2d(g.constant(Tensor<double>({1, 6, 6}, c)), g.constant(Tensor<double>({1, 1, 3, 3}, 1.0)),
                         std::nullopt, 1);
    REQUIRE(y.shape() == Shape{1, 6, 6});
    for (std::size_t i = 1; i < 5; ++i)
      for (std::size_t j = 1; j < 5; ++j) CHECK(y.value().at({0, i, j}) == doctest::Approx(9 * c));
    CHECK(y.value().at({0, 0, 0}) == doctest::Approx(4 * c));
  }
  SUBCASE("extent arithmetic") {
    auto y = ops::conv2d(g.constant(Tensor<double>({2, 7, 9})), g.constant(Tensor<double>({3, 2, 3, 3})),
                         std::nullopt, 1, 1);
    CHECK(y.shape() == Shape{3, 7, 9});
    auto s = ops::conv2d(g.constant(Tensor<double>({1, 7, 7})), g.constant(Tensor<double>({1, 1, 3, 3})),
                         std::nullopt, 0, 2);
    CHECK(s.shape() == Shape{1, 3, 3});
    CHECK_THROWS_AS(ops::conv2d(g.constant(Tensor<double>({1, 6, 6})), g.constant(Tensor<double>({1, 1, 3, 3})),
                                std::nullopt, 0, 2),
                    DimensionError);
  }
}

TEST_CASE("upsample, pooling") {
  Graph<double> g;
  auto x = g.constant(Tensor<double>({1, 2, 2}, {1, 2, 3, 4}));
  CHECK(ops::upsample_nearest(x, 1).value() == x.value());
  auto up = ops::upsample_nearest(x, 2);
  REQUIRE(up.shape() == Shape{1, 4, 4});
  const std::vector<double> expect{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  CHECK(up.value().storage() == expect);
  CHECK(ops::avg_pool2d(up, 2).value() == x.value());

  auto gap = ops::global_avg_pool(g.constant(Tensor<double>({2, 2, 2}, {1, 3, 5, 7, 2, 2, 2, 2})));
  CHECK(gap.shape() == Shape{2, 1, 1});
  CHECK(gap.value()[0] == 4.0);
  CHECK(gap.value()[1] == 2.0);

  auto mp = ops::max_pool2d(g.constant(Tensor<double>({1, 2, 4}, {1, 5, 2, 0, 3, 4, 9, 1})), 2);
  CHECK(mp.value().storage() == std::vector<double>{5, 9});
}

TEST_CASE("activations") {
  Graph<double> g;
  auto x = g.constant(Tensor<double>({3}, {-1, 0, 2}));
  CHECK(ops::relu(x).value().storage() == std::vector<double>{0, 0, 2});
  CHECK(ops::sigmoid(x).value()[1] == 0.5);
  CHECK(ops::gelu(x).value()[1] == 0.0);
  CHECK(ops::gelu(x).value()[2] == doctest::Approx(2 * 0.5 * (1 + std::erf(2 / std::numbers::sqrt2))));
}

TEST_CASE("backward basics") {
  ParamStore<double> store;
  auto& p = store.add("x", Tensor<double>({1}, 3.0));
  Graph<double> g;
  auto x = g.param(p);
  g.backward(ops::mul(x, x));
  CHECK(p.grad[0] == doctest::Approx(6.0));

  Graph<double> g2;
  auto v = g2.param(p);
  CHECK_THROWS_AS(g2.backward(ops::add(ops::concat(std::vector{v, v}, 0), ops::concat(std::vector{v, v}, 0))),
                  ContractError);

  Graph<double> g3;
  auto zero = g3.constant(Tensor<double>({1}, 0.0));
  CHECK_THROWS_AS(ops::div(g3.constant(Tensor<double>({1}, 1.0)), zero), NumericError);
}

TEST_CASE("softmax cross-entropy gradient equals p - onehot") {
  std::mt19937_64 rng(21);
  ParamStore<double> store;
  auto& logits = store.add("logits", random_tensor({5}, rng, -2, 2));
  Tensor<double> onehot({5});
  onehot[3] = 1.0;
  Graph<double> g;
  auto z = g.param(logits);
  auto loss = ops::scale(ops::sum(ops::mul(ops::log_softmax(z, 0), g.constant(onehot))), -1.0);
  g.backward(loss);
  auto p = ops::softmax(g.constant(logits.value), 0).value();
  for (std::size_t i = 0; i < 5; ++i) CHECK(logits.grad[i] == doctest::Approx(p[i] - onehot[i]).epsilon(1e-12));

  auto fd = finite_difference_check(
      [&](Graph<double>& gg, const std::vector<Var<double>>& in) {
        return ops::scale(ops::sum(ops::mul(ops::log_softmax(in[0], 0), gg.constant(onehot))), -1.0);
      },
      {logits.value});
  CHECK(fd.max_rel < 1e-4);
}

TEST_CASE("every primitive passes the finite-difference oracle") {
  std::mt19937_64 rng(1234);
  using In = std::vector<Var<double>>;
  struct Case {
    const char* name;
    uct::testing::ScalarFn fn;
    std::vector<Tensor<double>> inputs;
  };
  auto positive = random_tensor({3, 4}, rng, 0.5, 2.0);
  std::vector<Case> cases{
      {"add", [](Graph<double>&, const In& v) { return weighted_sum(ops::add(v[0], v[1])); },
       {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}},
      {"sub", [](Graph<double>&, const In& v) { return weighted_sum(ops::sub(v[0], v[1])); },
       {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}},
      {"mul", [](Graph<double>&, const In& v) { return weighted_sum(ops::mul(v[0], v[1])); },
       {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)}},
      {"div", [](Graph<double>&, const In& v) { return weighted_sum(ops::div(v[0], v[1])); },
       {random_tensor({3, 4}, rng), positive}},
      {"scale/add_scalar",
       [](Graph<double>&, const In& v) { return weighted_sum(ops::add_scalar(ops::scale(v[0], 1.7), 0.3)); },
       {random_tensor({5}, rng)}},
      {"bias_add", [](Graph<double>&, const In& v) { return weighted_sum(ops::bias_add(v[0], v[1], 1)); },
       {random_tensor({2, 3, 4}, rng), random_tensor({3}, rng)}},
      {"scale_along", [](Graph<double>&, const In& v) { return weighted_sum(ops::scale_along(v[0], v[1], 0)); },
       {random_tensor({3, 2, 2}, rng), random_tensor({3}, rng)}},
      {"matmul", [](Graph<double>&, const In& v) { return weighted_sum(ops::matmul(v[0], v[1])); },
       {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}},
      {"transpose", [](Graph<double>&, const In& v) { return weighted_sum(ops::transpose(v[0])); },
       {random_tensor({3, 4}, rng)}},
      {"reshape", [](Graph<double>&, const In& v) { return weighted_sum(ops::reshape(v[0], {2, 6})); },
       {random_tensor({3, 4}, rng)}},
      {"concat",
       [](Graph<double>&, const In& v) { return weighted_sum(ops::concat(std::vector{v[0], v[1]}, 1)); },
       {random_tensor({3, 2}, rng), random_tensor({3, 4}, rng)}},
      {"slice", [](Graph<double>&, const In& v) { return weighted_sum(ops::slice(v[0], 1, 1, 3)); },
       {random_tensor({3, 4}, rng)}},
      {"softmax", [](Graph<double>&, const In& v) { return weighted_sum(ops::softmax(v[0], 1)); },
       {random_tensor({3, 4}, rng, -3, 3)}},
      {"log_softmax", [](Graph<double>&, const In& v) { return weighted_sum(ops::log_softmax(v[0], 0)); },
       {random_tensor({3, 4}, rng, -3, 3)}},
      {"instance_norm", [](Graph<double>&, const In& v) { return weighted_sum(ops::instance_norm(v[0])); },
       {random_tensor({3, 4}, rng)}},
      {"layer_norm",
       [](Graph<double>&, const In& v) { return weighted_sum(ops::layer_norm(v[0], 1, v[1], v[2])); },
       {random_tensor({3, 4}, rng), random_tensor({4}, rng, 0.5, 1.5), random_tensor({4}, rng)}},
      {"conv2d",
       [](Graph<double>&, const In& v) { return weighted_sum(ops::conv2d(v[0], v[1], v[2], 1, 1)); },
       {random_tensor({2, 5, 4}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)}},
      {"conv2d stride 2",
       [](Graph<double>&, const In& v) { return weighted_sum(ops::conv2d(v[0], v[1], std::nullopt, 1, 2)); },
       {random_tensor({2, 5, 5}, rng), random_tensor({2, 2, 3, 3}, rng)}},
      {"upsample_nearest", [](Graph<double>&, const In& v) { return weighted_sum(ops::upsample_nearest(v[0], 3)); },
       {random_tensor({2, 2, 3}, rng)}},
      {"max_pool2d", [](Graph<double>&, const In& v) { return weighted_sum(ops::max_pool2d(v[0], 2)); },
       {random_tensor({2, 4, 4}, rng)}},
      {"avg_pool2d", [](Graph<double>&, const In& v) { return weighted_sum(ops::avg_pool2d(v[0], 2)); },
       {random_tensor({2, 4, 6}, rng)}},
      {"global_avg_pool", [](Graph<double>&, const In& v) { return weighted_sum(ops::global_avg_pool(v[0])); },
       {random_tensor({3, 2, 5}, rng)}},
      {"relu", [](Graph<double>&, const In& v) { return weighted_sum(ops::relu(v[0])); },
       {random_tensor({4, 4}, rng)}},
      {"sigmoid", [](Graph<double>&, const In& v) { return weighted_sum(ops::sigmoid(v[0])); },
       {random_tensor({4, 4}, rng, -4, 4)}},
      {"gelu", [](Graph<double>&, const In& v) { return weighted_sum(ops::gelu(v[0])); },
       {random_tensor({4, 4}, rng, -3, 3)}},
      {"mean", [](Graph<double>&, const In& v) { return ops::mean(ops::mul(v[0], v[0])); },
       {random_tensor({4, 4}, rng)}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    auto r = finite_difference_check(c.fn, c.inputs);
    CHECK(r.checked > 0);
    CHECK(r.max_rel < 1e-4);
  }
}

TEST_CASE("backward replay is bitwise reproducible") {
  std::mt19937_64 rng(8);
  ParamStore<double> store;
  auto& w = store.add("w", random_tensor({3, 2, 3, 3}, rng));
  auto& q = store.add("q", random_tensor({3, 3}, rng));
  Graph<double> g;
  auto x = g.constant(random_tensor({2, 6, 6}, rng));
  auto y = ops::relu(ops::conv2d(x, g.param(w), std::nullopt, 1));
  auto t = ops::reshape(y, {3, 36});
  auto s = ops::softmax(ops::instance_norm(ops::matmul(g.param(q), t)), 1);
  auto loss = weighted_sum(s);

  store.zero_grad();
  g.backward(loss);
  const auto gw1 = w.grad;
  const auto gq1 = q.grad;
  store.zero_grad();
  g.backward(loss);
  CHECK(w.grad == gw1);
  CHECK(q.grad == gq1);
}

TEST_CASE("adjoint fault hook corrupts exactly the named op") {
  std::mt19937_64 rng(4);
  auto in = random_tensor({3, 4}, rng, -2, 2);
  auto fn = [](Graph<double>&, const std::vector<Var<double>>& v) { return weighted_sum(ops::softmax(v[0], 1)); };
  inject_adjoint_fault("softmax", 1.5);
  auto bad = finite_difference_check(fn, {in});
  inject_adjoint_fault("gelu", 1.5);
  auto unaffected = finite_difference_check(fn, {in});
  clear_adjoint_fault();
  CHECK(bad.max_rel > 1e-2);
  CHECK(unaffected.max_rel < 1e-4);
}
