// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "oodkit/autodiff.hpp"
#include "oodkit/core/rng.hpp"
#include "support/gradient_cases.hpp"

namespace oodkit {
namespace {

using testing::away_from_zero;
using testing::project;
using testing::random_array;

using testing::Op1;
using testing::OpN;

constexpr double kTol = 1e-4;
constexpr int kInstances = 20;

TEST(ForwardOps, MatmulWithIdentityReturnsVector) {
  Tensor one(Array(Shape{1, 1}, std::vector<double>{1.0}));
  Tensor v(Array(Shape{1, 4}, std::vector<double>{0.5, -2.0, 3.0, 7.25}));
  EXPECT_EQ(matmul(one, v).value(), v.value());
}

TEST(ForwardOps, SoftmaxOfEqualLogitsIsUniform) {
  for (std::size_t m : {1u, 2u, 6u, 11u}) {
    Tensor x(Array(Shape{3, m}, 0.37));
    const auto p = softmax(x).value();
    for (double v : p.data()) EXPECT_NEAR(v, 1.0 / static_cast<double>(m), 1e-15);
  }
}

TEST(ForwardOps, CrossEntropyVanishesAsLogitGapGrows) {
  const std::vector<int> labels{1, 0};
  double previous = 1e9;
  for (double gap : {1.0, 5.0, 20.0, 40.0}) {
    Tensor logits(Array(Shape{2, 2}, std::vector<double>{0.0, gap, gap, 0.0}));
    const double loss = cross_entropy(logits, labels).item();
    EXPECT_LT(loss, previous);
    previous = loss;
  }
  EXPECT_LT(previous, 1e-15);
}

TEST(ForwardOps, ConvTransposeOutputSize) {
  Tensor x(Array(Shape{1, 3, 2, 2}, 1.0));
  Tensor w(Array(Shape{3, 5, 3, 3}, 0.1));
  const auto y = conv_transpose2d(x, w, ConvParams{2, 1, 1, 1}, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 5, 4, 4}));
}

TEST(ForwardOps, PoolingValues) {
  Tensor x(Array(Shape{1, 1, 2, 2}, std::vector<double>{1.0, 4.0, -2.0, 3.0}));
  const auto mx = max_pool2d(x, PoolParams{3, 1, 1}).value();
  for (double v : mx.data()) EXPECT_EQ(v, 4.0);
  const auto av = avg_pool2d(x, PoolParams{3, 1, 1}).value();
  for (double v : av.data()) EXPECT_DOUBLE_EQ(v, 1.5);
}

TEST(ForwardOps, Errors) {
  Tensor a(Array(Shape{2, 3}, 1.0));
  Tensor b(Array(Shape{2, 3}, 1.0));
  EXPECT_THROW(matmul(a, b), ShapeError);
  EXPECT_THROW(add(a, Tensor(Array(Shape{4}, 1.0))), ShapeError);
  EXPECT_THROW(log(Tensor(Array(Shape{2}, -1.0))), NonFiniteError);
  EXPECT_THROW(exp(Tensor(Array(Shape{2}, 1000.0))), NonFiniteError);
  EXPECT_THROW(cross_entropy(a, std::vector<int>{0, 3}), ShapeError);
  EXPECT_THROW(Array(Shape{2, 2}, std::vector<double>{1.0}), ShapeError);
}

TEST(Grad, SquareAtThree) {
  Tape tape;
  Tensor x = tape.leaf(Array::scalar(3.0));
  EXPECT_DOUBLE_EQ(grad(mul(x, x), {x})[0].item(), 6.0);
}

TEST(Grad, DoubleBackpropOfGradientNorm) {
  // root = |d/dx x^3|^2 = 9x^4, d root/dx = 36x^3 = 288 at x = 2.
  Tape tape;
  Tensor x = tape.leaf(Array::scalar(2.0));
  Tensor g = grad(pow(x, 3.0), {x}, true)[0];
  Tensor root = square(g);
  const double analytic = grad(root, {x})[0].item();
  EXPECT_NEAR(analytic, 288.0, 1e-9);

  // Central difference of the first-order quantity 9x^4.
  auto first_order = [](double v) {
    Tape t;
    Tensor xv = t.leaf(Array::scalar(v));
    return square(grad(pow(xv, 3.0), {xv})[0]).item();
  };
  const double h = 1e-5;
  EXPECT_NEAR((first_order(2.0 + h) - first_order(2.0 - h)) / (2 * h), 288.0, 1e-4);
}

TEST(Grad, ConstantRootGivesZeros) {
  Tape tape;
  Tensor x = tape.leaf(Array(Shape{3}, 1.0));
  const auto g = grad(Tensor::scalar(4.0), {x});
  for (double v : g[0].value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Grad, UnreachableLeafGetsZero) {
  Tape tape;
  Tensor x = tape.leaf(Array(Shape{2}, 1.5));
  Tensor y = tape.leaf(Array(Shape{2, 2}, 2.0));
  const auto g = grad(sum(square(x)), {x, y});
  EXPECT_EQ(g[0].value()[0], 3.0);
  EXPECT_EQ(g[1].shape(), (Shape{2, 2}));
  for (double v : g[1].value().data()) EXPECT_EQ(v, 0.0);
}

TEST(Grad, NonScalarRootIsAnError) {
  Tape tape;
  Tensor x = tape.leaf(Array(Shape{2}, 1.0));
  EXPECT_THROW(grad(square(x), {x}), ShapeError);
}

TEST(Grad, FourthPowerSecondDerivative) {
  Rng rng(7, "x4");
  for (int i = 0; i < 50; ++i) {
    const double xv = rng.uniform(-3.0, 3.0);
    Tape tape;
    Tensor x = tape.leaf(Array::scalar(xv));
    Tensor d1 = grad(pow(x, 4.0), {x}, true)[0];
    const double d2 = grad(d1, {x})[0].item();
    const double expect = 12.0 * xv * xv;
    EXPECT_LE(std::abs(d2 - expect), 1e-6 * std::max(1.0, std::abs(expect))) << "x=" << xv;
  }
}

TEST(Grad, IndependentSubgraphsAreIsolated) {
  Rng rng(3, "iso");
  const Array av = random_array({3, 4}, rng), bv = random_array({4, 2}, rng);
  auto f1 = [](const Tensor& a) { return sum(exp(a)); };
  auto f2 = [](const Tensor& b) { return sum(square(matmul(b, b, true, false))); };

  Tape joint;
  Tensor a = joint.leaf(av), b = joint.leaf(bv);
  const auto both = grad(add(f1(a), f2(b)), {a, b});

  Tape t1, t2;
  Tensor a1 = t1.leaf(av), b2 = t2.leaf(bv);
  const auto ga = grad(f1(a1), {a1});
  const auto gb = grad(f2(b2), {b2});
  EXPECT_EQ(both[0].value(), ga[0].value());
  EXPECT_EQ(both[1].value(), gb[0].value());
}

TEST(Grad, NoGradGuardProducesConstants) {
  Tape tape;
  Tensor x = tape.leaf(Array::scalar(2.0));
  NoGradGuard guard(tape);
  EXPECT_FALSE(mul(x, x).tracked());
}

TEST(FiniteDiff, SumOfSquares) {
  Rng rng(11, "sos");
  for (int i = 0; i < 5; ++i) {
    const Array x = random_array({4, 3}, rng, -5.0, 5.0);
    EXPECT_LT(finite_diff_check([](const Tensor& t) { return sum(square(t)); }, x, 1e-5), 1e-6);
  }
}

TEST(FiniteDiff, FlagsAWrongBackwardRule) {
  // d/dx sin(x) deliberately reported as sin(x).
  auto bad_sin = [](const Tensor& x) {
    Array out = x.value();
    for (auto& v : out.data()) v = std::sin(v);
    return Tape::make("bad_sin", std::move(out), {x},
                      [](const Tensor& g, const Tensor& y, const std::vector<char>&) {
                        return std::vector<Tensor>{mul(g, y)};
                      });
  };
  Rng rng(1, "bad");
  EXPECT_GT(finite_diff_check([&](const Tensor& t) { return sum(bad_sin(t)); }, random_array({5}, rng)), 0.1);
}

void expect_all_below(const std::vector<testing::FdResult>& results) {
  ASSERT_FALSE(results.empty());
  for (const auto& r : results) EXPECT_LT(r.err, kTol) << r.name << " instance " << r.instance;
}

TEST(FiniteDiff, UnaryOpsOnRandomInputs) { expect_all_below(testing::unary_op_checks(kInstances)); }

TEST(FiniteDiff, MultiInputOpsOnRandomInputs) { expect_all_below(testing::multi_input_op_checks(kInstances)); }

TEST(FiniteDiff, SecondOrderThroughConvPoolAndLinear) { expect_all_below(testing::second_order_checks(kInstances)); }

}  // namespace
}  // namespace oodkit
