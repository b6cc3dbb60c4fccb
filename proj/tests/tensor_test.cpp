#include <gtest/gtest.h>

#include <cmath>

#include "pishguve/tensor.hpp"

using namespace pv;

namespace {

Tensor randt(Shape shape, RngStream& rng, bool rg = true, double scale = 1.0) {
  std::vector<double> d(numel(shape));
  for (double& v : d) v = rng.uniform(-scale, scale);
  return Tensor::from_data(std::move(shape), std::move(d), rg);
}

}  // namespace

TEST(Affine, ZeroWeightsGiveBias) {
  Tensor x = Tensor::from_data({1, 2}, {1, 2});
  Tensor w = Tensor::zeros({2, 2});
  Tensor b = Tensor::from_data({2}, {3, 4});
  Tensor y = affine(x, w, b);
  EXPECT_EQ(y.data(), (std::vector<double>{3, 4}));
}

TEST(Affine, Identity) {
  Tensor x = Tensor::from_data({1, 2}, {1, 2});
  Tensor w = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::zeros({2});
  EXPECT_EQ(affine(x, w, b).data(), (std::vector<double>{1, 2}));
}

TEST(Affine, HandComputed) {
  // [1 2] . [[1 3],[2 4]] + [1 1] = [1+4+1, 3+8+1] = [6 12]
  Tensor x = Tensor::from_data({1, 2}, {1, 2});
  Tensor w = Tensor::from_data({2, 2}, {1, 3, 2, 4});
  Tensor b = Tensor::from_data({2}, {1, 1});
  EXPECT_EQ(affine(x, w, b).data(), (std::vector<double>{6, 12}));
}

TEST(Affine, ShapeMismatchNamesBothShapes) {
  Tensor x = Tensor::zeros({1, 3});
  Tensor w = Tensor::zeros({2, 2});
  Tensor b = Tensor::zeros({2});
  try {
    affine(x, w, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("(1x3)"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("(2x2)"), std::string::npos);
  }
}

TEST(Conv2d, OnesKernelOnOnes) {
  Tensor x = Tensor::full({1, 3, 3}, 1.0);
  Tensor k = Tensor::full({1, 1, 2, 2}, 1.0);
  Tensor b = Tensor::zeros({1});
  Tensor y = conv2d(x, k, b);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2}));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y[i], 4.0);
}

TEST(Conv2d, ZeroKernelGivesBias) {
  RngStream rng(7, 0);
  Tensor x = randt({2, 4, 3}, rng, false);
  Tensor k = Tensor::zeros({3, 2, 2, 2});
  Tensor b = Tensor::from_data({3}, {1.5, -2.0, 0.25});
  Tensor y = conv2d(x, k, b);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 3 * 2; ++i) EXPECT_DOUBLE_EQ(y[c * 6 + i], b[c]);
}

TEST(Conv2d, OneByOneKernelScales) {
  RngStream rng(8, 0);
  Tensor x = randt({1, 3, 3}, rng, false);
  Tensor k = Tensor::from_data({1, 1, 1, 1}, {2.5});
  Tensor b = Tensor::from_data({1}, {0.5});
  Tensor y = conv2d(x, k, b);
  for (std::size_t i = 0; i < 9; ++i) EXPECT_DOUBLE_EQ(y[i], 2.5 * x[i] + 0.5);
}

TEST(Conv2d, KernelLargerThanInputThrows) {
  EXPECT_THROW(conv2d(Tensor::zeros({1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), Tensor::zeros({1})),
               ShapeError);
}

TEST(Activation, LeakyRelu) {
  Tensor y = leaky_relu(Tensor::from_data({2}, {2, -2}), 0.01);
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], -0.02);
}

TEST(Activation, Sigmoid) {
  EXPECT_DOUBLE_EQ(sigmoid(Tensor::scalar(0.0))[0], 0.5);
  EXPECT_NEAR(sigmoid(Tensor::scalar(std::log(3.0)))[0], 0.75, 1e-15);
}

TEST(Pool, AvgAndMax) {
  Tensor x = Tensor::from_data({4}, {1, 2, 3, 4});
  EXPECT_DOUBLE_EQ(pool(x, PoolKind::avg, {0})[0], 2.5);
  EXPECT_DOUBLE_EQ(pool(x, PoolKind::max, {0})[0], 4.0);
}

TEST(Pool, ConstantTensorAvgEqualsMax) {
  Tensor x = Tensor::full({2, 3}, 7.25);
  Tensor a = pool(x, PoolKind::avg, {0, 1});
  Tensor m = pool(x, PoolKind::max, {0, 1});
  EXPECT_DOUBLE_EQ(a[0], 7.25);
  EXPECT_DOUBLE_EQ(m[0], 7.25);
}

TEST(Pool, SingletonAxisIsIdentity) {
  RngStream rng(9, 0);
  Tensor x = randt({3, 1, 4}, rng, false);
  Tensor y = pool(x, PoolKind::avg, {1});
  EXPECT_EQ(y.shape(), (Shape{3, 4}));
  EXPECT_EQ(y.data(), x.data());
  Tensor z = pool(x, PoolKind::max, {1});
  EXPECT_EQ(z.data(), x.data());
}

TEST(Pool, EmptyAxisSetThrows) {
  EXPECT_THROW(pool(Tensor::zeros({2}), PoolKind::avg, {}), ShapeError);
}

TEST(Pool, MaxBackwardFirstArgmaxWinsTies) {
  Tensor x = Tensor::from_data({4}, {3, 3, 1, 3}, true);
  Tensor y = pool(x, PoolKind::max, {0});
  backward(y);
  EXPECT_EQ(x.grad(), (std::vector<double>{1, 0, 0, 0}));
}

TEST(Dropout, EvalIsIdentity) {
  RngStream rng(1, 1);
  Tensor x = randt({5, 5}, rng, false);
  Tensor y = dropout(x, 0.9, Mode::eval, rng);
  EXPECT_EQ(y.data(), x.data());
}

TEST(Dropout, PZeroTrainIsIdentity) {
  RngStream rng(1, 2);
  Tensor x = randt({5, 5}, rng, false);
  Tensor y = dropout(x, 0.0, Mode::train, rng);
  EXPECT_EQ(y.data(), x.data());
}

TEST(Dropout, EmpiricalZeroFraction) {
  RngStream rng(42, 7);
  Tensor x = Tensor::full({100000}, 1.0);
  Tensor y = dropout(x, 0.5, Mode::train, rng);
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y[i] == 0.0) ++zeros;
  double frac = static_cast<double>(zeros) / 1e5;
  EXPECT_GE(frac, 0.49);
  EXPECT_LE(frac, 0.51);
}

TEST(Dropout, SameStreamGivesIdenticalMask) {
  Tensor x = Tensor::full({1000}, 1.0);
  RngStream a(5, 3), b(5, 3);
  Tensor ya = dropout(x, 0.3, Mode::train, a);
  Tensor yb = dropout(x, 0.3, Mode::train, b);
  EXPECT_EQ(ya.data(), yb.data());
}

TEST(Dropout, PAtLeastOneThrows) {
  RngStream rng(1, 1);
  EXPECT_THROW(dropout(Tensor::zeros({2}), 1.0, Mode::train, rng), ConfigError);
}

TEST(Concat, Basic) {
  Tensor a = Tensor::from_data({2}, {1, 2});
  Tensor b = Tensor::from_data({1}, {3});
  EXPECT_EQ(concat({a, b}, 0).data(), (std::vector<double>{1, 2, 3}));
}

TEST(Concat, ShapeContract) {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 5});
  EXPECT_EQ(concat({a, b}, 1).shape(), (Shape{2, 8}));
  EXPECT_THROW(concat({a, b}, 0), ShapeError);
}

TEST(Concat, SplitRoundTrip) {
  RngStream rng(11, 0);
  Tensor x = randt({3, 4}, rng, false);
  Tensor r0 = slice_row(x, 0), r1 = slice_row(x, 1), r2 = slice_row(x, 2);
  Tensor back = concat({reshape(r0, {1, 4}), reshape(r1, {1, 4}), reshape(r2, {1, 4})}, 0);
  EXPECT_EQ(back.data(), x.data());
}

TEST(Backward, SumOfSquares) {
  Tensor x = Tensor::from_data({2}, {1, -2}, true);
  Tensor loss = sum(mul(x, x));
  backward(loss);
  EXPECT_EQ(x.grad(), (std::vector<double>{2, -4}));
}

TEST(Backward, BiasGradOfSummedAffine) {
  Tensor x = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  Tensor w = Tensor::zeros({2, 4}, true);
  Tensor b = Tensor::zeros({4}, true);
  backward(sum(affine(x, w, b)));
  EXPECT_EQ(b.grad(), (std::vector<double>{3, 3, 3, 3}));
}

TEST(Backward, NonScalarThrows) {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  EXPECT_THROW(backward(mul(x, x)), ContractError);
}

TEST(Backward, AccumulatesAcrossCalls) {
  Tensor x = Tensor::from_data({1}, {3}, true);
  Tensor l1 = sum(mul(x, x));
  backward(l1);
  backward(l1);
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Backward, ThreeLayerCompositeMatchesFiniteDifferences) {
  RngStream rng(2024, 0);
  Tensor x = Tensor::from_data({2, 3}, {0.1, -0.2, 0.3, 0.4, -0.5, 0.6});
  Tensor w1 = randt({3, 4}, rng), b1 = randt({4}, rng);
  Tensor w2 = randt({4, 4}, rng), b2 = randt({4}, rng);
  Tensor w3 = randt({4, 2}, rng), b3 = randt({2}, rng);
  auto f = [&] {
    Tensor h1 = leaky_relu(affine(x, w1, b1), 0.01);
    Tensor h2 = sigmoid(affine(h1, w2, b2));
    return sum(affine(h2, w3, b3));
  };
  double err = grad_check(f, {w1, b1, w2, b2, w3, b3});
  EXPECT_LT(err, 1e-5);
}

TEST(GradCheck, IdentitySumIsNearExact) {
  Tensor x = Tensor::from_data({4}, {1, 2, 3, 4}, true);
  double err = grad_check([&] { return sum(x); }, {x});
  EXPECT_LT(err, 1e-10);
}

TEST(GradCheck, SigmoidAffineToy) {
  RngStream rng(3, 3);
  Tensor x = randt({1, 3}, rng, false);
  Tensor w = randt({3, 2}, rng), b = randt({2}, rng);
  double err = grad_check([&] { return sum(sigmoid(affine(x, w, b))); }, {w, b});
  EXPECT_LT(err, 1e-5);
}

TEST(GradCheck, CorruptedGradientIsFlagged) {
  // A loss whose recorded backward is deliberately off by 2x.
  Tensor x = Tensor::from_data({3}, {0.5, -1.0, 2.0}, true);
  auto corrupted_sum = [&] {
    std::vector<double> v = {x[0] + x[1] + x[2]};
    auto xn = x.node();
    return make_op({1}, std::move(v), {x},
                   [xn](const Tensor::Node& out) {
                     for (std::size_t i = 0; i < 3; ++i) accumulate(*xn, i, 2.0 * out.grad[0]);
                   },
                   "corrupted_sum");
  };
  double err = grad_check(corrupted_sum, {x});
  EXPECT_NEAR(err, 0.5, 1e-6);
}

TEST(GradCheck, TrainModeDropoutIsRejected) {
  Tensor x = Tensor::from_data({64}, std::vector<double>(64, 1.0), true);
  RngStream rng(5, 5);
  EXPECT_THROW(grad_check([&] { return sum(dropout(x, 0.5, Mode::train, rng)); }, {x}),
               ContractError);
}

// Per-op gradient checks on random small inputs (<= 64 elements each).
TEST(GradCheck, AllOpsUnderTolerance) {
  RngStream rng(77, 0);
  {
    Tensor x = randt({3, 4}, rng), w = randt({4, 5}, rng), b = randt({5}, rng);
    EXPECT_LT(grad_check([&] { return sum(affine(x, w, b)); }, {x, w, b}), 1e-5) << "affine";
  }
  {
    Tensor x = randt({2, 4, 4}, rng), k = randt({3, 2, 2, 2}, rng), b = randt({3}, rng);
    EXPECT_LT(grad_check([&] { return sum(conv2d(x, k, b)); }, {x, k, b}), 1e-5) << "conv2d";
    EXPECT_LT(grad_check([&] { return sum(conv2d(x, k, b, 1, 1)); }, {x, k, b}), 1e-5)
        << "conv2d padded";
  }
  {
    Tensor x = randt({4, 4}, rng);
    Tensor wa = randt({4}, rng, false), wm = randt({4}, rng, false);
    EXPECT_LT(grad_check([&] { return sum(leaky_relu(x, 0.01)); }, {x}), 1e-5) << "leaky_relu";
    EXPECT_LT(grad_check([&] { return sum(sigmoid(x)); }, {x}), 1e-5) << "sigmoid";
    EXPECT_LT(grad_check([&] { return sum(mul(pool(x, PoolKind::avg, {1}), wa)); }, {x}), 1e-5)
        << "avg pool";
    EXPECT_LT(grad_check([&] { return sum(mul(pool(x, PoolKind::max, {0}), wm)); }, {x}), 1e-5)
        << "max pool";
  }
  {
    Tensor a = randt({2, 3}, rng), b = randt({2, 3}, rng), s = randt({1}, rng);
    EXPECT_LT(grad_check([&] { return sum(mul(add(a, b), sub(a, mul(b, s)))); }, {a, b, s}), 1e-5)
        << "arith";
    EXPECT_LT(grad_check([&] { return sum(mul(concat({a, b}, 1), concat({b, a}, 1))); }, {a, b}),
              1e-5)
        << "concat";
  }
  {
    Tensor f = randt({3, 2, 2}, rng), s = randt({3}, rng), m = randt({4}, rng);
    EXPECT_LT(grad_check([&] { return sum(channel_scale(f, s)); }, {f, s}), 1e-5)
        << "channel_scale";
    EXPECT_LT(grad_check([&] { return sum(spatial_scale(f, reshape(m, {2, 2}))); }, {f, m}), 1e-5)
        << "spatial_scale";
  }
  {
    Tensor x = randt({6}, rng);
    Tensor target = randt({6}, rng, false);
    RngStream drng(1, 1);
    EXPECT_LT(grad_check([&] { return mse(dropout(x, 0.5, Mode::eval, drng), target); }, {x}), 1e-4)
        << "dropout eval + mse";
  }
}

TEST(Finiteness, ConstructionRejectsNaN) {
  EXPECT_THROW(Tensor::from_data({1}, {std::nan("")}), NumericError);
}

TEST(Finiteness, OverflowInOpRaises) {
  Tensor x = Tensor::from_data({1}, {1e308});
  EXPECT_THROW(mul(x, x), NumericError);
}

TEST(Rng, DeterministicAcrossInstances) {
  RngStream a(123, 4), b(123, 4);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  RngStream c(123, 5);
  EXPECT_NE(RngStream(123, 4).next_u64(), c.next_u64());
}

TEST(Rng, UniformInUnitInterval) {
  RngStream r(9, 9);
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}
