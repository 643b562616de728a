#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dbt/engine/gradcheck.hpp"
#include "dbt/engine/ops.hpp"
#include "dbt/nn/layers.hpp"
#include "dbt/nn/optim.hpp"
#include "test_util.hpp"

using namespace dbt;
using namespace dbt::nn;

namespace {

Tensor<double> identity_1x1(std::size_t c) {
  Tensor<double> w({c, c, 1, 1});
  for (std::size_t i = 0; i < c; ++i) w[i * c + i] = 1.0;
  return w;
}

}  // namespace

TEST(Conv2d, IdentityPointwise) {
  for (std::size_t c : {4u, 16u}) {
    auto x = test::randn({2, c, 5, 3}, c);
    EXPECT_EQ(conv2d(x, ConvParams<double>{identity_1x1(c), {}, 1, 0}), x) << c;
  }
}

TEST(Conv2d, ZeroWeight3x3) {
  auto x = test::randn({1, 3, 6, 6}, 2);
  auto y = conv2d(x, ConvParams<double>{Tensor<double>({4, 3, 3, 3}), {}, 1, 1});
  EXPECT_EQ(y, Tensor<double>({1, 4, 6, 6}));
}

TEST(Conv2d, HandMatvec) {
  Tensor<double> x({1, 2, 1, 1}, {1, 2});
  Tensor<double> w({2, 2, 1, 1}, {1, 1, 1, -1});
  EXPECT_EQ(conv2d(x, ConvParams<double>{w, {}, 1, 0}), Tensor<double>({1, 2, 1, 1}, {3, -1}));
}

TEST(Conv2d, MatchesDirectLoop) {
  auto x = test::randn({2, 3, 7, 6}, 3);
  auto w = test::randn({4, 3, 3, 3}, 4);
  auto y = conv2d(x, ConvParams<double>{w, {}, 2, 1});
  ASSERT_EQ(y.shape(), (Shape{2, 4, 4, 3}));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t o = 0; o < 4; ++o)
      for (std::size_t oy = 0; oy < 4; ++oy)
        for (std::size_t ox = 0; ox < 3; ++ox) {
          double acc = 0;
          for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t ky = 0; ky < 3; ++ky)
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const long iy = static_cast<long>(oy * 2 + ky) - 1, ix = static_cast<long>(ox * 2 + kx) - 1;
                if (iy < 0 || ix < 0 || iy >= 7 || ix >= 6) continue;
                acc += w[((o * 3 + c) * 3 + ky) * 3 + kx] * x[((b * 3 + c) * 7 + iy) * 6 + ix];
              }
          EXPECT_NEAR(y[((b * 4 + o) * 4 + oy) * 3 + ox], acc, 1e-12);
        }
}

TEST(Conv2d, OutputSizeFloor) {
  EXPECT_EQ(conv_output_size(224, 7, 2, 3), 112u);
  EXPECT_EQ(conv_output_size(56, 3, 1, 1), 56u);
  EXPECT_EQ(conv_output_size(56, 1, 2, 0), 28u);
  EXPECT_THROW(conv_output_size(2, 7, 1, 0), Error);
}

TEST(Conv2d, Errors) {
  auto x = test::randn({1, 3, 4, 4}, 1);
  EXPECT_THROW(conv2d(x, ConvParams<double>{Tensor<double>({2, 2, 1, 1}), {}, 1, 0}), Error);
  EXPECT_THROW(conv2d(x, ConvParams<double>{Tensor<double>({2, 3, 5, 5}), {}, 1, 0}), Error);
}

TEST(BatchNorm, ZeroScaleGivesShift) {
  auto p = BatchNormParams<double>::identity(3, 0.0);
  p.shift = Tensor<double>({3}, {0.5, -1, 2});
  auto y = batch_norm(test::randn({2, 3, 2, 2}, 5), p);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y[(b * 3 + c) * 4 + i], p.shift[c]);
}

TEST(BatchNorm, StandardizedInputIsFixedPoint) {
  Tensor<double> x({4, 1, 1, 1}, {-1, 1, -1, 1});  // mean 0, population var 1
  auto p = BatchNormParams<double>::identity(1);
  p.eps = 1e-12;
  auto y = batch_norm(x, p);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i], 1e-3);
}

TEST(BatchNorm, PopulationVariance) {
  Tensor<double> x({2, 1, 1, 1}, {1, 3});
  auto p = BatchNormParams<double>::identity(1);
  auto y = batch_norm(x, p);
  const double s = 1.0 / std::sqrt(1.0 + 1e-5);
  EXPECT_NEAR(y[0], -s, 1e-12);
  EXPECT_NEAR(y[1], s, 1e-12);
  EXPECT_NEAR(p.running_mean[0], 0.1 * 2.0, 1e-12);
  EXPECT_NEAR(p.running_var[0], 0.9 + 0.1 * 1.0, 1e-12);
}

TEST(BatchNorm, TrainOutputMoments) {
  auto x = test::randn({4, 5, 3, 3}, 8, 3.0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += 2.0;
  auto p = BatchNormParams<double>::identity(5);
  auto y = batch_norm(x, p);
  for (std::size_t c = 0; c < 5; ++c) {
    double m = 0, v = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) m += y[(b * 5 + c) * 9 + i];
    m /= 36;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t i = 0; i < 9; ++i) v += std::pow(y[(b * 5 + c) * 9 + i] - m, 2);
    v /= 36;
    EXPECT_LT(std::abs(m), 1e-5);
    EXPECT_NEAR(v, 1.0, 1e-3);
  }
}

TEST(BatchNorm, EvalUsesRunningStats) {
  auto p = BatchNormParams<double>::identity(1);
  p.running_mean[0] = 1.0;
  p.running_var[0] = 4.0;
  p.mode = BnMode::kEval;
  auto y = batch_norm(Tensor<double>({1, 1, 1, 1}, {5.0}), p);
  EXPECT_NEAR(y[0], 4.0 / std::sqrt(4.0 + 1e-5), 1e-12);
}

TEST(BatchNorm, TooFewValuesInTrainMode) {
  auto p = BatchNormParams<double>::identity(2);
  EXPECT_THROW(batch_norm(test::randn({1, 2, 1, 1}, 1), p), Error);
}

TEST(GlobalAvgPool, Cases) {
  auto x = test::randn({2, 3, 1, 1}, 1);
  EXPECT_EQ(global_avg_pool(x), x.reshaped({2, 3}));
  EXPECT_EQ(global_avg_pool(Tensor<double>::full({1, 1, 3, 3}, 2.5)), Tensor<double>({1, 1}, {2.5}));
  EXPECT_EQ(global_avg_pool(Tensor<double>({1, 1, 2, 2}, {1, 2, 3, 6})), Tensor<double>({1, 1}, {3.0}));
}

TEST(MaxPool, KeepsTableShape) {
  auto y = max_pool2d(test::randn({1, 2, 112, 112}, 1), 3, 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 56, 56}));
  Tensor<double> x({1, 1, 2, 2}, {1, 5, -2, 3});
  EXPECT_EQ(max_pool2d(x, 3, 2, 1), Tensor<double>({1, 1, 1, 1}, {5}));
}

TEST(SoftmaxCrossEntropy, Cases) {
  const int labels3[] = {2};
  EXPECT_NEAR(softmax_cross_entropy(Tensor<double>({1, 5}), std::span<const int>(labels3, 1)), std::log(5.0), 1e-12);
  const int l0[] = {0};
  EXPECT_NEAR(softmax_cross_entropy(Tensor<double>({1, 3}, {1000, 0, 0}), std::span<const int>(l0, 1)), 0.0, 1e-12);
  const int l1[] = {1};
  EXPECT_NEAR(softmax_cross_entropy(Tensor<double>({1, 2}, {0, std::log(3.0)}), std::span<const int>(l1, 1)),
              -std::log(0.75), 1e-12);
  EXPECT_NEAR(-std::log(0.75), 0.2877, 1e-4);
  const int bad[] = {3};
  EXPECT_THROW(softmax_cross_entropy(Tensor<double>({1, 3}), std::span<const int>(bad, 1)), Error);
}

TEST(LayerGradients, Conv) {
  for (std::size_t k : {1u, 3u, 7u}) {
    for (std::size_t stride : {1u, 2u}) {
      Graph<double> g;
      Var x = g.input("x", true), w = g.input("w", true);
      const std::size_t pad = k / 2;
      Var y = nn::conv2d(g, x, w, ConvSpec{stride, pad});
      const std::size_t o = conv_output_size(5, k, stride, pad);
      Var l = test::weighted_sum(g, y, Shape{2, 3, o, o}, 9);
      const double err = finite_difference_check(
          g, l, {{"x", test::randn({2, 4, 5, 5}, 1)}, {"w", test::randn({3, 4, k, k}, 2)}}, 1e-5);
      EXPECT_LT(err, 1e-5) << "k=" << k << " stride=" << stride;
    }
  }
}

TEST(LayerGradients, BatchNormTrainAndEval) {
  for (auto mode : {BnMode::kTrain, BnMode::kEval}) {
    Graph<double> g;
    Var x = g.input("x", true);
    BatchNormVars v{g.input("gamma", true), g.input("beta", true), g.input("rm"), g.input("rv")};
    Var y = nn::batch_norm(g, x, v, mode);
    Var l = test::weighted_sum(g, y, Shape{2, 3, 2, 2}, 4);
    const double err = finite_difference_check(g, l,
                                               {{"x", test::randn({2, 3, 2, 2}, 1)},
                                                {"gamma", test::randn({3}, 2)},
                                                {"beta", test::randn({3}, 3)},
                                                {"rm", test::randn({3}, 5)},
                                                {"rv", test::uniform({3}, 6, 0.5, 2.0)}},
                                               1e-5);
    EXPECT_LT(err, 1e-5);
  }
}

TEST(LayerGradients, PoolingAndCrossEntropy) {
  Graph<double> g;
  Var x = g.input("x", true), labels = g.input("labels");
  Var pooled = nn::max_pool2d(g, x, 3, 2, 1);
  Var gap = nn::global_avg_pool(g, pooled);
  Var l = nn::softmax_cross_entropy(g, gap, labels);
  const double err =
      finite_difference_check(g, l, {{"x", test::randn({2, 4, 5, 5}, 3)}, {"labels", Tensor<double>({2}, {1, 3})}}, 1e-5);
  EXPECT_LT(err, 1e-5);
}

TEST(CosineLr, Schedule) {
  SgdCosineConfig cfg{0.1, 0.01, 100, 0.9, 0.0};
  EXPECT_DOUBLE_EQ(cosine_lr(0, cfg), 0.1);
  EXPECT_NEAR(cosine_lr(50, cfg), 0.055, 1e-15);
  double prev = cosine_lr(0, cfg);
  for (std::size_t s = 1; s < 100; ++s) {
    const double lr = cosine_lr(s, cfg);
    EXPECT_LE(lr, prev);
    prev = lr;
  }
  EXPECT_THROW(cosine_lr(100, cfg), Error);
}

TEST(SgdCosine, ZeroGradsLeaveParams) {
  SgdCosine<double> opt({0.1, 0.0, 10, 0.9, 0.0});
  ParamMap<double> p{{"w", test::randn({4}, 1)}};
  const auto before = p;
  opt.step(p, {{"w", Tensor<double>({4})}}, 0);
  opt.step(p, {}, 1);
  EXPECT_EQ(p, before);
}

TEST(SgdCosine, MomentumAndDecay) {
  SgdCosine<double> opt({0.5, 0.5, 10, 0.9, 0.1});
  ParamMap<double> p{{"w", Tensor<double>({1}, {2.0})}};
  opt.step(p, {{"w", Tensor<double>({1}, {1.0})}}, 0);
  // buf = 1 + 0.1*2 = 1.2; w = 2 - 0.5*1.2
  EXPECT_NEAR(p.at("w")[0], 1.4, 1e-15);
  opt.step(p, {{"w", Tensor<double>({1}, {1.0})}}, 1);
  // buf = 0.9*1.2 + 1 + 0.14 = 2.22; w = 1.4 - 1.11
  EXPECT_NEAR(p.at("w")[0], 0.29, 1e-15);
}
