#include <gtest/gtest.h>

#include "dbt/bilinear/group_bilinear.hpp"
#include "dbt/zoo/bilinear.hpp"
#include "test_util.hpp"

using namespace dbt;
using namespace dbt::zoo;

TEST(BilinearPool, Cases) {
  EXPECT_EQ(bilinear_pool(Tensor<double>({3, 4})), Tensor<double>({9}));
  EXPECT_EQ(bilinear_pool(Tensor<double>({2, 1}, {1, 2})), Tensor<double>({4}, {1, 2, 2, 4}));
  // columns [1,0] and [1,2]
  EXPECT_EQ(bilinear_pool(Tensor<double>({2, 2}, {1, 1, 0, 2})), Tensor<double>({4}, {1, 1, 1, 2}));
}

TEST(MaskedOracle, Cases) {
  auto x = test::randn({6}, 1);
  EXPECT_EQ(masked_bilinear_oracle(x, 1), outer_gram(x).reshaped({36}));
  EXPECT_EQ(masked_bilinear_oracle(Tensor<double>({4}, {1, 2, 3, 4}), 2), Tensor<double>({4}, {10, 14, 14, 20}));
  Tensor<double> onehot({8});
  onehot[5] = 1;
  auto y = masked_bilinear_oracle(onehot, 2);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], i == 1 * 4 + 1 ? 1.0 : 0.0);
  EXPECT_THROW(masked_bilinear_oracle(onehot, 3), Error);
}

TEST(MaskedOracle, MatchesGroupBilinear) {
  const std::pair<std::size_t, std::size_t> cases[] = {{16, 4}, {36, 6}, {64, 8}};
  for (auto [n, g] : cases) {
    bilinear::DbtConfig cfg;
    cfg.channels = n;
    cfg.groups = g;
    cfg.use_encoding = false;
    auto x = test::randn({1, n, 1, 1}, n);
    auto gb = bilinear::group_bilinear<double>(x, cfg, nullptr);
    EXPECT_LT(max_abs_diff(gb.reshaped({gb.size()}), masked_bilinear_oracle(x.reshaped({n}), g)), 1e-12);
  }
}

TEST(MaskedOracle, CrossGroupZero) {
  // group 0 lives on positions {0,1}, group 1 on {2,3}: every cross-group
  // entry of the full Gram vanishes
  const std::size_t n = 8, hw = 4;
  Tensor<double> x({n, hw});
  auto r = test::randn({n * hw}, 3);
  for (std::size_t c = 0; c < n; ++c)
    for (std::size_t p = 0; p < hw; ++p)
      if ((c < 4) == (p < 2)) x[c * hw + p] = r[c * hw + p];
  auto pooled = bilinear_pool(x);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i / 4 != j / 4) EXPECT_EQ(pooled[i * n + j], 0.0);
}

TEST(CompactRm, Cases) {
  CompactRmParams basis{Tensor<double>({2, 2}, {1, 0, 0, 1}), Tensor<double>({2, 2}, {1, 0, 0, 1})};
  auto x = Tensor<double>({2}, {1.5, -2});
  EXPECT_EQ(compact_bilinear_rm(x, basis), Tensor<double>({2}, {2.25, 4}));
  CompactRmParams hand{Tensor<double>({2, 2}, {1, 1, 1, -1}), Tensor<double>({2, 2}, {1, 0, 0, 1})};
  EXPECT_EQ(compact_bilinear_rm(Tensor<double>({2}, {1, 2}), hand), Tensor<double>({2}, {3, -2}));
  auto p = CompactRmParams::generate(32, 8, 5);
  EXPECT_EQ(compact_bilinear_rm(Tensor<double>({8}), p), Tensor<double>({32}));
  EXPECT_THROW(compact_bilinear_rm(Tensor<double>({7}), p), Error);
}

TEST(CompactRm, SeededSigns) {
  auto a = CompactRmParams::generate(64, 16, 9), b = CompactRmParams::generate(64, 16, 9);
  EXPECT_EQ(a.w1, b.w1);
  EXPECT_EQ(a.w2, b.w2);
  EXPECT_NE(a.w1, a.w2);
  EXPECT_NE(a.w1, CompactRmParams::generate(64, 16, 10).w1);
  int plus = 0;
  for (double v : a.w1.values()) {
    EXPECT_TRUE(v == 1.0 || v == -1.0);
    plus += v > 0;
  }
  EXPECT_GT(plus, 400);
  EXPECT_LT(plus, 624);
}

TEST(HadamardLowrank, Cases) {
  HadamardParams<double> id{Tensor<double>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}),
                            Tensor<double>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}),
                            Tensor<double>({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}), Tensor<double>({3})};
  EXPECT_EQ(hadamard_lowrank(Tensor<double>({3}, {1, -2, 3}), id), Tensor<double>({3}, {1, 4, 9}));
  auto bias_only = id;
  bias_only.u = Tensor<double>({3, 3});
  bias_only.b = Tensor<double>({3}, {0.5, 1, -1});
  EXPECT_EQ(hadamard_lowrank(test::randn({3}, 1), bias_only), bias_only.b);
  HadamardParams<double> hand{Tensor<double>({1, 2}, {1, 1}), Tensor<double>({1, 2}, {1, -1}),
                              Tensor<double>({1, 1}, {1}), Tensor<double>({1})};
  EXPECT_EQ(hadamard_lowrank(Tensor<double>({2}, {2, 3}), hand), Tensor<double>({1}, {-5}));
}

TEST(HadamardLowrank, MatchesQuadraticForm) {
  const std::size_t n = 6, d = 5, k = 4;
  HadamardParams<double> p{test::randn({d, n}, 1), test::randn({d, n}, 2), test::randn({k, d}, 3),
                           test::randn({k}, 4)};
  auto x = test::randn({n}, 5);
  auto y = hadamard_lowrank(x, p);
  for (std::size_t o = 0; o < k; ++o) {
    double acc = p.b[o];
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t l = 0; l < n; ++l) acc += p.p[o * d + r] * p.u[r * n + j] * p.v[r * n + l] * x[j] * x[l];
    EXPECT_NEAR(y[o], acc, 1e-10);
  }
}
