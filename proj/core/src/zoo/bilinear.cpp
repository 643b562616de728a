#include "dbt/zoo/bilinear.hpp"

#include "common/checks.hpp"
#include "dbt/random.hpp"

namespace dbt::zoo {

using detail::expect_rank;

namespace {

template <typename T, typename U>
Tensor<T> matvec(const Tensor<U>& w, const Tensor<T>& x, const char* what) {
  expect_rank(w.shape(), 2, what);
  if (w.dim(1) != x.size()) {
    fail(ErrorKind::kShape, std::string(what) + ": weight " + shape_to_string(w.shape()) + " vs input " +
                                shape_to_string(x.shape()));
  }
  Tensor<T> y({w.dim(0)});
  for (std::size_t r = 0; r < w.dim(0); ++r) {
    T acc = 0;
    for (std::size_t c = 0; c < w.dim(1); ++c) acc += static_cast<T>(w[r * w.dim(1) + c]) * x[c];
    y[r] = acc;
  }
  return y;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_pool(const Tensor<T>& x) {
  expect_rank(x.shape(), 2, "bilinear_pool input");
  const std::size_t n = x.dim(0), hw = x.dim(1);
  Tensor<T> y({n * n});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < hw; ++p) acc += x[i * hw + p] * x[j * hw + p];
      y[i * n + j] = acc / static_cast<T>(hw);
    }
  }
  return y;
}

template <typename T>
Tensor<T> outer_gram(const Tensor<T>& x) {
  expect_rank(x.shape(), 1, "outer product input");
  const std::size_t n = x.size();
  Tensor<T> y({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) y[i * n + j] = x[i] * x[j];
  return y;
}

template <typename T>
Tensor<T> masked_bilinear_oracle(const Tensor<T>& x, std::size_t groups) {
  expect_rank(x.shape(), 1, "masked_bilinear_oracle input");
  const std::size_t n = x.size();
  if (groups == 0 || n % groups != 0) {
    fail(ErrorKind::kShape, "masked_bilinear_oracle: " + std::to_string(n) + " channels not divisible into " +
                                std::to_string(groups) + " groups");
  }
  const std::size_t m = n / groups;
  const auto full = outer_gram(x);
  Tensor<T> y({m * m});
  for (std::size_t j = 0; j < groups; ++j)
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t c = 0; c < m; ++c) y[a * m + c] += full[(j * m + a) * n + (j * m + c)];
  return y;
}

CompactRmParams CompactRmParams::generate(std::size_t dim, std::size_t channels, std::uint64_t seed) {
  if (dim == 0 || channels == 0) fail(ErrorKind::kConfig, "compact bilinear dimensions must be positive");
  CompactRmParams p{Tensor<double>({dim, channels}), Tensor<double>({dim, channels})};
  CounterRng r1 = CounterRng(seed).split("w1"), r2 = CounterRng(seed).split("w2");
  for (std::size_t i = 0; i < p.w1.size(); ++i) {
    p.w1[i] = r1.sign();
    p.w2[i] = r2.sign();
  }
  return p;
}

template <typename T>
Tensor<T> compact_bilinear_rm(const Tensor<T>& x, const CompactRmParams& p) {
  expect_rank(x.shape(), 1, "compact_bilinear_rm input");
  detail::expect_shape(p.w2.shape(), p.w1.shape(), "compact_bilinear_rm W2");
  auto a = matvec(p.w1, x, "compact_bilinear_rm W1");
  const auto b = matvec(p.w2, x, "compact_bilinear_rm W2");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
  return a;
}

template <typename T>
Tensor<T> hadamard_lowrank(const Tensor<T>& x, const HadamardParams<T>& p) {
  expect_rank(x.shape(), 1, "hadamard_lowrank input");
  detail::expect_shape(p.v.shape(), p.u.shape(), "hadamard_lowrank V");
  auto h = matvec(p.u, x, "hadamard_lowrank U");
  const auto hv = matvec(p.v, x, "hadamard_lowrank V");
  for (std::size_t i = 0; i < h.size(); ++i) h[i] *= hv[i];
  auto y = matvec(p.p, h, "hadamard_lowrank P");
  detail::expect_shape(p.b.shape(), y.shape(), "hadamard_lowrank bias");
  for (std::size_t k = 0; k < y.size(); ++k) y[k] += p.b[k];
  return y;
}

#define DBT_INSTANTIATE_ZOO(T)                                                    \
  template Tensor<T> bilinear_pool(const Tensor<T>&);                             \
  template Tensor<T> outer_gram(const Tensor<T>&);                                \
  template Tensor<T> masked_bilinear_oracle(const Tensor<T>&, std::size_t);       \
  template Tensor<T> compact_bilinear_rm(const Tensor<T>&, const CompactRmParams&); \
  template Tensor<T> hadamard_lowrank(const Tensor<T>&, const HadamardParams<T>&);

DBT_INSTANTIATE_ZOO(float)
DBT_INSTANTIATE_ZOO(double)

#undef DBT_INSTANTIATE_ZOO

}  // namespace dbt::zoo
