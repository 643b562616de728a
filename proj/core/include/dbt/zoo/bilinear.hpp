#pragma once

#include <cstddef>
#include <cstdint>

#include "dbt/engine/tensor.hpp"

// Reference bilinear variants. All vec() operations are row-major.
namespace dbt::zoo {

/// (1/HW) vec(X X^T) for X [N, HW]. The classifier on top is the caller's.
template <typename T>
Tensor<T> bilinear_pool(const Tensor<T>& x);

/// Brute force: full x x^T, then the sum of its G diagonal (N/G)x(N/G) blocks.
template <typename T>
Tensor<T> masked_bilinear_oracle(const Tensor<T>& x, std::size_t groups);

/// Full outer product x x^T of a single vector [N], as [N, N].
template <typename T>
Tensor<T> outer_gram(const Tensor<T>& x);

struct CompactRmParams {
  Tensor<double> w1;  // [D, N], entries +-1
  Tensor<double> w2;

  static CompactRmParams generate(std::size_t dim, std::size_t channels, std::uint64_t seed);
};

/// W1 x o W2 x.
template <typename T>
Tensor<T> compact_bilinear_rm(const Tensor<T>& x, const CompactRmParams& p);

template <typename T>
struct HadamardParams {
  Tensor<T> u;  // [D, N]
  Tensor<T> v;  // [D, N]
  Tensor<T> p;  // [K, D]
  Tensor<T> b;  // [K]
};

/// P (U x o V x) + b, with P stored as [K, D] so each output row k reads P[k, :].
template <typename T>
Tensor<T> hadamard_lowrank(const Tensor<T>& x, const HadamardParams<T>& p);

}  // namespace dbt::zoo
