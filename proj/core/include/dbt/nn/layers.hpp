#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "dbt/engine/graph.hpp"

namespace dbt::nn {

/// Output extent of a strided window, floor((in + 2 padding - kernel) / stride) + 1.
/// Throws kShape when the padded input is smaller than the window.
std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);

struct ConvSpec {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // [out_channels, in_channels, k, k], k in {1, 3, 7}
  std::optional<Tensor<T>> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation of x [B,C,H,W] with p.weight.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p);

enum class BnMode { kTrain, kEval };

template <typename T>
struct BatchNormParams {
  Tensor<T> scale;
  Tensor<T> shift;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T eps = T(1e-5);
  T momentum = T(0.9);
  BnMode mode = BnMode::kTrain;

  static BatchNormParams identity(std::size_t channels, T gamma = T(1));
};

/// Per-channel normalization over (B, H, W). In train mode uses biased batch
/// statistics and blends them into the running estimates as
/// running = momentum * running + (1 - momentum) * batch.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, BatchNormParams<T>& p);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

/// Max pooling with implicit -inf padding.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding);

/// Batch mean of -log softmax(logits)[label].
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

// Graph builders ----------------------------------------------------------

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, ConvSpec spec, std::string label = {});

struct BatchNormVars {
  Var gamma, beta, running_mean, running_var;
};

/// In train mode the node's aux outputs are {batch_mean, batch_var}. The
/// running statistics are never differentiated.
template <typename T>
Var batch_norm(Graph<T>& g, Var x, const BatchNormVars& v, BnMode mode, T eps = T(1e-5), std::string label = {});

template <typename T>
Var global_avg_pool(Graph<T>& g, Var x);

template <typename T>
Var max_pool2d(Graph<T>& g, Var x, std::size_t kernel, std::size_t stride, std::size_t padding);

/// labels: [B] tensor holding integral class ids.
template <typename T>
Var softmax_cross_entropy(Graph<T>& g, Var logits, Var labels);

}  // namespace dbt::nn
