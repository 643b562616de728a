#pragma once

#include <cstddef>

#include "dbt/engine/graph.hpp"

// Elementary differentiable primitives. Each builder appends one node to the
// graph and returns its handle; shapes are checked when the graph is
// evaluated.
namespace dbt::ops {

template <typename T>
Var add(Graph<T>& g, Var a, Var b);
template <typename T>
Var sub(Graph<T>& g, Var a, Var b);
/// Elementwise product.
template <typename T>
Var mul(Graph<T>& g, Var a, Var b);
template <typename T>
Var scale(Graph<T>& g, Var a, T factor);

/// [M,K] x [K,N] -> [M,N].
template <typename T>
Var matmul(Graph<T>& g, Var a, Var b);

template <typename T>
Var reshape(Graph<T>& g, Var a, Shape shape);

/// Channel-axis (axis 1) slice [begin, end).
template <typename T>
Var slice_channels(Graph<T>& g, Var a, std::size_t begin, std::size_t end);
template <typename T>
Var concat_channels(Graph<T>& g, Var a, Var b);

/// Reductions to shape [1].
template <typename T>
Var sum(Graph<T>& g, Var a);
template <typename T>
Var mean(Graph<T>& g, Var a);

template <typename T>
Var tanh(Graph<T>& g, Var a);
template <typename T>
Var relu(Graph<T>& g, Var a);
template <typename T>
Var exp(Graph<T>& g, Var a);
template <typename T>
Var log(Graph<T>& g, Var a);

/// Adds a [C] vector along axis 1 of a [B,C,...] tensor.
template <typename T>
Var add_channel_bias(Graph<T>& g, Var x, Var bias);

}  // namespace dbt::ops
