#pragma once

#include <cstddef>
#include <optional>

#include "dbt/bilinear/config.hpp"
#include "dbt/engine/graph.hpp"

namespace dbt::bilinear {

/// Per-position intra-group bilinear with aggregation over groups.
///
/// For every sample and spatial position the N-vector is split into G
/// contiguous groups g_j of size n = N/G; the output is the row-major
/// vec(sum_j (g_j + P_j)(g_j + P_j)^T), shape [B, n*n, H, W]. `enc` must be
/// given exactly when cfg.use_encoding is set.
template <typename T>
Tensor<T> group_bilinear(const Tensor<T>& x, const DbtConfig& cfg, const GroupIndexEncoding<T>* enc);

/// Linear resampling along the channel axis with aligned endpoints: output
/// channel k samples input position k (M-1)/(target-1).
template <typename T>
Tensor<T> channel_interpolate(const Tensor<T>& y, std::size_t target);

template <typename T>
Var group_bilinear(Graph<T>& g, Var x, const DbtConfig& cfg, std::string label = {});

template <typename T>
Var channel_interpolate(Graph<T>& g, Var y, std::size_t target);

}  // namespace dbt::bilinear
