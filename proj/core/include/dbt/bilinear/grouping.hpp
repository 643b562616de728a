#pragma once

#include <cstddef>
#include <span>

#include "dbt/engine/graph.hpp"

namespace dbt::bilinear {

/// Guard added to the norm product of the cosine correlation.
inline constexpr double kCorrelationEps = 1e-8;

/// Cosine similarity mi . mj / (|mi| |mj| + eps).
template <typename T>
T pairwise_correlation(std::span<const T> mi, std::span<const T> mj);

struct GroupingLossReport {
  double intra = 0.0;  // -sum of d_ij^2 over ordered intra-group pairs, i != j
  double inter = 0.0;  // +sum of d_ij^2 over ordered inter-group pairs
  double total = 0.0;  // intra + inter
};

/// Semantic grouping loss of features [B, N, H, W] averaged over the batch.
/// Channel i belongs to group floor(i / (N/G)).
template <typename T>
GroupingLossReport grouping_loss(const Tensor<T>& features, std::size_t groups, bool normalize = false);

/// Graph node of shape [2] holding the batch-mean (intra, inter) pair.
template <typename T>
Var grouping_loss_terms(Graph<T>& g, Var features, std::size_t groups, bool normalize = false);

/// Number of ordered intra-group and inter-group channel pairs (i != j).
struct PairCounts {
  std::size_t intra, inter;
};
PairCounts grouping_pair_counts(std::size_t channels, std::size_t groups);

}  // namespace dbt::bilinear
