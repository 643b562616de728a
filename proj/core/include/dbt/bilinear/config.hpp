#pragma once

#include <cstddef>

#include "dbt/engine/tensor.hpp"

namespace dbt::bilinear {

/// Hyperparameters of one deep bilinear transformation block.
struct DbtConfig {
  std::size_t channels = 16;  // N, the semantic-grouping layer width
  std::size_t groups = 4;     // G, contiguous channel blocks of size N / G
  double t = 1.5;             // group index encoding frequency
  bool use_encoding = true;
  bool use_shortcut = true;
  double grouping_loss_weight = 3e-4;  // lambda
  /// Divide intra/inter sums by their ordered-pair counts.
  bool normalize_grouping_loss = false;

  std::size_t group_size() const noexcept { return groups ? channels / groups : 0; }
  /// Channel count produced by the group bilinear layer, (N / G)^2.
  std::size_t bilinear_channels() const noexcept { return group_size() * group_size(); }
  bool needs_interpolation() const noexcept { return bilinear_channels() != channels; }

  /// Throws kConfig unless N mod G == 0, N / G >= 2, t > 0, lambda >= 0.
  void validate() const;

  bool operator==(const DbtConfig&) const = default;
};

/// Sinusoidal table P of shape [G, N/G]; row j is added to group j.
template <typename T>
struct GroupIndexEncoding {
  Tensor<T> table;
};

/// P(j, 2i) = sin(j / t^(2i / (N/G))), P(j, 2i+1) = cos(same argument). With
/// odd N/G the trailing unpaired slot uses the sine form.
template <typename T>
GroupIndexEncoding<T> group_index_encoding(const DbtConfig& cfg);

}  // namespace dbt::bilinear
