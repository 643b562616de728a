#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "dbt/bilinear/config.hpp"
#include "dbt/bilinear/grouping.hpp"
#include "dbt/nn/layers.hpp"

namespace dbt::bilinear {

/// Graph handles for the learnable state of one DBT block.
struct DbtBlockVars {
  Var sg_weight;            // [N, C_in, 1, 1]
  nn::BatchNormVars sg_bn;  // normalizes the semantic-grouping conv
  nn::BatchNormVars out_bn; // normalizes tanh(group bilinear); gamma starts at 0
};

struct DbtBlockNodes {
  Var output;          // [B, N, H', W']
  Var sg_output;       // semantic-grouping feature after BN + ReLU
  Var grouping_terms;  // [2] (intra, inter)
  Var grouping_loss;   // [1] intra + inter
  Var sg_bn;           // BN nodes, for running-statistics updates
  Var out_bn;
};

/// Appends a DBT block:
///   s   = ReLU(BN(conv1x1(x, stride)))          semantic grouping
///   b   = group_bilinear(s) (+ index encoding)  [B, (N/G)^2, H', W']
///   b   = channel_interpolate(b, N)             when (N/G)^2 != N
///   out = BN(tanh(b)) (+ s when use_shortcut)
/// The grouping loss is measured on s.
template <typename T>
DbtBlockNodes build_dbt_block(Graph<T>& g, Var x, const DbtBlockVars& v, const DbtConfig& cfg, nn::BnMode mode,
                              std::size_t stride = 1, const std::string& label = "dbt");

template <typename T>
struct DbtBlockParams {
  Tensor<T> sg_weight;
  nn::BatchNormParams<T> sg_bn;
  nn::BatchNormParams<T> out_bn;

  /// Kaiming fan-in normal SG weights from `seed`, identity SG BN, and the
  /// bilinear-branch BN with zero scale.
  static DbtBlockParams init(std::size_t in_channels, const DbtConfig& cfg, std::uint64_t seed);
};

template <typename T>
struct DbtBlockResult {
  Tensor<T> output;
  Tensor<T> sg_output;
  GroupingLossReport grouping;
};

/// Runs one block outside a larger network. In train mode the running BN
/// statistics in `params` are updated.
template <typename T>
DbtBlockResult<T> dbt_block_forward(const Tensor<T>& x, DbtBlockParams<T>& params, const DbtConfig& cfg,
                                    nn::BnMode mode = nn::BnMode::kTrain, std::size_t stride = 1);

}  // namespace dbt::bilinear
