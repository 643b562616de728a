#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbt/model/arch.hpp"

namespace dbt::model {

/// Learnable scalar count: conv weights, BN scale/shift, FC weight and bias.
std::uint64_t count_params(const ArchDescriptor& d);

struct BlockCost {
  std::string name;  // e.g. "III.0", "stem", "fc", "last"
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::uint64_t dbt_overhead = 0;  // group bilinear + encoding + interpolation
};

struct StageCost {
  std::string name;
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::uint64_t dbt_overhead = 0;
};

/// Multiply-add counts (1 multiply-add = 1 FLOP). BN, activations and
/// pooling are excluded.
struct CostReport {
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
  std::uint64_t max_block_dbt_overhead = 0;
  std::uint64_t total_dbt_overhead = 0;
  std::vector<StageCost> stages;
  std::vector<BlockCost> blocks;
};

/// Group-bilinear multiply-adds per spatial position: G (N/G)^2.
std::uint64_t group_bilinear_flops_per_position(const bilinear::DbtConfig& c);
/// Full bilinear-block overhead at a spatial extent of hw positions.
std::uint64_t dbt_overhead_flops(const bilinear::DbtConfig& c, std::uint64_t hw);

CostReport count_flops(const ArchDescriptor& d, std::size_t input_size);

struct FeatureShape {
  std::string name;  // "stem", "pool", stage names, "last"
  std::size_t channels, height, width;
};

/// Symbolic forward pass recording the feature shape after the stem, the
/// max pool and every stage.
std::vector<FeatureShape> trace_shapes(const ArchDescriptor& d, std::size_t input_size);

/// Machine-readable dump of a cost report.
std::string cost_report_json(const ArchDescriptor& d, std::size_t input_size, const CostReport& r);
/// Human-readable table.
std::string cost_report_text(const ArchDescriptor& d, std::size_t input_size, const CostReport& r);

}  // namespace dbt::model
