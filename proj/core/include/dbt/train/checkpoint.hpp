#pragma once

#include <map>
#include <string>

#include "dbt/engine/tensor.hpp"
#include "dbt/model/network.hpp"

namespace dbt::train {

using TensorMap = std::map<std::string, Tensor<float>>;

/// Checkpoint container, little-endian:
///   "DBTC" | version u32 = 1 | tensor count u32 | per tensor:
///   name length u16, name bytes, rank u8, dims u32 each, f32 payload.
/// Tensors are written in name order.
void write_tensors(const TensorMap& tensors, const std::string& path);
/// Throws kIo when unreadable and kFormat on a malformed container.
TensorMap read_tensors(const std::string& path);

/// Parameters and BN running statistics.
void save_checkpoint(const model::Model<float>& m, const std::string& path);

/// Replaces the model's tensors with the checkpoint's. Every name and shape is
/// checked first; on any difference the model is left untouched and kShape
/// lists each missing, unexpected, or mis-shaped tensor.
void load_checkpoint(model::Model<float>& m, const std::string& path);

}  // namespace dbt::train
