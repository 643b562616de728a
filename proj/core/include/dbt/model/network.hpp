#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbt/bilinear/block.hpp"
#include "dbt/model/arch.hpp"
#include "dbt/nn/optim.hpp"

namespace dbt::model {

/// Parameters and BN running statistics of a built network, keyed by
/// dotted names such as "IV.0.conv1.weight" or "fc.bias".
template <typename T>
struct Model {
  ArchDescriptor descriptor;
  nn::ParamMap<T> params;   // learnable
  nn::ParamMap<T> buffers;  // running_mean / running_var

  std::uint64_t param_count() const;
  /// params and buffers together, as graph bindings.
  Bindings<T> bindings() const;
};

/// Deterministic initialization: every tensor is drawn from a stream keyed by
/// (seed, tensor name), so equally named tensors of two descriptors match.
/// Convs use fan-in scaled normals, BN scale 1 except the bilinear-branch BN
/// (scale 0), FC weights uniform in +-1/sqrt(fan_in), biases 0.
template <typename T>
Model<T> build_network(const ArchDescriptor& d, std::size_t classes, std::uint64_t seed);

struct DbtTap {
  std::string block;  // "IV.1", "last"
  std::string stage;  // "IV", "last"
  bilinear::DbtConfig config;
  Var sg_output;
  Var grouping_terms;
  Var grouping_loss;
};

struct BnTap {
  std::string prefix;  // parameter prefix, e.g. "IV.0.bn1"
  Var node;
};

/// Graph of the whole network for one BN mode. Independent of batch size;
/// rebind "input" (and "labels") per batch.
template <typename T>
struct NetGraph {
  Graph<T> graph;
  nn::BnMode mode = nn::BnMode::kTrain;
  Var input;
  Var logits;
  Var labels;       // only when built with a loss
  Var loss_c;       // mean softmax cross entropy
  Var loss_g_sum;   // sum of grouping losses over DBT blocks (unweighted)
  Var total_loss;   // loss_c + sum_b lambda_b L_g^b
  std::vector<DbtTap> dbt;
  std::vector<BnTap> bn;
};

inline constexpr const char* kInputName = "input";
inline constexpr const char* kLabelsName = "labels";

template <typename T>
NetGraph<T> build_graph(const ArchDescriptor& d, nn::BnMode mode, bool with_loss);

/// Blends the batch statistics recorded by the last train-mode evaluation
/// into the model's running buffers.
template <typename T>
void update_running_stats(const NetGraph<T>& g, Model<T>& m, T momentum = T(0.9));

/// Logits for a batch of images. Train mode also updates running statistics.
template <typename T>
Tensor<T> forward(Model<T>& m, const Tensor<T>& images, nn::BnMode mode);

}  // namespace dbt::model
