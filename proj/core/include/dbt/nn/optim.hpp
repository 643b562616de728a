#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "dbt/engine/tensor.hpp"

namespace dbt::nn {

struct SgdCosineConfig {
  double lr_max = 0.1;
  double lr_min = 0.0;
  std::size_t total_steps = 1;
  double momentum = 0.9;
  double weight_decay = 0.0;

  void validate() const;
};

/// lr(step) = lr_min + 0.5 (lr_max - lr_min)(1 + cos(pi step / total_steps)).
double cosine_lr(std::size_t step, const SgdCosineConfig& cfg);

template <typename T>
using ParamMap = std::map<std::string, Tensor<T>>;

/// SGD with heavy-ball momentum and L2 weight decay:
///   buf = momentum * buf + (grad + weight_decay * param)
///   param -= lr(step) * buf
template <typename T>
class SgdCosine {
 public:
  explicit SgdCosine(SgdCosineConfig cfg);

  /// Updates every entry of `params` in place; a parameter without a
  /// gradient is treated as having a zero gradient. Returns the lr used.
  double step(ParamMap<T>& params, const ParamMap<T>& grads, std::size_t step);

  const SgdCosineConfig& config() const noexcept { return cfg_; }

 private:
  SgdCosineConfig cfg_;
  ParamMap<T> buffers_;
};

extern template class SgdCosine<float>;
extern template class SgdCosine<double>;

}  // namespace dbt::nn
