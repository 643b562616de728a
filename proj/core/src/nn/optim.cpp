#include "dbt/nn/optim.hpp"

#include <cmath>
#include <numbers>

#include "common/checks.hpp"

namespace dbt::nn {

void SgdCosineConfig::validate() const {
  detail::expect(total_steps >= 1, ErrorKind::kConfig, "total_steps must be positive");
  detail::expect(lr_max >= lr_min && lr_min >= 0.0, ErrorKind::kConfig, "require lr_max >= lr_min >= 0");
  detail::expect(momentum >= 0.0 && momentum < 1.0, ErrorKind::kConfig, "momentum must lie in [0, 1)");
  detail::expect(weight_decay >= 0.0, ErrorKind::kConfig, "weight_decay must be non-negative");
}

double cosine_lr(std::size_t step, const SgdCosineConfig& cfg) {
  if (step >= cfg.total_steps) {
    fail(ErrorKind::kConfig, "step " + std::to_string(step) + " >= total_steps " + std::to_string(cfg.total_steps));
  }
  const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.lr_min + 0.5 * (cfg.lr_max - cfg.lr_min) * (1.0 + std::cos(phase));
}

template <typename T>
SgdCosine<T>::SgdCosine(SgdCosineConfig cfg) : cfg_(cfg) {
  cfg_.validate();
}

template <typename T>
double SgdCosine<T>::step(ParamMap<T>& params, const ParamMap<T>& grads, std::size_t step) {
  const double lr = cosine_lr(step, cfg_);
  const T lr_t = static_cast<T>(lr);
  const T mom = static_cast<T>(cfg_.momentum);
  const T wd = static_cast<T>(cfg_.weight_decay);
  for (auto& [name, p] : params) {
    auto g_it = grads.find(name);
    const Tensor<T>* g = g_it == grads.end() ? nullptr : &g_it->second;
    if (g) detail::expect_shape(g->shape(), p.shape(), ("gradient for " + name).c_str());
    auto [buf_it, fresh] = buffers_.try_emplace(name, Tensor<T>(p.shape()));
    auto buf = buf_it->second.data();
    auto data = p.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const T grad = (g ? (*g)[i] : T(0)) + wd * data[i];
      buf[i] = mom * buf[i] + grad;
      data[i] -= lr_t * buf[i];
    }
  }
  return lr;
}

template class SgdCosine<float>;
template class SgdCosine<double>;

}  // namespace dbt::nn
