#include "dbt/bilinear/block.hpp"

#include <cmath>

#include "dbt/bilinear/group_bilinear.hpp"
#include "dbt/engine/ops.hpp"
#include "dbt/random.hpp"

namespace dbt::bilinear {

template <typename T>
DbtBlockNodes build_dbt_block(Graph<T>& g, Var x, const DbtBlockVars& v, const DbtConfig& cfg, nn::BnMode mode,
                              std::size_t stride, const std::string& label) {
  cfg.validate();
  DbtBlockNodes n;
  Var s = nn::conv2d(g, x, v.sg_weight, nn::ConvSpec{stride, 0}, label + ".sg_conv");
  n.sg_bn = nn::batch_norm(g, s, v.sg_bn, mode, T(1e-5), label + ".sg_bn");
  n.sg_output = ops::relu(g, n.sg_bn);
  n.grouping_terms = grouping_loss_terms(g, n.sg_output, cfg.groups, cfg.normalize_grouping_loss);
  n.grouping_loss = ops::sum(g, n.grouping_terms);

  Var b = group_bilinear(g, n.sg_output, cfg, label + ".group_bilinear");
  if (cfg.needs_interpolation()) b = channel_interpolate(g, b, cfg.channels);
  b = ops::tanh(g, b);
  n.out_bn = nn::batch_norm(g, b, v.out_bn, mode, T(1e-5), label + ".out_bn");
  n.output = cfg.use_shortcut ? ops::add(g, n.out_bn, n.sg_output) : n.out_bn;
  return n;
}

template <typename T>
DbtBlockParams<T> DbtBlockParams<T>::init(std::size_t in_channels, const DbtConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DbtBlockParams p;
  p.sg_weight = Tensor<T>({cfg.channels, in_channels, 1, 1});
  CounterRng rng = CounterRng(seed).split("sg.weight");
  const double sd = std::sqrt(2.0 / static_cast<double>(in_channels));
  for (std::size_t i = 0; i < p.sg_weight.size(); ++i) p.sg_weight[i] = static_cast<T>(sd * rng.normal());
  p.sg_bn = nn::BatchNormParams<T>::identity(cfg.channels);
  p.out_bn = nn::BatchNormParams<T>::identity(cfg.channels, T(0));
  return p;
}

namespace {

template <typename T>
nn::BatchNormVars bind_bn(Graph<T>& g, Bindings<T>& b, const std::string& prefix, const nn::BatchNormParams<T>& p) {
  nn::BatchNormVars v{g.input(prefix + ".gamma"), g.input(prefix + ".beta"), g.input(prefix + ".running_mean"),
                      g.input(prefix + ".running_var")};
  b[prefix + ".gamma"] = p.scale;
  b[prefix + ".beta"] = p.shift;
  b[prefix + ".running_mean"] = p.running_mean;
  b[prefix + ".running_var"] = p.running_var;
  return v;
}

template <typename T>
void update_running(const Graph<T>& g, Var node, nn::BatchNormParams<T>& p) {
  const auto& aux = g.aux(node);
  for (std::size_t c = 0; c < p.running_mean.size(); ++c) {
    p.running_mean[c] = p.momentum * p.running_mean[c] + (T(1) - p.momentum) * aux.at(0)[c];
    p.running_var[c] = p.momentum * p.running_var[c] + (T(1) - p.momentum) * aux.at(1)[c];
  }
}

}  // namespace

template <typename T>
DbtBlockResult<T> dbt_block_forward(const Tensor<T>& x, DbtBlockParams<T>& params, const DbtConfig& cfg,
                                    nn::BnMode mode, std::size_t stride) {
  Graph<T> g;
  Bindings<T> b;
  DbtBlockVars v;
  Var xv = g.input("x");
  b["x"] = x;
  v.sg_weight = g.input("sg.weight");
  b["sg.weight"] = params.sg_weight;
  v.sg_bn = bind_bn(g, b, "sg_bn", params.sg_bn);
  v.out_bn = bind_bn(g, b, "out_bn", params.out_bn);
  const auto nodes = build_dbt_block(g, xv, v, cfg, mode, stride);
  g.evaluate(b);
  if (mode == nn::BnMode::kTrain) {
    update_running(g, nodes.sg_bn, params.sg_bn);
    update_running(g, nodes.out_bn, params.out_bn);
  }
  const auto& terms = g.value(nodes.grouping_terms);
  GroupingLossReport rep{static_cast<double>(terms[0]), static_cast<double>(terms[1]), 0.0};
  rep.total = rep.intra + rep.inter;
  return {g.value(nodes.output), g.value(nodes.sg_output), rep};
}

#define DBT_INSTANTIATE_BLOCK(T)                                                                              \
  template DbtBlockNodes build_dbt_block(Graph<T>&, Var, const DbtBlockVars&, const DbtConfig&, nn::BnMode,  \
                                         std::size_t, const std::string&);                                    \
  template struct DbtBlockParams<T>;                                                                          \
  template DbtBlockResult<T> dbt_block_forward(const Tensor<T>&, DbtBlockParams<T>&, const DbtConfig&,        \
                                               nn::BnMode, std::size_t);

DBT_INSTANTIATE_BLOCK(float)
DBT_INSTANTIATE_BLOCK(double)

#undef DBT_INSTANTIATE_BLOCK

}  // namespace dbt::bilinear
