#include "dbt/model/network.hpp"

#include <cmath>

#include "dbt/engine/ops.hpp"
#include "dbt/random.hpp"

namespace dbt::model {

namespace {

enum class Init { kConv, kFcWeight, kOnes, kZeros };

struct ParamSpec {
  std::string name;
  Shape shape;
  Init init;
  std::size_t fan_in = 1;
  bool learnable = true;
};

template <typename T>
class Builder {
 public:
  Builder(NetGraph<T>& net, std::vector<ParamSpec>* specs) : net_(net), g_(net.graph), specs_(specs) {}

  Var param(const std::string& name, Shape shape, Init init, std::size_t fan_in = 1) {
    if (specs_) specs_->push_back({name, std::move(shape), init, fan_in, true});
    return g_.input(name, true);
  }

  Var buffer(const std::string& name, Shape shape, Init init) {
    if (specs_) specs_->push_back({name, std::move(shape), init, 1, false});
    return g_.input(name, false);
  }

  Var conv_weight(const std::string& prefix, std::size_t out, std::size_t in, std::size_t k) {
    return param(prefix + ".weight", {out, in, k, k}, Init::kConv, in * k * k);
  }

  nn::BatchNormVars bn_vars(const std::string& prefix, std::size_t c, bool zero_scale = false) {
    return {param(prefix + ".gamma", {c}, zero_scale ? Init::kZeros : Init::kOnes),
            param(prefix + ".beta", {c}, Init::kZeros), buffer(prefix + ".running_mean", {c}, Init::kZeros),
            buffer(prefix + ".running_var", {c}, Init::kOnes)};
  }

  Var bn(Var x, const std::string& prefix, std::size_t c) {
    Var y = nn::batch_norm(g_, x, bn_vars(prefix, c), net_.mode, T(1e-5), prefix);
    net_.bn.push_back({prefix, y});
    return y;
  }

  Var conv_bn(Var x, const std::string& prefix, const std::string& bn_prefix, std::size_t in, std::size_t out,
              std::size_t k, std::size_t stride, std::size_t pad) {
    Var w = conv_weight(prefix, out, in, k);
    return bn(nn::conv2d(g_, x, w, nn::ConvSpec{stride, pad}, prefix), bn_prefix, out);
  }

  // SG 1x1 conv (named like the plain block's first conv) + bilinear branch.
  Var dbt(Var x, const std::string& prefix, const std::string& stage, std::size_t in,
          const bilinear::DbtConfig& cfg, std::size_t stride) {
    bilinear::DbtBlockVars v{conv_weight(prefix + ".conv1", cfg.channels, in, 1), bn_vars(prefix + ".bn1", cfg.channels),
                             bn_vars(prefix + ".dbt_bn", cfg.channels, true)};
    auto n = bilinear::build_dbt_block(g_, x, v, cfg, net_.mode, stride, prefix + ".dbt");
    net_.bn.push_back({prefix + ".bn1", n.sg_bn});
    net_.bn.push_back({prefix + ".dbt_bn", n.out_bn});
    net_.dbt.push_back({prefix, stage, cfg, n.sg_output, n.grouping_terms, n.grouping_loss});
    return n.output;
  }

  Var bottleneck(Var x, const std::string& prefix, const StageSpec& s, std::size_t in, std::size_t stride) {
    Var h;
    if (s.block == BlockType::kDbt) {
      h = dbt(x, prefix, s.name, in, *s.dbt, stride);
    } else {
      h = ops::relu(g_, conv_bn(x, prefix + ".conv1", prefix + ".bn1", in, s.width, 1, stride, 0));
    }
    h = ops::relu(g_, conv_bn(h, prefix + ".conv2", prefix + ".bn2", s.width, s.width, 3, 1, 1));
    h = conv_bn(h, prefix + ".conv3", prefix + ".bn3", s.width, s.out, 1, 1, 0);
    Var shortcut = x;
    if (stride != 1 || in != s.out) shortcut = conv_bn(x, prefix + ".proj", prefix + ".proj_bn", in, s.out, 1, stride, 0);
    return ops::relu(g_, ops::add(g_, h, shortcut));
  }

  void build(const ArchDescriptor& d, bool with_loss) {
    d.validate();
    net_.input = g_.input(kInputName);
    const auto& st = d.stem;
    Var h = ops::relu(g_, conv_bn(net_.input, "stem.conv", "stem.bn", d.input_channels, st.channels, st.kernel,
                                  st.stride, st.padding));
    if (st.max_pool) h = nn::max_pool2d(g_, h, 3, 2, 1);
    std::size_t in = st.channels;
    for (const auto& s : d.stages) {
      for (std::size_t i = 0; i < s.repeat; ++i) {
        h = bottleneck(h, s.name + "." + std::to_string(i), s, in, i == 0 ? s.stride : 1);
        in = s.out;
      }
    }
    if (d.head.use_last_dbt) h = dbt(h, "last", "last", in, *d.head.last_dbt, 1);
    Var pooled = nn::global_avg_pool(g_, h);
    Var w = param("fc.weight", {in, d.head.classes}, Init::kFcWeight, in);
    Var b = param("fc.bias", {d.head.classes}, Init::kZeros);
    net_.logits = ops::add_channel_bias(g_, ops::matmul(g_, pooled, w), b);
    g_.mark_output("logits", net_.logits);
    if (!with_loss) return;

    net_.labels = g_.input(kLabelsName);
    net_.loss_c = nn::softmax_cross_entropy(g_, net_.logits, net_.labels);
    Var total = net_.loss_c;
    Var gsum;
    for (const auto& tap : net_.dbt) {
      gsum = gsum.valid() ? ops::add(g_, gsum, tap.grouping_loss) : tap.grouping_loss;
      total = ops::add(g_, total, ops::scale(g_, tap.grouping_loss, static_cast<T>(tap.config.grouping_loss_weight)));
    }
    net_.loss_g_sum = gsum.valid() ? gsum : g_.constant(Tensor<T>({1}), "no grouping loss");
    net_.total_loss = total;
    g_.mark_output("loss_c", net_.loss_c);
    g_.mark_output("loss_g_sum", net_.loss_g_sum);
    g_.mark_output("total_loss", net_.total_loss);
  }

 private:
  NetGraph<T>& net_;
  Graph<T>& g_;
  std::vector<ParamSpec>* specs_;
};

}  // namespace

template <typename T>
std::uint64_t Model<T>::param_count() const {
  std::uint64_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

template <typename T>
Bindings<T> Model<T>::bindings() const {
  Bindings<T> b = params;
  b.insert(buffers.begin(), buffers.end());
  return b;
}

template <typename T>
Model<T> build_network(const ArchDescriptor& desc, std::size_t classes, std::uint64_t seed) {
  ArchDescriptor d = desc;
  d.head.classes = classes;
  d.validate();
  NetGraph<T> scratch;
  std::vector<ParamSpec> specs;
  Builder<T>(scratch, &specs).build(d, false);

  Model<T> m;
  m.descriptor = d;
  const CounterRng root(seed);
  for (const auto& s : specs) {
    Tensor<T> t(s.shape);
    CounterRng rng = root.split(s.name);
    switch (s.init) {
      case Init::kConv: {
        const double sd = std::sqrt(2.0 / static_cast<double>(s.fan_in));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(sd * rng.normal());
        break;
      }
      case Init::kFcWeight: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.fan_in));
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(bound * (2.0 * rng.uniform() - 1.0));
        break;
      }
      case Init::kOnes:
        t = Tensor<T>::full(s.shape, T(1));
        break;
      case Init::kZeros:
        break;
    }
    (s.learnable ? m.params : m.buffers).emplace(s.name, std::move(t));
  }
  return m;
}

template <typename T>
NetGraph<T> build_graph(const ArchDescriptor& d, nn::BnMode mode, bool with_loss) {
  NetGraph<T> net;
  net.mode = mode;
  Builder<T>(net, nullptr).build(d, with_loss);
  return net;
}

template <typename T>
void update_running_stats(const NetGraph<T>& g, Model<T>& m, T momentum) {
  if (g.mode != nn::BnMode::kTrain) return;
  for (const auto& tap : g.bn) {
    const auto& aux = g.graph.aux(tap.node);
    auto& rm = m.buffers.at(tap.prefix + ".running_mean");
    auto& rv = m.buffers.at(tap.prefix + ".running_var");
    for (std::size_t c = 0; c < rm.size(); ++c) {
      rm[c] = momentum * rm[c] + (T(1) - momentum) * aux.at(0)[c];
      rv[c] = momentum * rv[c] + (T(1) - momentum) * aux.at(1)[c];
    }
  }
}

template <typename T>
Tensor<T> forward(Model<T>& m, const Tensor<T>& images, nn::BnMode mode) {
  auto net = build_graph<T>(m.descriptor, mode, false);
  auto b = m.bindings();
  b[kInputName] = images;
  auto out = net.graph.evaluate(b);
  update_running_stats(net, m);
  return out.at("logits");
}

#define DBT_INSTANTIATE_NETWORK(T)                                                        \
  template struct Model<T>;                                                               \
  template Model<T> build_network(const ArchDescriptor&, std::size_t, std::uint64_t);     \
  template NetGraph<T> build_graph(const ArchDescriptor&, nn::BnMode, bool);              \
  template void update_running_stats(const NetGraph<T>&, Model<T>&, T);                   \
  template Tensor<T> forward(Model<T>&, const Tensor<T>&, nn::BnMode);

DBT_INSTANTIATE_NETWORK(float)
DBT_INSTANTIATE_NETWORK(double)

#undef DBT_INSTANTIATE_NETWORK

}  // namespace dbt::model
