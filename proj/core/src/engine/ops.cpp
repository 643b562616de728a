#include "dbt/engine/ops.hpp"

#include <cmath>
#include <functional>

#include "common/checks.hpp"
#include "common/eigen.hpp"

namespace dbt::ops {

namespace {

using detail::expect_rank;
using detail::expect_shape;

template <typename T>
class BinaryOp final : public Op<T> {
 public:
  enum class Kind { kAdd, kSub, kMul };
  explicit BinaryOp(Kind kind) : kind_(kind) {}

  std::string name() const override {
    switch (kind_) {
      case Kind::kAdd:
        return "add";
      case Kind::kSub:
        return "sub";
      case Kind::kMul:
        return "mul";
    }
    return "binary";
  }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override {
    const auto& a = *in[0];
    const auto& b = *in[1];
    expect_shape(b.shape(), a.shape(), "elementwise operand");
    Tensor<T> out(a.shape());
    auto o = out.data();
    auto x = a.data();
    auto y = b.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
      switch (kind_) {
        case Kind::kAdd:
          o[i] = x[i] + y[i];
          break;
        case Kind::kSub:
          o[i] = x[i] - y[i];
          break;
        case Kind::kMul:
          o[i] = x[i] * y[i];
          break;
      }
    }
    return out;
  }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout,
                                  const OpContext<T>&, std::span<const bool> need) const override {
    std::vector<Tensor<T>> g(2);
    if (kind_ != Kind::kMul) {
      if (need[0]) g[0] = gout;
      if (need[1]) {
        g[1] = gout;
        if (kind_ == Kind::kSub) {
          for (auto& v : g[1].data()) v = -v;
        }
      }
      return g;
    }
    for (int k = 0; k < 2; ++k) {
      if (!need[k]) continue;
      const auto& other = *in[1 - k];
      Tensor<T> d(gout.shape());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = gout[i] * other[i];
      g[k] = std::move(d);
    }
    return g;
  }

 private:
  Kind kind_;
};

template <typename T>
class ScaleOp final : public Op<T> {
 public:
  explicit ScaleOp(T factor) : factor_(factor) {}
  std::string name() const override { return "scale"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override {
    Tensor<T> out = *in[0];
    for (auto& v : out.data()) v *= factor_;
    return out;
  }

  std::vector<Tensor<T>> backward(Inputs<T>, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>&,
                                  std::span<const bool>) const override {
    Tensor<T> g = gout;
    for (auto& v : g.data()) v *= factor_;
    return {std::move(g)};
  }

 private:
  T factor_;
};

template <typename T>
class MatmulOp final : public Op<T> {
 public:
  std::string name() const override { return "matmul"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override {
    const auto& a = *in[0];
    const auto& b = *in[1];
    expect_rank(a.shape(), 2, "matmul lhs");
    expect_rank(b.shape(), 2, "matmul rhs");
    if (a.dim(1) != b.dim(0)) {
      fail(ErrorKind::kShape, "matmul inner dims: lhs " + shape_to_string(a.shape()) + " vs rhs " +
                                  shape_to_string(b.shape()));
    }
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> out({m, n});
    detail::MatMap<T>(out.data().data(), m, n).noalias() =
        detail::ConstMatMap<T>(a.data().data(), m, k) * detail::ConstMatMap<T>(b.data().data(), k, n);
    return out;
  }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>&,
                                  std::span<const bool> need) const override {
    const auto& a = *in[0];
    const auto& b = *in[1];
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    detail::ConstMatMap<T> A(a.data().data(), m, k), B(b.data().data(), k, n), G(gout.data().data(), m, n);
    std::vector<Tensor<T>> g(2);
    if (need[0]) {
      g[0] = Tensor<T>({m, k});
      detail::MatMap<T>(g[0].data().data(), m, k).noalias() = G * B.transpose();
    }
    if (need[1]) {
      g[1] = Tensor<T>({k, n});
      detail::MatMap<T>(g[1].data().data(), k, n).noalias() = A.transpose() * G;
    }
    return g;
  }
};

template <typename T>
class ReshapeOp final : public Op<T> {
 public:
  explicit ReshapeOp(Shape shape) : shape_(std::move(shape)) {}
  std::string name() const override { return "reshape"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override { return in[0]->reshaped(shape_); }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>&,
                                  std::span<const bool>) const override {
    return {gout.reshaped(in[0]->shape())};
  }

 private:
  Shape shape_;
};

// Views a [B, C, rest...] tensor as B rows of C * inner elements.
struct ChannelLayout {
  std::size_t batch, channels, inner;
};

inline ChannelLayout channel_layout(const Shape& s, const char* what) {
  if (s.size() < 2) fail(ErrorKind::kShape, std::string(what) + ": expected rank >= 2, got " + shape_to_string(s));
  std::size_t inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= s[i];
  return {s[0], s[1], inner};
}

template <typename T>
class SliceChannelsOp final : public Op<T> {
 public:
  SliceChannelsOp(std::size_t begin, std::size_t end) : begin_(begin), end_(end) {}
  std::string name() const override { return "slice_channels"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override {
    const auto& x = *in[0];
    const auto l = channel_layout(x.shape(), "slice_channels");
    if (begin_ >= end_ || end_ > l.channels) {
      fail(ErrorKind::kShape, "slice_channels [" + std::to_string(begin_) + "," + std::to_string(end_) +
                                  ") out of range for " + shape_to_string(x.shape()));
    }
    Shape s = x.shape();
    s[1] = end_ - begin_;
    Tensor<T> out(s);
    const std::size_t w = (end_ - begin_) * l.inner;
    for (std::size_t b = 0; b < l.batch; ++b) {
      const T* src = x.data().data() + (b * l.channels + begin_) * l.inner;
      std::copy(src, src + w, out.data().data() + b * w);
    }
    return out;
  }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>&,
                                  std::span<const bool>) const override {
    const auto& x = *in[0];
    const auto l = channel_layout(x.shape(), "slice_channels");
    Tensor<T> g(x.shape());
    const std::size_t w = (end_ - begin_) * l.inner;
    for (std::size_t b = 0; b < l.batch; ++b) {
      const T* src = gout.data().data() + b * w;
      std::copy(src, src + w, g.data().data() + (b * l.channels + begin_) * l.inner);
    }
    return {std::move(g)};
  }

 private:
  std::size_t begin_, end_;
};

template <typename T>
class ConcatChannelsOp final : public Op<T> {
 public:
  std::string name() const override { return "concat_channels"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override {
    const auto& a = *in[0];
    const auto& b = *in[1];
    const auto la = channel_layout(a.shape(), "concat lhs");
    const auto lb = channel_layout(b.shape(), "concat rhs");
    Shape expect = b.shape();
    expect[1] = a.dim(1);
    expect_shape(a.shape(), expect, "concat_channels (non-channel dims must agree)");
    Shape s = a.shape();
    s[1] += b.dim(1);
    Tensor<T> out(s);
    const std::size_t wa = la.channels * la.inner, wb = lb.channels * lb.inner;
    T* dst = out.data().data();
    for (std::size_t i = 0; i < la.batch; ++i) {
      dst = std::copy(a.data().data() + i * wa, a.data().data() + (i + 1) * wa, dst);
      dst = std::copy(b.data().data() + i * wb, b.data().data() + (i + 1) * wb, dst);
    }
    return out;
  }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>&,
                                  std::span<const bool>) const override {
    const auto la = channel_layout(in[0]->shape(), "concat lhs");
    const auto lb = channel_layout(in[1]->shape(), "concat rhs");
    Tensor<T> ga(in[0]->shape()), gb(in[1]->shape());
    const std::size_t wa = la.channels * la.inner, wb = lb.channels * lb.inner;
    const T* src = gout.data().data();
    for (std::size_t i = 0; i < la.batch; ++i) {
      std::copy(src, src + wa, ga.data().data() + i * wa);
      src += wa;
      std::copy(src, src + wb, gb.data().data() + i * wb);
      src += wb;
    }
    return {std::move(ga), std::move(gb)};
  }
};

template <typename T>
class ReduceOp final : public Op<T> {
 public:
  explicit ReduceOp(bool mean) : mean_(mean) {}
  std::string name() const override { return mean_ ? "mean" : "sum"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override {
    T acc = 0;
    for (T v : in[0]->data()) acc += v;
    if (mean_) acc /= static_cast<T>(in[0]->size());
    return Tensor<T>::scalar(acc);
  }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>&,
                                  std::span<const bool>) const override {
    T g = gout[0];
    if (mean_) g /= static_cast<T>(in[0]->size());
    return {Tensor<T>::full(in[0]->shape(), g)};
  }

 private:
  bool mean_;
};

template <typename T>
class UnaryOp final : public Op<T> {
 public:
  enum class Kind { kTanh, kRelu, kExp, kLog };
  explicit UnaryOp(Kind kind) : kind_(kind) {}

  std::string name() const override {
    switch (kind_) {
      case Kind::kTanh:
        return "tanh";
      case Kind::kRelu:
        return "relu";
      case Kind::kExp:
        return "exp";
      case Kind::kLog:
        return "log";
    }
    return "unary";
  }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override {
    Tensor<T> out = *in[0];
    for (auto& v : out.data()) {
      switch (kind_) {
        case Kind::kTanh:
          v = std::tanh(v);
          break;
        case Kind::kRelu:
          // NaN passes through so non-finite activations surface in the loss.
          v = v > T(0) || v != v ? v : T(0);
          break;
        case Kind::kExp:
          v = std::exp(v);
          break;
        case Kind::kLog:
          if (!(v > T(0))) fail(ErrorKind::kNumeric, "log of non-positive value");
          v = std::log(v);
          break;
      }
    }
    return out;
  }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout,
                                  const OpContext<T>&, std::span<const bool>) const override {
    Tensor<T> g(gout.shape());
    const auto& x = *in[0];
    for (std::size_t i = 0; i < g.size(); ++i) {
      T d = 0;
      switch (kind_) {
        case Kind::kTanh:
          d = T(1) - out[i] * out[i];
          break;
        case Kind::kRelu:
          d = x[i] > T(0) ? T(1) : T(0);
          break;
        case Kind::kExp:
          d = out[i];
          break;
        case Kind::kLog:
          d = T(1) / x[i];
          break;
      }
      g[i] = gout[i] * d;
    }
    return {std::move(g)};
  }

 private:
  Kind kind_;
};

template <typename T>
class ChannelBiasOp final : public Op<T> {
 public:
  std::string name() const override { return "add_channel_bias"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override {
    const auto& x = *in[0];
    const auto& bias = *in[1];
    const auto l = channel_layout(x.shape(), "add_channel_bias");
    expect_shape(bias.shape(), Shape{l.channels}, "channel bias");
    Tensor<T> out = x;
    T* o = out.data().data();
    for (std::size_t b = 0; b < l.batch; ++b) {
      for (std::size_t c = 0; c < l.channels; ++c) {
        for (std::size_t i = 0; i < l.inner; ++i) *o++ += bias[c];
      }
    }
    return out;
  }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>&,
                                  std::span<const bool> need) const override {
    std::vector<Tensor<T>> g(2);
    if (need[0]) g[0] = gout;
    if (need[1]) {
      const auto l = channel_layout(in[0]->shape(), "add_channel_bias");
      Tensor<T> gb({l.channels});
      const T* src = gout.data().data();
      for (std::size_t b = 0; b < l.batch; ++b) {
        for (std::size_t c = 0; c < l.channels; ++c) {
          for (std::size_t i = 0; i < l.inner; ++i) gb[c] += *src++;
        }
      }
      g[1] = std::move(gb);
    }
    return g;
  }
};

}  // namespace

template <typename T>
Var add(Graph<T>& g, Var a, Var b) {
  return g.apply(std::make_shared<BinaryOp<T>>(BinaryOp<T>::Kind::kAdd), {a, b});
}
template <typename T>
Var sub(Graph<T>& g, Var a, Var b) {
  return g.apply(std::make_shared<BinaryOp<T>>(BinaryOp<T>::Kind::kSub), {a, b});
}
template <typename T>
Var mul(Graph<T>& g, Var a, Var b) {
  return g.apply(std::make_shared<BinaryOp<T>>(BinaryOp<T>::Kind::kMul), {a, b});
}
template <typename T>
Var scale(Graph<T>& g, Var a, T factor) {
  return g.apply(std::make_shared<ScaleOp<T>>(factor), {a});
}
template <typename T>
Var matmul(Graph<T>& g, Var a, Var b) {
  return g.apply(std::make_shared<MatmulOp<T>>(), {a, b});
}
template <typename T>
Var reshape(Graph<T>& g, Var a, Shape shape) {
  return g.apply(std::make_shared<ReshapeOp<T>>(std::move(shape)), {a});
}
template <typename T>
Var slice_channels(Graph<T>& g, Var a, std::size_t begin, std::size_t end) {
  return g.apply(std::make_shared<SliceChannelsOp<T>>(begin, end), {a});
}
template <typename T>
Var concat_channels(Graph<T>& g, Var a, Var b) {
  return g.apply(std::make_shared<ConcatChannelsOp<T>>(), {a, b});
}
template <typename T>
Var sum(Graph<T>& g, Var a) {
  return g.apply(std::make_shared<ReduceOp<T>>(false), {a});
}
template <typename T>
Var mean(Graph<T>& g, Var a) {
  return g.apply(std::make_shared<ReduceOp<T>>(true), {a});
}
template <typename T>
Var tanh(Graph<T>& g, Var a) {
  return g.apply(std::make_shared<UnaryOp<T>>(UnaryOp<T>::Kind::kTanh), {a});
}
template <typename T>
Var relu(Graph<T>& g, Var a) {
  return g.apply(std::make_shared<UnaryOp<T>>(UnaryOp<T>::Kind::kRelu), {a});
}
template <typename T>
Var exp(Graph<T>& g, Var a) {
  return g.apply(std::make_shared<UnaryOp<T>>(UnaryOp<T>::Kind::kExp), {a});
}
template <typename T>
Var log(Graph<T>& g, Var a) {
  return g.apply(std::make_shared<UnaryOp<T>>(UnaryOp<T>::Kind::kLog), {a});
}
template <typename T>
Var add_channel_bias(Graph<T>& g, Var x, Var bias) {
  return g.apply(std::make_shared<ChannelBiasOp<T>>(), {x, bias});
}

#define DBT_INSTANTIATE_OPS(T)                                        \
  template Var add(Graph<T>&, Var, Var);                              \
  template Var sub(Graph<T>&, Var, Var);                              \
  template Var mul(Graph<T>&, Var, Var);                              \
  template Var scale(Graph<T>&, Var, T);                              \
  template Var matmul(Graph<T>&, Var, Var);                           \
  template Var reshape(Graph<T>&, Var, Shape);                        \
  template Var slice_channels(Graph<T>&, Var, std::size_t, std::size_t); \
  template Var concat_channels(Graph<T>&, Var, Var);                  \
  template Var sum(Graph<T>&, Var);                                   \
  template Var mean(Graph<T>&, Var);                                  \
  template Var tanh(Graph<T>&, Var);                                  \
  template Var relu(Graph<T>&, Var);                                  \
  template Var exp(Graph<T>&, Var);                                   \
  template Var log(Graph<T>&, Var);                                   \
  template Var add_channel_bias(Graph<T>&, Var, Var);

DBT_INSTANTIATE_OPS(float)
DBT_INSTANTIATE_OPS(double)

#undef DBT_INSTANTIATE_OPS

}  // namespace dbt::ops
