#include "dbt/bilinear/group_bilinear.hpp"

#include <algorithm>
#include <vector>

#include "common/checks.hpp"
#include "dbt/engine/parallel.hpp"

namespace dbt::bilinear {

namespace {

using detail::expect_rank;

struct GbGeometry {
  std::size_t batch, channels, groups, n, hw;
};

GbGeometry gb_geometry(const Shape& s, std::size_t groups) {
  expect_rank(s, 4, "group_bilinear input");
  if (groups == 0 || s[1] % groups != 0) {
    fail(ErrorKind::kShape, "group_bilinear: " + std::to_string(s[1]) + " channels not divisible into " +
                                std::to_string(groups) + " groups");
  }
  return {s[0], s[1], groups, s[1] / groups, s[2] * s[3]};
}

// z = x_b + P broadcast over positions; returns pointer to the grouped rows.
template <typename T>
const T* shifted(const T* xb, const GbGeometry& g, const Tensor<T>* enc, std::vector<T>& buf) {
  if (!enc) return xb;
  buf.assign(xb, xb + g.channels * g.hw);
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    const T p = (*enc)[ch];  // table is [G, n] row-major == channel order
    T* row = buf.data() + ch * g.hw;
    for (std::size_t i = 0; i < g.hw; ++i) row[i] += p;
  }
  return buf.data();
}

template <typename T>
Tensor<T> gb_forward(const Tensor<T>& x, std::size_t groups, const Tensor<T>* enc) {
  const auto g = gb_geometry(x.shape(), groups);
  if (enc) detail::expect_shape(enc->shape(), Shape{g.groups, g.n}, "group index encoding");
  Tensor<T> y({g.batch, g.n * g.n, x.dim(2), x.dim(3)});
  const std::size_t in_plane = g.channels * g.hw;
  const std::size_t out_plane = g.n * g.n * g.hw;
  parallel_for(g.batch, [&](std::size_t b) {
    std::vector<T> buf;
    const T* z = shifted(x.data().data() + b * in_plane, g, enc, buf);
    T* yb = y.data().data() + b * out_plane;
    for (std::size_t a = 0; a < g.n; ++a) {
      for (std::size_t c = a; c < g.n; ++c) {
        T* out = yb + (a * g.n + c) * g.hw;
        for (std::size_t j = 0; j < g.groups; ++j) {
          const T* za = z + (j * g.n + a) * g.hw;
          const T* zc = z + (j * g.n + c) * g.hw;
          for (std::size_t i = 0; i < g.hw; ++i) out[i] += za[i] * zc[i];
        }
        if (c != a) std::copy(out, out + g.hw, yb + (c * g.n + a) * g.hw);
      }
    }
  });
  return y;
}

template <typename T>
Tensor<T> gb_backward(const Tensor<T>& x, std::size_t groups, const Tensor<T>* enc, const Tensor<T>& gy) {
  const auto g = gb_geometry(x.shape(), groups);
  Tensor<T> gx(x.shape());
  const std::size_t in_plane = g.channels * g.hw;
  const std::size_t out_plane = g.n * g.n * g.hw;
  parallel_for(g.batch, [&](std::size_t b) {
    std::vector<T> buf;
    const T* z = shifted(x.data().data() + b * in_plane, g, enc, buf);
    const T* gyb = gy.data().data() + b * out_plane;
    // sym[a, c] = dY[a, c] + dY[c, a]
    std::vector<T> sym(out_plane);
    for (std::size_t a = 0; a < g.n; ++a) {
      for (std::size_t c = 0; c < g.n; ++c) {
        T* dst = sym.data() + (a * g.n + c) * g.hw;
        const T* p = gyb + (a * g.n + c) * g.hw;
        const T* q = gyb + (c * g.n + a) * g.hw;
        for (std::size_t i = 0; i < g.hw; ++i) dst[i] = p[i] + q[i];
      }
    }
    T* gxb = gx.data().data() + b * in_plane;
    for (std::size_t j = 0; j < g.groups; ++j) {
      for (std::size_t a = 0; a < g.n; ++a) {
        T* out = gxb + (j * g.n + a) * g.hw;
        for (std::size_t c = 0; c < g.n; ++c) {
          const T* s = sym.data() + (a * g.n + c) * g.hw;
          const T* zc = z + (j * g.n + c) * g.hw;
          for (std::size_t i = 0; i < g.hw; ++i) out[i] += s[i] * zc[i];
        }
      }
    }
  });
  return gx;
}

template <typename T>
class GroupBilinearOp final : public Op<T> {
 public:
  GroupBilinearOp(std::size_t groups, std::optional<Tensor<T>> enc) : groups_(groups), enc_(std::move(enc)) {}
  std::string name() const override { return enc_ ? "group_bilinear[encoded]" : "group_bilinear"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override {
    return gb_forward(*in[0], groups_, enc_ ? &*enc_ : nullptr);
  }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>&,
                                  std::span<const bool>) const override {
    return {gb_backward(*in[0], groups_, enc_ ? &*enc_ : nullptr, gout)};
  }

 private:
  std::size_t groups_;
  std::optional<Tensor<T>> enc_;
};

struct LerpTap {
  std::size_t lo;
  double frac;  // weight of lo + 1; 0 means an exact copy of lo
};

std::vector<LerpTap> lerp_taps(std::size_t m, std::size_t target) {
  if (m < 2 || target < 2) {
    fail(ErrorKind::kShape, "channel_interpolate needs at least 2 input and output channels (got " +
                                std::to_string(m) + " -> " + std::to_string(target) + ")");
  }
  std::vector<LerpTap> taps(target);
  const std::size_t den = target - 1;
  for (std::size_t k = 0; k < target; ++k) {
    const std::size_t num = k * (m - 1);
    taps[k] = {num / den, static_cast<double>(num % den) / static_cast<double>(den)};
  }
  return taps;
}

template <typename T>
Tensor<T> interp_forward(const Tensor<T>& y, std::size_t target) {
  expect_rank(y.shape(), 4, "channel_interpolate input");
  const std::size_t m = y.dim(1), hw = y.dim(2) * y.dim(3);
  const auto taps = lerp_taps(m, target);
  Tensor<T> out({y.dim(0), target, y.dim(2), y.dim(3)});
  for (std::size_t b = 0; b < y.dim(0); ++b) {
    const T* src = y.data().data() + b * m * hw;
    T* dst = out.data().data() + b * target * hw;
    for (std::size_t k = 0; k < target; ++k) {
      const T* lo = src + taps[k].lo * hw;
      T* o = dst + k * hw;
      if (taps[k].frac == 0.0) {
        std::copy(lo, lo + hw, o);
        continue;
      }
      const T f = static_cast<T>(taps[k].frac);
      const T* hi = lo + hw;
      for (std::size_t i = 0; i < hw; ++i) o[i] = (T(1) - f) * lo[i] + f * hi[i];
    }
  }
  return out;
}

template <typename T>
class ChannelInterpolateOp final : public Op<T> {
 public:
  explicit ChannelInterpolateOp(std::size_t target) : target_(target) {}
  std::string name() const override { return "channel_interpolate"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override { return interp_forward(*in[0], target_); }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>&,
                                  std::span<const bool>) const override {
    const auto& y = *in[0];
    const std::size_t m = y.dim(1), hw = y.dim(2) * y.dim(3);
    const auto taps = lerp_taps(m, target_);
    Tensor<T> g(y.shape());
    for (std::size_t b = 0; b < y.dim(0); ++b) {
      const T* src = gout.data().data() + b * target_ * hw;
      T* dst = g.data().data() + b * m * hw;
      for (std::size_t k = 0; k < target_; ++k) {
        const T* go = src + k * hw;
        T* lo = dst + taps[k].lo * hw;
        if (taps[k].frac == 0.0) {
          for (std::size_t i = 0; i < hw; ++i) lo[i] += go[i];
          continue;
        }
        const T f = static_cast<T>(taps[k].frac);
        T* hi = lo + hw;
        for (std::size_t i = 0; i < hw; ++i) {
          lo[i] += (T(1) - f) * go[i];
          hi[i] += f * go[i];
        }
      }
    }
    return {std::move(g)};
  }

 private:
  std::size_t target_;
};

template <typename T>
void check_gb_config(const Shape& s, const DbtConfig& cfg) {
  cfg.validate();
  expect_rank(s, 4, "group_bilinear input");
  if (s[1] != cfg.channels) {
    fail(ErrorKind::kShape, "group_bilinear: input " + shape_to_string(s) + " has " + std::to_string(s[1]) +
                                " channels, config expects " + std::to_string(cfg.channels));
  }
}

}  // namespace

template <typename T>
Tensor<T> group_bilinear(const Tensor<T>& x, const DbtConfig& cfg, const GroupIndexEncoding<T>* enc) {
  check_gb_config<T>(x.shape(), cfg);
  if (cfg.use_encoding != (enc != nullptr)) {
    fail(ErrorKind::kConfig, cfg.use_encoding ? "group_bilinear: encoding enabled but no table given"
                                              : "group_bilinear: encoding table given but encoding disabled");
  }
  return gb_forward(x, cfg.groups, enc ? &enc->table : nullptr);
}

template <typename T>
Tensor<T> channel_interpolate(const Tensor<T>& y, std::size_t target) {
  return interp_forward(y, target);
}

template <typename T>
Var group_bilinear(Graph<T>& g, Var x, const DbtConfig& cfg, std::string label) {
  cfg.validate();
  std::optional<Tensor<T>> enc;
  if (cfg.use_encoding) enc = group_index_encoding<T>(cfg).table;
  return g.apply(std::make_shared<GroupBilinearOp<T>>(cfg.groups, std::move(enc)), {x}, std::move(label));
}

template <typename T>
Var channel_interpolate(Graph<T>& g, Var y, std::size_t target) {
  return g.apply(std::make_shared<ChannelInterpolateOp<T>>(target), {y});
}

#define DBT_INSTANTIATE_GB(T)                                                                      \
  template Tensor<T> group_bilinear(const Tensor<T>&, const DbtConfig&, const GroupIndexEncoding<T>*); \
  template Tensor<T> channel_interpolate(const Tensor<T>&, std::size_t);                          \
  template Var group_bilinear(Graph<T>&, Var, const DbtConfig&, std::string);                      \
  template Var channel_interpolate(Graph<T>&, Var, std::size_t);

DBT_INSTANTIATE_GB(float)
DBT_INSTANTIATE_GB(double)

#undef DBT_INSTANTIATE_GB

}  // namespace dbt::bilinear
