#include "dbt/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "common/checks.hpp"
#include "common/eigen.hpp"
#include "dbt/engine/parallel.hpp"

namespace dbt::nn {

using detail::expect;
using detail::expect_rank;
using detail::expect_shape;

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  expect(stride >= 1, ErrorKind::kShape, "stride must be positive");
  if (in + 2 * padding < kernel) {
    fail(ErrorKind::kShape, "window " + std::to_string(kernel) + " larger than padded input " +
                                std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

namespace {

struct ConvGeometry {
  std::size_t batch, in_c, h, w, out_c, k, stride, pad, oh, ow;

  std::size_t col_rows() const { return in_c * k * k; }
  std::size_t col_cols() const { return oh * ow; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

ConvGeometry conv_geometry(const Shape& xs, const Shape& ws, std::size_t stride, std::size_t pad) {
  expect_rank(xs, 4, "conv2d input");
  expect_rank(ws, 4, "conv2d weight");
  if (ws[1] != xs[1]) {
    fail(ErrorKind::kShape, "conv2d channel mismatch: weight " + shape_to_string(ws) + " expects " +
                                std::to_string(ws[1]) + " input channels, input is " + shape_to_string(xs));
  }
  if (ws[2] != ws[3] || (ws[2] != 1 && ws[2] != 3 && ws[2] != 7)) {
    fail(ErrorKind::kShape, "conv2d kernel must be square with k in {1,3,7}, got " + shape_to_string(ws));
  }
  const std::size_t k = ws[2];
  return {xs[0], xs[1], xs[2], xs[3], ws[0], k, stride, pad,
          conv_output_size(xs[2], k, stride, pad), conv_output_size(xs[3], k, stride, pad)};
}

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t n = g.col_cols();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        T* row = cols + ((c * g.k + ki) * g.k + kj) * n;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* x) {
  const std::size_t n = g.col_cols();
  for (std::size_t c = 0; c < g.in_c; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const T* row = cols + ((c * g.k + ki) * g.k + kj) * n;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kj) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, std::size_t stride, std::size_t pad) {
  const auto g = conv_geometry(x.shape(), w.shape(), stride, pad);
  Tensor<T> y({g.batch, g.out_c, g.oh, g.ow});
  const std::size_t in_plane = g.in_c * g.h * g.w;
  const std::size_t out_plane = g.out_c * g.oh * g.ow;
  detail::ConstMatMap<T> W(w.data().data(), g.out_c, g.col_rows());
  parallel_for(g.batch, [&](std::size_t b) {
    const T* xb = x.data().data() + b * in_plane;
    detail::MatMap<T> Y(y.data().data() + b * out_plane, g.out_c, g.col_cols());
    if (g.pointwise()) {
      Y.noalias() = W * detail::ConstMatMap<T>(xb, g.in_c, g.col_cols());
    } else {
      std::vector<T> cols(g.col_rows() * g.col_cols());
      im2col(xb, g, cols.data());
      Y.noalias() = W * detail::ConstMatMap<T>(cols.data(), g.col_rows(), g.col_cols());
    }
  });
  return y;
}

// Weight gradients are formed per sample and summed in sample order so the
// result does not depend on the worker count.
template <typename T>
void conv_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy, std::size_t stride,
                   std::size_t pad, Tensor<T>* gx, Tensor<T>* gw) {
  const auto g = conv_geometry(x.shape(), w.shape(), stride, pad);
  const std::size_t in_plane = g.in_c * g.h * g.w;
  const std::size_t out_plane = g.out_c * g.oh * g.ow;
  const std::size_t wsize = w.size();
  detail::ConstMatMap<T> W(w.data().data(), g.out_c, g.col_rows());
  if (gx) *gx = Tensor<T>(x.shape());
  std::vector<T> partial(gw ? g.batch * wsize : 0);
  parallel_for(g.batch, [&](std::size_t b) {
    const T* xb = x.data().data() + b * in_plane;
    detail::ConstMatMap<T> GY(gy.data().data() + b * out_plane, g.out_c, g.col_cols());
    std::vector<T> cols;
    if (!g.pointwise()) {
      cols.resize(g.col_rows() * g.col_cols());
      if (gw) im2col(xb, g, cols.data());
    }
    if (gw) {
      detail::MatMap<T> GW(partial.data() + b * wsize, g.out_c, g.col_rows());
      if (g.pointwise()) {
        GW.noalias() = GY * detail::ConstMatMap<T>(xb, g.in_c, g.col_cols()).transpose();
      } else {
        GW.noalias() = GY * detail::ConstMatMap<T>(cols.data(), g.col_rows(), g.col_cols()).transpose();
      }
    }
    if (gx) {
      T* gxb = gx->data().data() + b * in_plane;
      if (g.pointwise()) {
        detail::MatMap<T>(gxb, g.in_c, g.col_cols()).noalias() = W.transpose() * GY;
      } else {
        detail::MatMap<T> C(cols.data(), g.col_rows(), g.col_cols());
        C.noalias() = W.transpose() * GY;
        col2im_add(cols.data(), g, gxb);
      }
    }
  });
  if (gw) {
    *gw = Tensor<T>(w.shape());
    auto dst = gw->data();
    for (std::size_t b = 0; b < g.batch; ++b) {
      const T* src = partial.data() + b * wsize;
      for (std::size_t i = 0; i < wsize; ++i) dst[i] += src[i];
    }
  }
}

template <typename T>
class Conv2dOp final : public Op<T> {
 public:
  explicit Conv2dOp(ConvSpec spec) : spec_(spec) {}
  std::string name() const override { return "conv2d"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override {
    return conv_forward(*in[0], *in[1], spec_.stride, spec_.padding);
  }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>&,
                                  std::span<const bool> need) const override {
    std::vector<Tensor<T>> g(2);
    conv_backward(*in[0], *in[1], gout, spec_.stride, spec_.padding, need[0] ? &g[0] : nullptr,
                  need[1] ? &g[1] : nullptr);
    return g;
  }

 private:
  ConvSpec spec_;
};

struct ChannelView {
  std::size_t batch, channels, inner;
  std::size_t count() const { return batch * inner; }
};

ChannelView channel_view(const Shape& s, const char* what) {
  if (s.size() != 2 && s.size() != 4) {
    fail(ErrorKind::kShape, std::string(what) + ": expected [B,C] or [B,C,H,W], got " + shape_to_string(s));
  }
  return {s[0], s[1], s.size() == 4 ? s[2] * s[3] : 1};
}

struct BnStats {
  std::vector<double> mean, var;
};

// Fixed-lane row reduction. The summation order depends only on the row
// length, never on pointer alignment, so results are reproducible.
template <typename T, typename F>
double lane_sum(const T* p, std::size_t n, F f) {
  constexpr std::size_t kLanes = 16;
  T acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    for (std::size_t k = 0; k < kLanes; ++k) acc[k] += f(p[i + k]);
  }
  double s = 0.0;
  for (std::size_t k = 0; k < kLanes; ++k) s += static_cast<double>(acc[k]);
  for (; i < n; ++i) s += static_cast<double>(f(p[i]));
  return s;
}

// Rows of one channel are combined in double in a fixed order.
template <typename T>
BnStats batch_stats(const Tensor<T>& x, const ChannelView& v) {
  BnStats st{std::vector<double>(v.channels, 0.0), std::vector<double>(v.channels, 0.0)};
  const T* p = x.data().data();
  for (std::size_t c = 0; c < v.channels; ++c) {
    double s = 0.0;
    for (std::size_t b = 0; b < v.batch; ++b) {
      s += lane_sum(p + (b * v.channels + c) * v.inner, v.inner, [](T a) { return a; });
    }
    const double mean = s / static_cast<double>(v.count());
    const T m = static_cast<T>(mean);
    double sq = 0.0;
    for (std::size_t b = 0; b < v.batch; ++b) {
      sq += lane_sum(p + (b * v.channels + c) * v.inner, v.inner, [m](T a) { return (a - m) * (a - m); });
    }
    st.mean[c] = mean;
    st.var[c] = sq / static_cast<double>(v.count());
  }
  return st;
}

// saved = {x_hat, inv_std}; aux (train) = {batch_mean, batch_var}.
template <typename T>
Tensor<T> bn_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, const Tensor<T>& rm,
                     const Tensor<T>& rv, BnMode mode, T eps, OpContext<T>* ctx) {
  const auto v = channel_view(x.shape(), "batch_norm");
  for (const Tensor<T>* t : {&gamma, &beta, &rm, &rv}) expect_shape(t->shape(), Shape{v.channels}, "batch_norm param");
  expect(eps > T(0), ErrorKind::kConfig, "batch_norm eps must be positive");

  std::vector<T> mean(v.channels), inv_std(v.channels);
  if (mode == BnMode::kTrain) {
    if (v.count() < 2) {
      fail(ErrorKind::kShape, "batch_norm in train mode needs B*H*W >= 2, got " + shape_to_string(x.shape()));
    }
    const auto st = batch_stats(x, v);
    Tensor<T> bm({v.channels}), bv({v.channels});
    for (std::size_t c = 0; c < v.channels; ++c) {
      mean[c] = static_cast<T>(st.mean[c]);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(st.var[c] + static_cast<double>(eps)));
      bm[c] = static_cast<T>(st.mean[c]);
      bv[c] = static_cast<T>(st.var[c]);
    }
    if (ctx) ctx->aux = {std::move(bm), std::move(bv)};
  } else {
    for (std::size_t c = 0; c < v.channels; ++c) {
      if (rv[c] < T(0)) fail(ErrorKind::kNumeric, "batch_norm running variance must be non-negative");
      mean[c] = rm[c];
      inv_std[c] = T(1) / std::sqrt(rv[c] + eps);
    }
  }

  Tensor<T> y(x.shape());
  Tensor<T> xhat(x.shape());
  const T* px = x.data().data();
  T* py = y.data().data();
  T* ph = xhat.data().data();
  for (std::size_t b = 0; b < v.batch; ++b) {
    for (std::size_t c = 0; c < v.channels; ++c) {
      const std::size_t off = (b * v.channels + c) * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) {
        const T h = (px[off + i] - mean[c]) * inv_std[c];
        ph[off + i] = h;
        py[off + i] = gamma[c] * h + beta[c];
      }
    }
  }
  if (ctx) ctx->saved = {std::move(xhat), Tensor<T>({v.channels}, std::move(inv_std))};
  return y;
}

template <typename T>
class BatchNormOp final : public Op<T> {
 public:
  BatchNormOp(BnMode mode, T eps) : mode_(mode), eps_(eps) {}
  std::string name() const override { return mode_ == BnMode::kTrain ? "batch_norm[train]" : "batch_norm[eval]"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>& ctx) const override {
    return bn_forward(*in[0], *in[1], *in[2], *in[3], *in[4], mode_, eps_, &ctx);
  }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>& ctx,
                                  std::span<const bool> need) const override {
    const auto v = channel_view(in[0]->shape(), "batch_norm");
    const Tensor<T>& gamma = *in[1];
    const Tensor<T>& xhat = ctx.saved.at(0);
    const Tensor<T>& inv_std = ctx.saved.at(1);
    std::vector<double> sum_g(v.channels, 0.0), sum_gh(v.channels, 0.0);
    const T* pg = gout.data().data();
    const T* ph = xhat.data().data();
    for (std::size_t b = 0; b < v.batch; ++b) {
      for (std::size_t c = 0; c < v.channels; ++c) {
        const std::size_t off = (b * v.channels + c) * v.inner;
        double sg = 0.0, sgh = 0.0;
        for (std::size_t i = 0; i < v.inner; ++i) {
          sg += pg[off + i];
          sgh += static_cast<double>(pg[off + i]) * ph[off + i];
        }
        sum_g[c] += sg;
        sum_gh[c] += sgh;
      }
    }
    std::vector<Tensor<T>> g(5);
    if (need[0]) {
      Tensor<T> gx(in[0]->shape());
      T* px = gx.data().data();
      const double m = static_cast<double>(v.count());
      for (std::size_t b = 0; b < v.batch; ++b) {
        for (std::size_t c = 0; c < v.channels; ++c) {
          const std::size_t off = (b * v.channels + c) * v.inner;
          const T k = gamma[c] * inv_std[c];
          if (mode_ == BnMode::kTrain) {
            const T mg = static_cast<T>(sum_g[c] / m);
            const T mgh = static_cast<T>(sum_gh[c] / m);
            for (std::size_t i = 0; i < v.inner; ++i) px[off + i] = k * (pg[off + i] - mg - ph[off + i] * mgh);
          } else {
            for (std::size_t i = 0; i < v.inner; ++i) px[off + i] = k * pg[off + i];
          }
        }
      }
      g[0] = std::move(gx);
    }
    if (need[1]) {
      Tensor<T> gg({v.channels});
      for (std::size_t c = 0; c < v.channels; ++c) gg[c] = static_cast<T>(sum_gh[c]);
      g[1] = std::move(gg);
    }
    if (need[2]) {
      Tensor<T> gb({v.channels});
      for (std::size_t c = 0; c < v.channels; ++c) gb[c] = static_cast<T>(sum_g[c]);
      g[2] = std::move(gb);
    }
    for (int k = 3; k < 5; ++k) {
      if (need[k]) g[k] = Tensor<T>({v.channels});
    }
    return g;
  }

 private:
  BnMode mode_;
  T eps_;
};

template <typename T>
Tensor<T> gap_forward(const Tensor<T>& x) {
  expect_rank(x.shape(), 4, "global_avg_pool input");
  const std::size_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> y({b, c});
  const T* p = x.data().data();
  for (std::size_t i = 0; i < b * c; ++i) {
    T s = 0;
    for (std::size_t j = 0; j < hw; ++j) s += p[i * hw + j];
    y[i] = s / static_cast<T>(hw);
  }
  return y;
}

template <typename T>
class GlobalAvgPoolOp final : public Op<T> {
 public:
  std::string name() const override { return "global_avg_pool"; }
  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override { return gap_forward(*in[0]); }
  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>&,
                                  std::span<const bool>) const override {
    const auto& s = in[0]->shape();
    const std::size_t hw = s[2] * s[3];
    Tensor<T> g(s);
    for (std::size_t i = 0; i < s[0] * s[1]; ++i) {
      const T v = gout[i] / static_cast<T>(hw);
      std::fill_n(g.data().data() + i * hw, hw, v);
    }
    return {std::move(g)};
  }
};

// Argmax positions are stored as in-plane offsets, exactly representable in
// either precision for any plane below 2^24 elements.
template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, std::size_t k, std::size_t s, std::size_t p, Tensor<T>* argmax) {
  expect_rank(x.shape(), 4, "max_pool2d input");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t oh = conv_output_size(H, k, s, p), ow = conv_output_size(W, k, s, p);
  Tensor<T> y({B, C, oh, ow});
  if (argmax) *argmax = Tensor<T>({B, C, oh, ow});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    const T* plane = x.data().data() + bc * H * W;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ki = 0; ki < k; ++ki) {
          const long iy = static_cast<long>(oy * s + ki) - static_cast<long>(p);
          if (iy < 0 || iy >= static_cast<long>(H)) continue;
          for (std::size_t kj = 0; kj < k; ++kj) {
            const long ix = static_cast<long>(ox * s + kj) - static_cast<long>(p);
            if (ix < 0 || ix >= static_cast<long>(W)) continue;
            const std::size_t idx = static_cast<std::size_t>(iy) * W + static_cast<std::size_t>(ix);
            if (plane[idx] > best) {
              best = plane[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (bc * oh + oy) * ow + ox;
        y[o] = best;
        if (argmax) (*argmax)[o] = static_cast<T>(best_idx);
      }
    }
  }
  return y;
}

template <typename T>
class MaxPoolOp final : public Op<T> {
 public:
  MaxPoolOp(std::size_t k, std::size_t s, std::size_t p) : k_(k), s_(s), p_(p) {}
  std::string name() const override { return "max_pool2d"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>& ctx) const override {
    Tensor<T> argmax;
    auto y = maxpool_forward(*in[0], k_, s_, p_, &argmax);
    ctx.saved = {std::move(argmax)};
    return y;
  }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>& out, const Tensor<T>& gout,
                                  const OpContext<T>& ctx, std::span<const bool>) const override {
    const auto& s = in[0]->shape();
    const std::size_t plane = s[2] * s[3];
    const std::size_t oplane = out.dim(2) * out.dim(3);
    const Tensor<T>& argmax = ctx.saved.at(0);
    Tensor<T> g(s);
    for (std::size_t bc = 0; bc < s[0] * s[1]; ++bc) {
      for (std::size_t o = 0; o < oplane; ++o) {
        const std::size_t i = bc * oplane + o;
        g[bc * plane + static_cast<std::size_t>(argmax[i])] += gout[i];
      }
    }
    return {std::move(g)};
  }

 private:
  std::size_t k_, s_, p_;
};

template <typename T>
std::vector<int> checked_labels(const Tensor<T>& labels, std::size_t batch, std::size_t classes) {
  expect_shape(labels.shape(), Shape{batch}, "softmax_cross_entropy labels");
  std::vector<int> out(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const T v = labels[i];
    if (!(v >= T(0)) || v >= static_cast<T>(classes) || v != std::floor(v)) {
      fail(ErrorKind::kConfig, "label " + std::to_string(static_cast<double>(v)) + " out of range [0," +
                                   std::to_string(classes) + ")");
    }
    out[i] = static_cast<int>(v);
  }
  return out;
}

// Returns per-row softmax probabilities in `probs` and the mean loss.
template <typename T>
T softmax_ce_core(const Tensor<T>& logits, std::span<const int> labels, Tensor<T>* probs) {
  expect_rank(logits.shape(), 2, "softmax_cross_entropy logits");
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  expect(labels.size() == B, ErrorKind::kShape, "softmax_cross_entropy: label count != batch");
  if (probs) *probs = Tensor<T>(logits.shape());
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= C) {
      fail(ErrorKind::kConfig, "label " + std::to_string(y) + " out of range [0," + std::to_string(C) + ")");
    }
    const T* row = logits.data().data() + b * C;
    const T mx = *std::max_element(row, row + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(static_cast<double>(row[c] - mx));
    const double log_z = std::log(z) + static_cast<double>(mx);
    total += log_z - static_cast<double>(row[y]);
    if (probs) {
      for (std::size_t c = 0; c < C; ++c) (*probs)[b * C + c] = static_cast<T>(std::exp(static_cast<double>(row[c]) - log_z));
    }
  }
  return static_cast<T>(total / static_cast<double>(B));
}

template <typename T>
class SoftmaxCrossEntropyOp final : public Op<T> {
 public:
  std::string name() const override { return "softmax_cross_entropy"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>& ctx) const override {
    expect_rank(in[0]->shape(), 2, "softmax_cross_entropy logits");
    const auto labels = checked_labels(*in[1], in[0]->dim(0), in[0]->dim(1));
    Tensor<T> probs;
    const T loss = softmax_ce_core(*in[0], labels, &probs);
    ctx.saved = {std::move(probs)};
    return Tensor<T>::scalar(loss);
  }

  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>& ctx,
                                  std::span<const bool> need) const override {
    std::vector<Tensor<T>> g(2);
    const std::size_t B = in[0]->dim(0), C = in[0]->dim(1);
    if (need[0]) {
      Tensor<T> gl = ctx.saved.at(0);
      const T k = gout[0] / static_cast<T>(B);
      for (std::size_t b = 0; b < B; ++b) {
        gl[b * C + static_cast<std::size_t>((*in[1])[b])] -= T(1);
        for (std::size_t c = 0; c < C; ++c) gl[b * C + c] *= k;
      }
      g[0] = std::move(gl);
    }
    if (need[1]) g[1] = Tensor<T>(in[1]->shape());
    return g;
  }
};

}  // namespace

template <typename T>
BatchNormParams<T> BatchNormParams<T>::identity(std::size_t channels, T gamma) {
  BatchNormParams p;
  p.scale = Tensor<T>::full({channels}, gamma);
  p.shift = Tensor<T>({channels});
  p.running_mean = Tensor<T>({channels});
  p.running_var = Tensor<T>::full({channels}, T(1));
  return p;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const ConvParams<T>& p) {
  auto y = conv_forward(x, p.weight, p.stride, p.padding);
  if (p.bias) {
    const std::size_t oc = y.dim(1), plane = y.dim(2) * y.dim(3);
    expect_shape(p.bias->shape(), Shape{oc}, "conv2d bias");
    for (std::size_t b = 0; b < y.dim(0); ++b) {
      for (std::size_t c = 0; c < oc; ++c) {
        T* dst = y.data().data() + (b * oc + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += (*p.bias)[c];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, BatchNormParams<T>& p) {
  OpContext<T> ctx;
  auto y = bn_forward(x, p.scale, p.shift, p.running_mean, p.running_var, p.mode, p.eps, &ctx);
  if (p.mode == BnMode::kTrain) {
    const auto& bm = ctx.aux.at(0);
    const auto& bv = ctx.aux.at(1);
    for (std::size_t c = 0; c < bm.size(); ++c) {
      p.running_mean[c] = p.momentum * p.running_mean[c] + (T(1) - p.momentum) * bm[c];
      p.running_var[c] = p.momentum * p.running_var[c] + (T(1) - p.momentum) * bv[c];
    }
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  return gap_forward(x);
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  return maxpool_forward<T>(x, kernel, stride, padding, nullptr);
}

template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  return softmax_ce_core<T>(logits, labels, nullptr);
}

template <typename T>
Var conv2d(Graph<T>& g, Var x, Var weight, ConvSpec spec, std::string label) {
  return g.apply(std::make_shared<Conv2dOp<T>>(spec), {x, weight}, std::move(label));
}

template <typename T>
Var batch_norm(Graph<T>& g, Var x, const BatchNormVars& v, BnMode mode, T eps, std::string label) {
  return g.apply(std::make_shared<BatchNormOp<T>>(mode, eps), {x, v.gamma, v.beta, v.running_mean, v.running_var},
                 std::move(label));
}

template <typename T>
Var global_avg_pool(Graph<T>& g, Var x) {
  return g.apply(std::make_shared<GlobalAvgPoolOp<T>>(), {x});
}

template <typename T>
Var max_pool2d(Graph<T>& g, Var x, std::size_t kernel, std::size_t stride, std::size_t padding) {
  return g.apply(std::make_shared<MaxPoolOp<T>>(kernel, stride, padding), {x});
}

template <typename T>
Var softmax_cross_entropy(Graph<T>& g, Var logits, Var labels) {
  return g.apply(std::make_shared<SoftmaxCrossEntropyOp<T>>(), {logits, labels});
}

#define DBT_INSTANTIATE_LAYERS(T)                                                                 \
  template struct BatchNormParams<T>;                                                             \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvParams<T>&);                              \
  template Tensor<T> batch_norm(const Tensor<T>&, BatchNormParams<T>&);                           \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                           \
  template Tensor<T> max_pool2d(const Tensor<T>&, std::size_t, std::size_t, std::size_t);         \
  template T softmax_cross_entropy(const Tensor<T>&, std::span<const int>);                       \
  template Var conv2d(Graph<T>&, Var, Var, ConvSpec, std::string);                                \
  template Var batch_norm(Graph<T>&, Var, const BatchNormVars&, BnMode, T, std::string);          \
  template Var global_avg_pool(Graph<T>&, Var);                                                   \
  template Var max_pool2d(Graph<T>&, Var, std::size_t, std::size_t, std::size_t);                 \
  template Var softmax_cross_entropy(Graph<T>&, Var, Var);

DBT_INSTANTIATE_LAYERS(float)
DBT_INSTANTIATE_LAYERS(double)

#undef DBT_INSTANTIATE_LAYERS

}  // namespace dbt::nn
