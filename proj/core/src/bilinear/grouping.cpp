#include "dbt/bilinear/grouping.hpp"

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "common/checks.hpp"
#include "dbt/engine/parallel.hpp"

namespace dbt::bilinear {

namespace {

using DMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LossGeometry {
  std::size_t batch, channels, groups, n, hw;
};

LossGeometry loss_geometry(const Shape& s, std::size_t groups) {
  detail::expect_rank(s, 4, "grouping loss features");
  if (groups == 0 || s[1] % groups != 0) {
    fail(ErrorKind::kShape, "grouping loss: " + std::to_string(s[1]) + " channels not divisible into " +
                                std::to_string(groups) + " groups");
  }
  return {s[0], s[1], groups, s[1] / groups, s[2] * s[3]};
}

// Gram matrix, norms, and correlations of one sample.
struct SampleStats {
  DMat m;      // [N, HW]
  DMat gram;   // m m^T
  Eigen::VectorXd norm;
  DMat denom;  // n_i n_j + eps
  DMat corr;
};

template <typename T>
SampleStats sample_stats(const T* x, const LossGeometry& g) {
  SampleStats s;
  s.m = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            x, static_cast<Eigen::Index>(g.channels), static_cast<Eigen::Index>(g.hw))
            .template cast<double>();
  s.gram = s.m * s.m.transpose();
  s.norm = s.gram.diagonal().cwiseSqrt();
  s.denom = (s.norm * s.norm.transpose()).array() + kCorrelationEps;
  s.corr = s.gram.cwiseQuotient(s.denom);
  return s;
}

struct Weights {
  double intra, inter;
};

Weights pair_weights(const LossGeometry& g, bool normalize) {
  if (!normalize) return {1.0, 1.0};
  const auto pc = grouping_pair_counts(g.channels, g.groups);
  return {pc.intra ? 1.0 / static_cast<double>(pc.intra) : 0.0,
          pc.inter ? 1.0 / static_cast<double>(pc.inter) : 0.0};
}

// Loss sign: intra pairs are rewarded (negative), inter pairs penalized.
void accumulate_terms(const SampleStats& s, const LossGeometry& g, const Weights& w, double& intra, double& inter) {
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < g.channels; ++i) {
    for (std::size_t j = 0; j < g.channels; ++j) {
      if (i == j) continue;
      const double d = s.corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (i / g.n == j / g.n) {
        a += d * d;
      } else {
        b += d * d;
      }
    }
  }
  intra = -a * w.intra;
  inter = b * w.inter;
}

template <typename T>
std::vector<double> per_sample_terms(const Tensor<T>& x, const LossGeometry& g, bool normalize) {
  const Weights w = pair_weights(g, normalize);
  std::vector<double> terms(2 * g.batch);
  const std::size_t plane = g.channels * g.hw;
  parallel_for(g.batch, [&](std::size_t b) {
    const auto s = sample_stats(x.data().data() + b * plane, g);
    accumulate_terms(s, g, w, terms[2 * b], terms[2 * b + 1]);
  });
  return terms;
}

template <typename T>
class GroupingLossOp final : public Op<T> {
 public:
  GroupingLossOp(std::size_t groups, bool normalize) : groups_(groups), normalize_(normalize) {}
  std::string name() const override { return "grouping_loss"; }

  Tensor<T> forward(Inputs<T> in, OpContext<T>&) const override {
    const auto g = loss_geometry(in[0]->shape(), groups_);
    const auto terms = per_sample_terms(*in[0], g, normalize_);
    double intra = 0.0, inter = 0.0;
    for (std::size_t b = 0; b < g.batch; ++b) {
      intra += terms[2 * b];
      inter += terms[2 * b + 1];
    }
    const double inv = g.batch ? 1.0 / static_cast<double>(g.batch) : 0.0;
    return Tensor<T>({2}, {static_cast<T>(intra * inv), static_cast<T>(inter * inv)});
  }

  // For L = sum_{i!=j} c_ij d_ij^2 with symmetric c:
  //   dL/dm_k = sum_j A_kj m_j - r_k m_k,
  //   A_kj = 4 c_kj d_kj / D_kj,  r_k = sum_j A_kj s_kj n_j / (D_kj n_k).
  std::vector<Tensor<T>> backward(Inputs<T> in, const Tensor<T>&, const Tensor<T>& gout, const OpContext<T>&,
                                  std::span<const bool>) const override {
    const auto& x = *in[0];
    const auto g = loss_geometry(x.shape(), groups_);
    const Weights w = pair_weights(g, normalize_);
    const double inv = g.batch ? 1.0 / static_cast<double>(g.batch) : 0.0;
    const double c_intra = -static_cast<double>(gout[0]) * w.intra * inv;
    const double c_inter = static_cast<double>(gout[1]) * w.inter * inv;
    const auto N = static_cast<Eigen::Index>(g.channels);
    Tensor<T> gx(x.shape());
    const std::size_t plane = g.channels * g.hw;
    parallel_for(g.batch, [&](std::size_t b) {
      const auto s = sample_stats(x.data().data() + b * plane, g);
      DMat a = DMat::Zero(N, N);
      Eigen::VectorXd r = Eigen::VectorXd::Zero(N);
      for (Eigen::Index k = 0; k < N; ++k) {
        for (Eigen::Index j = 0; j < N; ++j) {
          if (k == j) continue;
          const double c = (static_cast<std::size_t>(k) / g.n == static_cast<std::size_t>(j) / g.n) ? c_intra : c_inter;
          a(k, j) = 4.0 * c * s.corr(k, j) / s.denom(k, j);
          if (s.norm(k) > 0.0) r(k) += a(k, j) * s.gram(k, j) * s.norm(j) / (s.denom(k, j) * s.norm(k));
        }
      }
      DMat grad = a * s.m - r.asDiagonal() * s.m;
      T* dst = gx.data().data() + b * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<T>(grad.data()[i]);
    });
    return {std::move(gx)};
  }

 private:
  std::size_t groups_;
  bool normalize_;
};

}  // namespace

template <typename T>
T pairwise_correlation(std::span<const T> mi, std::span<const T> mj) {
  if (mi.size() != mj.size()) {
    fail(ErrorKind::kShape, "pairwise_correlation: lengths " + std::to_string(mi.size()) + " and " +
                                std::to_string(mj.size()) + " differ");
  }
  double dot = 0.0, ni = 0.0, nj = 0.0;
  for (std::size_t i = 0; i < mi.size(); ++i) {
    dot += static_cast<double>(mi[i]) * mj[i];
    ni += static_cast<double>(mi[i]) * mi[i];
    nj += static_cast<double>(mj[i]) * mj[i];
  }
  return static_cast<T>(dot / (std::sqrt(ni) * std::sqrt(nj) + kCorrelationEps));
}

PairCounts grouping_pair_counts(std::size_t channels, std::size_t groups) {
  if (groups == 0 || channels % groups != 0) {
    fail(ErrorKind::kConfig, "grouping: " + std::to_string(channels) + " channels not divisible into " +
                                 std::to_string(groups) + " groups");
  }
  const std::size_t n = channels / groups;
  const std::size_t intra = groups * n * (n - 1);
  return {intra, channels * (channels - 1) - intra};
}

template <typename T>
GroupingLossReport grouping_loss(const Tensor<T>& features, std::size_t groups, bool normalize) {
  const auto g = loss_geometry(features.shape(), groups);
  const auto terms = per_sample_terms(features, g, normalize);
  GroupingLossReport r;
  for (std::size_t b = 0; b < g.batch; ++b) {
    r.intra += terms[2 * b];
    r.inter += terms[2 * b + 1];
  }
  if (g.batch) {
    r.intra /= static_cast<double>(g.batch);
    r.inter /= static_cast<double>(g.batch);
  }
  r.total = r.intra + r.inter;
  return r;
}

template <typename T>
Var grouping_loss_terms(Graph<T>& g, Var features, std::size_t groups, bool normalize) {
  return g.apply(std::make_shared<GroupingLossOp<T>>(groups, normalize), {features}, "grouping_loss");
}

#define DBT_INSTANTIATE_GROUPING(T)                                                     \
  template T pairwise_correlation(std::span<const T>, std::span<const T>);              \
  template GroupingLossReport grouping_loss(const Tensor<T>&, std::size_t, bool);       \
  template Var grouping_loss_terms(Graph<T>&, Var, std::size_t, bool);

DBT_INSTANTIATE_GROUPING(float)
DBT_INSTANTIATE_GROUPING(double)

#undef DBT_INSTANTIATE_GROUPING

}  // namespace dbt::bilinear
