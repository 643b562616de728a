#include "dbt/train/interactions.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Core>

#include "dbt/error.hpp"

namespace dbt::train {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

InteractionAccumulator::InteractionAccumulator(std::size_t channels, std::size_t groups)
    : channels_(channels), groups_(groups), sum_(channels * channels, 0.0) {
  if (channels == 0 || groups == 0 || channels % groups != 0) {
    fail(ErrorKind::kConfig, "interactions: " + std::to_string(channels) + " channels cannot form " +
                                 std::to_string(groups) + " equal groups");
  }
}

template <typename T>
void InteractionAccumulator::add(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(1) != channels_) {
    fail(ErrorKind::kShape, "interactions: expected features [B," + std::to_string(channels_) + ",H,W]");
  }
  const std::size_t hw = x.dim(2) * x.dim(3);
  if (samples_ > 0 && hw != positions_) fail(ErrorKind::kShape, "interactions: spatial size changed between batches");
  positions_ = hw;
  const auto n = static_cast<Eigen::Index>(channels_);
  Eigen::Map<RowMatrix> acc(sum_.data(), n, n);
  for (std::size_t b = 0; b < x.dim(0); ++b) {
    RowMatrix f(n, static_cast<Eigen::Index>(hw));
    for (Eigen::Index c = 0; c < n; ++c) {
      for (std::size_t p = 0; p < hw; ++p) f(c, static_cast<Eigen::Index>(p)) = static_cast<double>(x[(b * channels_ + c) * hw + p]);
      const double norm = f.row(c).norm();
      if (norm > 0) f.row(c) /= norm;
    }
    acc.noalias() += f * f.transpose();
    ++samples_;
  }
}

template void InteractionAccumulator::add(const Tensor<float>&);
template void InteractionAccumulator::add(const Tensor<double>&);

InteractionMatrix InteractionAccumulator::result(const std::string& stage) const {
  if (samples_ == 0) fail(ErrorKind::kConfig, "interactions: no samples accumulated");
  InteractionMatrix r;
  r.stage = stage;
  r.samples = samples_;
  r.groups = groups_;
  r.m = Tensor<double>({channels_, channels_});
  const double scale = 1.0 / (static_cast<double>(samples_) * static_cast<double>(positions_));
  const std::size_t gs = channels_ / groups_;
  double intra = 0, inter = 0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t a = 0; a < channels_; ++a) {
    for (std::size_t c = 0; c < channels_; ++c) {
      const double v = sum_[a * channels_ + c] * scale;
      r.m[a * channels_ + c] = v;
      if (a == c) continue;
      if (a / gs == c / gs) {
        intra += v;
        ++n_intra;
      } else {
        inter += v;
        ++n_inter;
      }
    }
  }
  r.mean_intra = n_intra ? intra / static_cast<double>(n_intra) : 0.0;
  r.mean_inter = n_inter ? inter / static_cast<double>(n_inter) : 0.0;
  return r;
}

InteractionMatrix interaction_matrix(const model::Model<float>& m, const data::Dataset& data, const std::string& stage,
                                     std::size_t batch_size) {
  if (data.empty()) fail(ErrorKind::kConfig, "interactions: empty dataset");
  if (batch_size == 0) fail(ErrorKind::kConfig, "interactions: batch_size must be >= 1");
  auto net = model::build_graph<float>(m.descriptor, nn::BnMode::kEval, false);
  const model::DbtTap* tap = nullptr;
  for (const auto& t : net.dbt) {
    if (t.stage == stage) tap = &t;
  }
  if (!tap) fail(ErrorKind::kConfig, "interactions: stage '" + stage + "' has no DBT block");
  InteractionAccumulator acc(tap->config.channels, tap->config.groups);
  auto b = m.bindings();
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    b[model::kInputName] = data::batch_images<float>(data, idx);
    net.graph.evaluate(b);
    acc.add(net.graph.value(tap->sg_output));
  }
  return acc.result(stage);
}

MatrixFormat parse_matrix_format(const std::string& name) {
  if (name == "csv") return MatrixFormat::kCsv;
  if (name == "pgm") return MatrixFormat::kPgm;
  fail(ErrorKind::kConfig, "unknown matrix format '" + name + "', expected csv or pgm");
}

namespace {

void check_square(const Tensor<double>& m) {
  if (m.rank() != 2 || m.dim(0) == 0 || m.dim(1) == 0) fail(ErrorKind::kShape, "matrix export: expected a non-empty 2-D matrix");
}

}  // namespace

std::string matrix_csv(const Tensor<double>& m) {
  check_square(m);
  std::string out;
  char buf[64];
  for (std::size_t r = 0; r < m.dim(0); ++r) {
    if (r) out += '\n';
    for (std::size_t c = 0; c < m.dim(1); ++c) {
      if (c) out += ',';
      const auto res = std::to_chars(buf, buf + sizeof buf, m[r * m.dim(1) + c]);
      out.append(buf, res.ptr);
    }
  }
  return out;
}

Tensor<double> parse_matrix_csv(const std::string& text) {
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::stringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::size_t n = 0;
    std::stringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      double v = 0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
        fail(ErrorKind::kFormat, "matrix csv: bad number '" + cell + "' on line " + std::to_string(rows + 1));
      }
      values.push_back(v);
      ++n;
    }
    if (rows > 0 && n != cols) fail(ErrorKind::kFormat, "matrix csv: ragged line " + std::to_string(rows + 1));
    cols = n;
    ++rows;
  }
  if (rows == 0 || cols == 0) fail(ErrorKind::kFormat, "matrix csv: empty");
  return Tensor<double>({rows, cols}, std::move(values));
}

std::string matrix_pgm(const Tensor<double>& m) {
  check_square(m);
  const auto [lo, hi] = std::minmax_element(m.data().begin(), m.data().end());
  const double range = *hi - *lo;
  std::string out = "P5\n" + std::to_string(m.dim(1)) + " " + std::to_string(m.dim(0)) + "\n255\n";
  for (double v : m.data()) {
    const double g = range > 0 ? std::round(255.0 * (v - *lo) / range) : 0.0;
    out += static_cast<char>(static_cast<unsigned char>(std::clamp(g, 0.0, 255.0)));
  }
  return out;
}

void export_matrix(const InteractionMatrix& m, const std::string& path, MatrixFormat format) {
  const std::string body = format == MatrixFormat::kCsv ? matrix_csv(m.m) : matrix_pgm(m.m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot open '" + path + "' for writing");
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for '" + path + "'");
}

}  // namespace dbt::train
