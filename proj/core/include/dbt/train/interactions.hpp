#pragma once

#include <cstddef>
#include <string>

#include "dbt/data/synth.hpp"
#include "dbt/engine/tensor.hpp"
#include "dbt/model/network.hpp"

namespace dbt::train {

/// Average pairwise channel interaction of semantic-grouping features.
struct InteractionMatrix {
  Tensor<double> m;  // [N, N]
  std::string stage;
  std::size_t samples = 0;
  std::size_t groups = 1;
  /// Mean of off-diagonal entries inside the diagonal G blocks.
  double mean_intra = 0;
  /// Mean of entries outside the diagonal blocks.
  double mean_inter = 0;
};

/// Streams feature batches [B, N, H, W]. Each sample's channels are scaled to
/// unit L2 norm over positions (all-zero channels stay zero), then
/// M = sum over samples and positions of x x^T, divided by samples * H * W.
class InteractionAccumulator {
 public:
  InteractionAccumulator(std::size_t channels, std::size_t groups);

  template <typename T>
  void add(const Tensor<T>& features);

  InteractionMatrix result(const std::string& stage = {}) const;

 private:
  std::size_t channels_;
  std::size_t groups_;
  std::size_t samples_ = 0;
  std::size_t positions_ = 0;
  std::vector<double> sum_;
};

/// Matrix of the stage's last DBT block over every sample of `data`, with
/// eval-mode BN. Throws kConfig when the stage has no DBT block.
InteractionMatrix interaction_matrix(const model::Model<float>& m, const data::Dataset& data, const std::string& stage,
                                     std::size_t batch_size = 80);

enum class MatrixFormat { kCsv, kPgm };

MatrixFormat parse_matrix_format(const std::string& name);

/// csv: N lines of N comma-separated shortest round-trip decimals, lines
/// joined by '\n' without a trailing newline.
std::string matrix_csv(const Tensor<double>& m);
/// Parses matrix_csv output.
Tensor<double> parse_matrix_csv(const std::string& text);
/// Binary P5 graymap, min-max scaled to 0..255; a constant matrix maps to 0.
std::string matrix_pgm(const Tensor<double>& m);

/// Throws kIo when the path cannot be written.
void export_matrix(const InteractionMatrix& m, const std::string& path, MatrixFormat format);

}  // namespace dbt::train
