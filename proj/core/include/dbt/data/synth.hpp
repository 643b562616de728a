#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dbt/engine/tensor.hpp"

namespace dbt::data {

/// Synthetic part-texture classification problem. Every class is an
/// unordered combination of `parts_per_image` grating textures; an image
/// draws its parts at random non-overlapping positions, so only the
/// co-occurrence of textures identifies the class.
struct DatasetSpec {
  std::size_t classes = 8;
  std::size_t samples_per_class = 100;
  std::size_t image_size = 64;
  std::size_t parts_per_image = 2;
  std::size_t texture_bank_size = 8;
  double noise_std = 0.05;
  std::uint64_t seed = 0;

  /// Throws kConfig on classes < 2, image_size not 32 or 64, fewer than two
  /// parts, or more classes than distinct texture combinations.
  void validate() const;
  std::size_t size() const noexcept { return classes * samples_per_class; }

  bool operator==(const DatasetSpec&) const = default;
};

struct Part {
  double cx = 0;  // column of the disc center, pixels
  double cy = 0;  // row of the disc center, pixels
  double radius = 0;
  std::size_t texture = 0;

  bool operator==(const Part&) const = default;
};

struct Sample {
  Tensor<float> image;  // [3, S, S], values in [0, 1]
  std::size_t label = 0;
  std::vector<Part> part_layout;  // empty for samples read back from a container
};

using Dataset = std::vector<Sample>;

/// Texture ids of every class, each sorted ascending. The first classes use
/// cyclic windows over the bank, so each texture is shared by several
/// classes; further classes take the remaining combinations in order.
std::vector<std::vector<std::size_t>> class_textures(const DatasetSpec& spec);

/// Grating of texture `id` sampled at pixel (row, col); values in [-1, 1].
double texture_value(const DatasetSpec& spec, std::size_t id, double row, double col, double phase);

/// Sample i has label i mod classes and is generated from stream (seed, i).
/// Throws kConfig when parts cannot be placed without overlap.
Dataset generate_dataset(const DatasetSpec& spec);
Sample generate_sample(const DatasetSpec& spec, std::size_t index);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified per class, each side non-empty, indices in ascending order.
/// Throws kConfig when a class has fewer than two samples.
SplitIndices split_indices(const Dataset& data, double train_fraction, std::uint64_t seed);

struct Split {
  Dataset train;
  Dataset test;
};

Split split(const Dataset& data, double train_fraction, std::uint64_t seed);

std::size_t num_classes(const Dataset& data);

/// Stacks the selected samples into an image batch [B, 3, S, S] and a label
/// vector [B] (labels as T).
template <typename T>
Tensor<T> batch_images(const Dataset& data, const std::vector<std::size_t>& indices);
template <typename T>
Tensor<T> batch_labels(const Dataset& data, const std::vector<std::size_t>& indices);

/// 64-bit FNV-1a over the image bytes.
std::uint64_t image_hash(const Tensor<float>& image);

/// Binary container, all fields little-endian:
///   "DBTD" | version u32 = 1 | count u32 | classes u32 | channels u32 |
///   height u32 | width u32 | count x (label u32, channels*height*width f32)
/// Part layouts are not stored.
void save_dataset(const Dataset& data, const std::string& path);
/// Throws kIo when unreadable and kFormat on any header or size mismatch.
Dataset load_dataset(const std::string& path);

}  // namespace dbt::data
