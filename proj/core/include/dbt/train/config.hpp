#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dbt/data/synth.hpp"
#include "dbt/model/arch.hpp"
#include "dbt/nn/optim.hpp"

namespace dbt::train {

/// Everything a training run needs. Stored as JSON; missing keys keep their
/// defaults and unknown keys are rejected.
struct TrainConfig {
  /// Preset name, path to a descriptor file, or an inline descriptor (the
  /// form written to a run's config.json).
  std::string descriptor = "dbtnet-tiny";
  std::optional<model::ArchDescriptor> inline_descriptor;

  data::DatasetSpec dataset;
  /// When set, samples are read from this container instead of generated.
  std::string dataset_path;
  double train_fraction = 0.8;

  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::size_t eval_batch_size = 80;
  /// total_steps is derived from epochs and the training split size.
  nn::SgdCosineConfig sgd{0.1, 0.0, 1, 0.9, 1e-4};

  // Applied to every DBT block of the resolved descriptor.
  double lambda = 3e-4;
  double t = 1.5;
  bool use_encoding = true;
  bool use_shortcut = true;
  /// Stages that carry DBT ("last" adds the trailing head block). Empty keeps
  /// the descriptor's own choice.
  std::vector<std::string> dbt_stages;

  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  bool deterministic = true;

  /// Throws kConfig naming the offending field.
  void validate() const;
  /// Descriptor after stage selection and the DBT overrides. The head keeps
  /// the descriptor's class count; training resizes it to the dataset.
  model::ArchDescriptor resolved_descriptor() const;
};

std::string config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const std::string& text);
TrainConfig load_config(const std::string& path);
void save_config(const TrainConfig& cfg, const std::string& path);

/// Command-line style overrides layered on top of a loaded config.
struct Overrides {
  std::optional<double> lambda;
  std::optional<double> t;
  bool no_encoding = false;
  bool no_shortcut = false;
  std::optional<std::vector<std::string>> stages;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::optional<std::size_t> epochs;
  std::optional<std::string> output_dir;

  void apply(TrainConfig& cfg) const;
};

/// Splits "IV,V" into {"IV", "V"}; empty items are rejected.
std::vector<std::string> parse_stage_list(const std::string& text);

/// Dataset named by the config: loaded from dataset_path or generated.
data::Dataset load_or_generate(const TrainConfig& cfg);

}  // namespace dbt::train
