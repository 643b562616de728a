#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "dbt/bilinear/config.hpp"

namespace dbt::model {

struct StemSpec {
  std::size_t kernel = 7;
  std::size_t channels = 64;
  std::size_t stride = 2;
  std::size_t padding = 3;
  bool max_pool = true;  // 3x3, stride 2, padding 1

  bool operator==(const StemSpec&) const = default;
};

enum class BlockType { kPlain, kDbt };

/// One residual stage of bottleneck blocks. `width` is the bottleneck
/// channel count (the DBT N when the stage is bilinear), `out` the stage
/// output. The first block carries `stride` on its leading 1x1 conv.
struct StageSpec {
  std::string name;
  BlockType block = BlockType::kPlain;
  std::size_t repeat = 1;
  std::size_t width = 64;
  std::size_t out = 256;
  std::size_t stride = 1;
  /// Bilinear settings; channels always equals `width`. Required for
  /// kDbt stages, optional otherwise so a plain stage can be switched on.
  std::optional<bilinear::DbtConfig> dbt;

  bool operator==(const StageSpec&) const = default;
};

struct HeadSpec {
  std::size_t classes = 1000;
  /// Trailing DBT block on the final feature map, before global pooling;
  /// active only when `use_last_dbt` is set. Channels equal the feature width.
  std::optional<bilinear::DbtConfig> last_dbt;
  bool use_last_dbt = false;

  bool operator==(const HeadSpec&) const = default;
};

struct ArchDescriptor {
  std::string name;
  std::size_t input_channels = 3;
  StemSpec stem;
  std::vector<StageSpec> stages;
  HeadSpec head;

  /// Throws kConfig naming the first offending field.
  void validate() const;
  std::size_t feature_channels() const;
  const StageSpec& stage(const std::string& name) const;
  bool has_dbt() const;

  bool operator==(const ArchDescriptor&) const = default;
};

std::string to_string(BlockType t);

std::string descriptor_to_json(const ArchDescriptor& d);
/// Parses and validates. Throws kFormat on malformed text or unknown keys.
ArchDescriptor descriptor_from_json(const std::string& text);
ArchDescriptor load_descriptor(const std::string& path);
void save_descriptor(const ArchDescriptor& d, const std::string& path);

std::vector<std::string> preset_names();
/// Built-in descriptors: resnet-50, dbtnet-50, dbtnet-101, dbtnet-tiny, plain-tiny.
ArchDescriptor preset(const std::string& name);
/// A preset name, or otherwise a path to a descriptor file.
ArchDescriptor resolve_descriptor(const std::string& name_or_path);

/// Copies `d` with DBT enabled exactly on the named stages ("last" selects
/// the trailing head block). Every named stage must carry DBT settings.
ArchDescriptor with_dbt_stages(ArchDescriptor d, const std::vector<std::string>& stages);

/// Applies fn to every DBT config in the descriptor (stages and head).
template <typename Fn>
void for_each_dbt(ArchDescriptor& d, Fn&& fn) {
  for (auto& s : d.stages)
    if (s.dbt) fn(*s.dbt);
  if (d.head.last_dbt) fn(*d.head.last_dbt);
}

}  // namespace dbt::model
