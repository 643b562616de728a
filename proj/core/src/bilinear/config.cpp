#include "dbt/bilinear/config.hpp"

#include <cmath>
#include <string>

#include "common/checks.hpp"

namespace dbt::bilinear {

void DbtConfig::validate() const {
  using detail::expect;
  expect(channels >= 1 && groups >= 1, ErrorKind::kConfig, "DBT channels and groups must be positive");
  expect(channels % groups == 0, ErrorKind::kConfig,
         "DBT channels " + std::to_string(channels) + " not divisible by groups " + std::to_string(groups));
  expect(group_size() >= 2, ErrorKind::kConfig, "DBT group size N/G must be at least 2");
  expect(t > 0.0, ErrorKind::kConfig, "group index encoding frequency t must be positive");
  expect(grouping_loss_weight >= 0.0, ErrorKind::kConfig, "grouping loss weight must be non-negative");
}

template <typename T>
GroupIndexEncoding<T> group_index_encoding(const DbtConfig& cfg) {
  if (!(cfg.t > 0.0)) fail(ErrorKind::kConfig, "group index encoding frequency t must be positive");
  cfg.validate();
  const std::size_t g = cfg.groups;
  const std::size_t n = cfg.group_size();
  Tensor<T> table({g, n});
  for (std::size_t j = 0; j < g; ++j) {
    for (std::size_t slot = 0; slot < n; ++slot) {
      const std::size_t i = slot / 2;
      const double arg = static_cast<double>(j) / std::pow(cfg.t, 2.0 * static_cast<double>(i) / static_cast<double>(n));
      table[j * n + slot] = static_cast<T>(slot % 2 == 0 ? std::sin(arg) : std::cos(arg));
    }
  }
  return {std::move(table)};
}

template GroupIndexEncoding<float> group_index_encoding(const DbtConfig&);
template GroupIndexEncoding<double> group_index_encoding(const DbtConfig&);

}  // namespace dbt::bilinear
