#pragma once

#include <cstdint>
#include <string_view>

namespace dbt {

/// Counter-based, splittable generator: draw k of stream `key` is
/// mix(key + k * golden), so any draw can be reproduced from (key, k) alone
/// and derived streams never share state with their parent.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) : key_(mix(key)), counter_(counter) {}

  /// Independent child stream identified by `stream`.
  CounterRng split(std::uint64_t stream) const;
  /// Child stream keyed by a string (FNV-1a hash of the label).
  CounterRng split(std::string_view label) const;

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller; consumes two draws.
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// +1 or -1 with equal probability.
  int sign();

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

  static std::uint64_t mix(std::uint64_t z);

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace dbt
