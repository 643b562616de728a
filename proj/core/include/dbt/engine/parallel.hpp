#pragma once

#include <cstddef>
#include <functional>

namespace dbt {

/// Worker count used by batch-parallel kernels. Kernels partition work so
/// that results never depend on this value.
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Forces single-threaded execution end to end while enabled.
void set_deterministic(bool on);
bool deterministic();

/// Runs fn(i) for i in [0, n), possibly on several threads. Each index must
/// write to disjoint memory.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace dbt
