#pragma once

#include "dbt/engine/graph.hpp"

namespace dbt {

/// Compares reverse-mode gradients of `output` against central differences
/// (f(x+eps) - f(x-eps)) / (2 eps) for every coordinate of every
/// requires_grad input. Returns max |a - n| / max(1, |a|, |n|).
///
/// Only defined for 64-bit graphs. `eps` must lie in [1e-6, 1e-2].
double finite_difference_check(Graph<double>& graph, Var output, const Bindings<double>& point,
                               double eps);

}  // namespace dbt
