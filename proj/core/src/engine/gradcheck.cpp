#include "dbt/engine/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dbt {

double finite_difference_check(Graph<double>& graph, Var output, const Bindings<double>& point, double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-2)) {
    fail(ErrorKind::kConfig, "finite difference eps must lie in [1e-6, 1e-2], got " + std::to_string(eps));
  }
  graph.evaluate(point);
  const auto analytic = graph.gradients(output);

  Bindings<double> probe = point;
  auto eval_at = [&]() {
    graph.evaluate(probe);
    const double v = graph.value(output).item();
    if (!std::isfinite(v)) fail(ErrorKind::kNumeric, "non-finite function value under perturbation");
    return v;
  };

  double worst = 0.0;
  for (const auto& [name, grad] : analytic) {
    auto& x = probe.at(name);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double orig = x[i];
      x[i] = orig + eps;
      const double fp = eval_at();
      x[i] = orig - eps;
      const double fm = eval_at();
      x[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = grad[i];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace dbt
