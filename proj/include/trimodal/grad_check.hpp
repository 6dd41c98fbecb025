#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "trimodal/error.hpp"
#include "trimodal/tensor.hpp"

namespace trimodal {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;  // index into the params list
  std::size_t worst_entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
};

// Compares reverse-mode gradients with central differences.
//
// `build` receives a fresh Graph and returns the scalar loss node; it is called
// once for the analytic pass and twice per parameter entry.  The error for an
// entry is |analytic - numeric| / max(1, |analytic|, |numeric|).
template <typename Build>
GradCheckResult grad_check(Build&& build, const std::vector<Tensor<double>*>& params, double h = 1e-5) {
  for (auto* p : params) {
    p->requires_grad = true;
    p->zero_grad();
  }
  {
    Graph<double> g;
    Var<double> loss = build(g);
    g.backward(loss);
  }
  auto eval = [&]() {
    Graph<double> g;
    const double v = build(g).item();
    if (!std::isfinite(v)) throw NumericalError("grad_check: non-finite loss");
    return v;
  };
  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<double>& p = *params[pi];
    for (std::size_t k = 0; k < p.values.size(); ++k) {
      const double orig = p.values[k];
      p.values[k] = orig + h;
      const double up = eval();
      p.values[k] = orig - h;
      const double down = eval();
      p.values[k] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p.grad.empty() ? 0.0 : p.grad[k];
      const double err = std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
      ++res.entries_checked;
      if (err > res.max_rel_error || res.entries_checked == 1) {
        res.max_rel_error = err;
        res.worst_param = pi;
        res.worst_entry = k;
        res.analytic = analytic;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace trimodal
