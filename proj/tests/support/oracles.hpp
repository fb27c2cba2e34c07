#pragma once

// Test-only oracles. Everything here is independent of the library's
// differentiation path: gradients come from central finite differences and
// metrics from direct formula evaluation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "melon/tensor.hpp"

namespace melon::testing {

// Scalar function rebuilt from leaf values on every call.
using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

// Central finite differences, one gradient tensor per leaf.
inline std::vector<Tensor> fd_gradients(const ScalarFn& f, std::vector<Tensor> leaves,
                                        double h = 1e-5) {
  std::vector<Tensor> grads;
  grads.reserve(leaves.size());
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    Tensor g(leaves[l].shape());
    for (std::size_t i = 0; i < leaves[l].numel(); ++i) {
      const double saved = leaves[l][i];
      leaves[l][i] = saved + h;
      const double up = f(leaves);
      leaves[l][i] = saved - h;
      const double down = f(leaves);
      leaves[l][i] = saved;
      g[i] = (up - down) / (2.0 * h);
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

inline double max_rel_err(const Tensor& a, const Tensor& b, double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, rel_err(a[i], b[i], floor));
  return worst;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace melon::testing
