#pragma once

#include <cstdint>

#include "attnmask/graph.hpp"
#include "attnmask/ops.hpp"
#include "attnmask/random.hpp"
#include "attnmask/tensor.hpp"

namespace attnmask::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline Var weighted_sum(Graph& g, Var x, const Tensor& w) { return ops::sum(ops::mul(x, g.constant(w))); }

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace attnmask::testing
