#pragma once

#include <cstdint>
#include <functional>

#include "attnmask/graph.hpp"

namespace attnmask {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  // Elements left out because the function is not smooth within eps there.
  std::size_t skipped = 0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

struct GradCheckOptions {
  double eps = 1e-4;
  // 0 checks every element; otherwise a seeded random subset of this size.
  std::size_t max_elements = 0;
  std::uint64_t seed = 0;
  // Also evaluate the eps / 2 difference; if the two numeric estimates differ
  // by more than nonsmooth_tolerance (relative), a kink lies within eps and the
  // element is counted as skipped instead of compared.
  bool skip_nonsmooth = false;
  double nonsmooth_tolerance = 1e-3;
};

// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

// Builds a scalar from one input on a fresh graph.
using ScalarFn = std::function<Var(Graph&, Var)>;

// Central differences (f(x + eps) - f(x - eps)) / (2 eps) per element against
// the reverse-mode gradient of fn at input. params, if given, is bound to
// every graph so fn may read parameters.
GradCheckReport grad_check(const ScalarFn& fn, const Tensor& input,
                           const GradCheckOptions& options = {},
                           const ParamStore* params = nullptr);

// Same check against one parameter of a store; fn binds parameters through
// Graph::param. The store is restored before returning.
GradCheckReport grad_check_param(const std::function<Var(Graph&)>& fn,
                                 ParamStore& params, ParamId id,
                                 const GradCheckOptions& options = {});

// Compares a precomputed analytic gradient with central differences of f.
GradCheckReport compare_with_finite_differences(
    const std::function<double()>& f, Tensor& point, const Tensor& analytic,
    const GradCheckOptions& options);

}  // namespace attnmask
