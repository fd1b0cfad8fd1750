#include "attnmask/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "attnmask/random.hpp"

namespace attnmask {

double relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport compare_with_finite_differences(
    const std::function<double()>& f, Tensor& point, const Tensor& analytic,
    const GradCheckOptions& options) {
  if (options.eps < 1e-6 || options.eps > 1e-3) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-6, 1e-3]");
  }
  if (analytic.shape() != point.shape()) {
    throw std::logic_error("grad_check: gradient shape differs from input");
  }
  std::vector<std::size_t> elements(point.size());
  std::iota(elements.begin(), elements.end(), 0);
  if (options.max_elements > 0 && options.max_elements < elements.size()) {
    Rng rng(options.seed);
    rng.shuffle(elements);
    elements.resize(options.max_elements);
    std::sort(elements.begin(), elements.end());
  }

  GradCheckReport report;
  for (std::size_t i : elements) {
    const double saved = point[i];
    point[i] = saved + options.eps;
    const double up = f();
    point[i] = saved - options.eps;
    const double down = f();
    point[i] = saved;
    const double numeric = (up - down) / (2.0 * options.eps);
    if (options.skip_nonsmooth) {
      const double h = 0.5 * options.eps;
      point[i] = saved + h;
      const double up_h = f();
      point[i] = saved - h;
      const double down_h = f();
      point[i] = saved;
      if (relative_error(numeric, (up_h - down_h) / (2.0 * h)) > options.nonsmooth_tolerance) {
        ++report.skipped;
        continue;
      }
    }
    const double err = relative_error(analytic[i], numeric);
    if (report.checked == 0 || err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst_index = i;
      report.analytic = analytic[i];
      report.numeric = numeric;
    }
    ++report.checked;
  }
  return report;
}

GradCheckReport grad_check(const ScalarFn& fn, const Tensor& input,
                           const GradCheckOptions& options,
                           const ParamStore* params) {
  Tensor analytic;
  {
    Graph g(params);
    Var x = g.variable(input);
    Var out = fn(g, x);
    g.backward(out);
    analytic = g.grad(x);
  }
  Tensor point = input;
  auto f = [&]() {
    Graph g(params);
    return fn(g, g.variable(point)).value().item();
  };
  return compare_with_finite_differences(f, point, analytic, options);
}

GradCheckReport grad_check_param(const std::function<Var(Graph&)>& fn,
                                 ParamStore& params, ParamId id,
                                 const GradCheckOptions& options) {
  Tensor analytic;
  {
    Graph g(&params);
    Var out = fn(g);
    g.backward(out);
    analytic = g.param_grad(id);
  }
  auto f = [&]() {
    Graph g(&params);
    return fn(g).value().item();
  };
  return compare_with_finite_differences(f, params.value(id), analytic,
                                         options);
}

}  // namespace attnmask
