#include "attnmask/layers.hpp"

#include <cmath>

#include "attnmask/ops.hpp"

namespace attnmask {

Tensor init_tensor(Shape shape, int fan_in, Init init, Rng& rng) {
  Tensor t(std::move(shape), 0.0);
  double bound = 0.0;
  switch (init) {
    case Init::kFanInUniform:
      bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      break;
    case Init::kHeUniform:
      bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      break;
    case Init::kSmall:
      bound = 0.01;
      break;
    case Init::kZero:
      return t;
  }
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

ConvParams make_conv(ParamStore& store, const std::string& name, int c_in,
                     int c_out, int kernel, int stride, Init init, Rng& rng,
                     bool with_bias) {
  ConvParams p;
  const int fan_in = c_in * kernel * kernel;
  p.weight = store.add(name + ".weight",
                       init_tensor({c_out, c_in, kernel, kernel}, fan_in, init, rng));
  if (with_bias) p.bias = store.add(name + ".bias", Tensor({c_out}, 0.0));
  p.stride = stride;
  p.padding = (kernel - 1) / 2;
  return p;
}

Var conv(Graph& g, Var x, const ConvParams& p) {
  std::optional<Var> bias;
  if (p.bias) bias = g.param(*p.bias);
  return ops::conv2d(x, g.param(p.weight), bias, p.stride, p.padding);
}

LinearParams make_linear(ParamStore& store, const std::string& name, int n_in,
                         int n_out, Init init, Rng& rng) {
  LinearParams p;
  p.weight = store.add(name + ".weight", init_tensor({n_out, n_in}, n_in, init, rng));
  p.bias = store.add(name + ".bias", Tensor({n_out}, 0.0));
  return p;
}

Var linear(Graph& g, Var x, const LinearParams& p) {
  return ops::linear(x, g.param(p.weight), g.param(p.bias));
}

}  // namespace attnmask
