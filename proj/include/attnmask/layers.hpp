#pragma once

#include <optional>
#include <string>

#include "attnmask/graph.hpp"
#include "attnmask/random.hpp"

namespace attnmask {

enum class Init {
  kFanInUniform,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in))
  kHeUniform,     // U(-sqrt(6/fan_in), sqrt(6/fan_in)), for layers feeding ReLU
  kSmall,         // U(-0.01, 0.01), for prediction outputs
  kZero,
};

Tensor init_tensor(Shape shape, int fan_in, Init init, Rng& rng);

struct ConvParams {
  ParamId weight;
  std::optional<ParamId> bias;
  int stride = 1;
  int padding = 0;
};

ConvParams make_conv(ParamStore& store, const std::string& name, int c_in,
                     int c_out, int kernel, int stride, Init init, Rng& rng,
                     bool with_bias = true);

Var conv(Graph& g, Var x, const ConvParams& p);

struct LinearParams {
  ParamId weight;
  ParamId bias;
};

LinearParams make_linear(ParamStore& store, const std::string& name, int n_in,
                         int n_out, Init init, Rng& rng);

Var linear(Graph& g, Var x, const LinearParams& p);

}  // namespace attnmask
