#pragma once

#include <optional>
#include <span>
#include <vector>

#include "attnmask/graph.hpp"

// Differentiable operations over rank-3 (C x H x W) activations. Every op
// records its backward rule on the graph of its inputs.
namespace attnmask::ops {

enum class PoolAxis { kSpatial, kChannel };
enum class PoolMode { kAvg, kMax };

double sigmoid(double x);

Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
// Sum of same-shape tensors.
Var add_n(std::span<const Var> xs);

// x (C x H x W) times per-channel weights (C x 1 x 1).
Var scale_channels(Var x, Var weights);
// x (C x H x W) times a per-pixel map (1 x H x W) shared across channels.
Var scale_spatial(Var x, Var weights);

Var sigmoid(Var x);
Var relu(Var x);

// Zero-padded cross-correlation. weights: C_out x C_in x k x k; bias: C_out.
Var conv2d(Var x, Var weights, std::optional<Var> bias, int stride,
           int padding);

// Global pooling. kSpatial yields C x 1 x 1, kChannel yields 1 x H x W.
// Max ties give the gradient to the first element in scan order.
Var global_pool(Var x, PoolAxis axis, PoolMode mode);

Var upsample_nearest(Var x, int factor);

// Windowed max pooling; padded cells never win.
Var max_pool2d(Var x, int kernel, int stride, int padding);

Var concat_channels(std::span<const Var> xs);

// Sum of all elements, shape {1}.
Var sum(Var x);

// Fully connected layer on the flattened input. weights: out x in,
// bias: out. Output is out x 1 x 1.
Var linear(Var x, Var weights, std::optional<Var> bias);

// 1-D convolution along the channel axis of a C x 1 x 1 tensor, zero padding
// (k - 1) / 2, no bias. weights: {k}, k odd.
Var channel_conv1d(Var x, Var weights);

// Flat element gather, output shape {n}.
Var gather(Var x, std::span<const std::size_t> indices);

// Channel slice c of a C x H x W tensor, output 1 x H x W.
Var select_channel(Var x, int channel);

}  // namespace attnmask::ops
