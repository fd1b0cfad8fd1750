#pragma once

#include <array>
#include <optional>
#include <vector>

#include "attnmask/attention.hpp"

namespace attnmask {

struct StageConfig {
  // Bottlenecks per stage (C2..C5).
  std::array<int, 4> blocks{3, 4, 6, 3};
  // Output channels per stage; the bottleneck inner width is a quarter of it.
  std::array<int, 4> widths{256, 512, 1024, 2048};
  int stem_channels = 64;

  static StageConfig reference() { return {}; }
  static StageConfig toy() { return StageConfig{{1, 1, 1, 1}, {8, 16, 32, 64}, 8}; }

  void validate() const;
};

struct BottleneckParams {
  ConvParams reduce;                     // 1x1
  ConvParams spatial;                    // 3x3, carries the stride
  ConvParams expand;                     // 1x1
  std::optional<ConvParams> projection;  // 1x1 on the skip path
  AttentionParams attention;
};

// Builds a bottleneck mapping in_channels -> out_channels. Projection is
// created iff stride > 1 or the channel count changes.
BottleneckParams make_bottleneck(ParamStore& store, const std::string& name,
                                 int in_channels, int out_channels, int stride,
                                 const AttentionConfig& attention, Rng& rng);

// ReLU(skip(x) + Attn(expand(relu(spatial(relu(reduce(x))))))).
Var bottleneck_forward(Graph& g, Var x, const BottleneckParams& p);

struct BackboneParams {
  ConvParams stem;  // 7x7 stride 2, followed by 3x3 stride-2 max pool
  std::array<std::vector<BottleneckParams>, 4> stages;
};

struct BackboneConfig {
  StageConfig stages = StageConfig::toy();
  AttentionVariant attention = AttentionVariant::kNone;
  int reduction = 16;
  int eca_kernel = 0;
};

BackboneParams make_backbone(ParamStore& store, const BackboneConfig& cfg, Rng& rng);

struct PyramidLevel {
  int level = 0;   // i of C_i / P_i
  int stride = 0;  // 2^level relative to the input image
  Var map;
};

struct PyramidFeatures {
  std::vector<PyramidLevel> levels;  // ascending level order

  const PyramidLevel& at(int level) const;
};

// image: 3 x H x W with H, W divisible by 32. Returns C2..C5.
PyramidFeatures backbone_forward(Graph& g, Var image, const BackboneParams& p);

struct FpnParams {
  std::array<ConvParams, 4> lateral;  // 1x1, C_i -> d
  std::array<ConvParams, 4> smooth;   // 3x3, d -> d
  int dim = 0;
  bool with_p6 = true;
};

FpnParams make_fpn(ParamStore& store, const std::array<int, 4>& in_channels,
                   int dim, bool with_p6, Rng& rng);

// Top-down fusion before smoothing: P5 = L5(C5), P_i = L_i(C_i) + up2(P_{i+1}).
std::array<Var, 4> fpn_merge(Graph& g, const PyramidFeatures& c, const FpnParams& p);

// Full fusion: merge, 3x3 smoothing per level, optional P6 = maxpool_s2(P5).
PyramidFeatures fpn_fuse(Graph& g, const PyramidFeatures& c, const FpnParams& p);

}  // namespace attnmask
