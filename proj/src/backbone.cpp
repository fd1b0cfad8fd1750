#include "attnmask/backbone.hpp"

#include <stdexcept>
#include <string>

#include "attnmask/ops.hpp"

namespace attnmask {

void StageConfig::validate() const {
  for (int i = 0; i < 4; ++i) {
    if (blocks[i] < 1) throw std::invalid_argument("stage block counts must be >= 1");
    if (widths[i] < 4 || widths[i] % 4 != 0) {
      throw std::invalid_argument("stage widths must be positive multiples of 4");
    }
    if (i > 0 && widths[i] <= widths[i - 1]) {
      throw std::invalid_argument("stage widths must be strictly increasing");
    }
  }
  if (stem_channels < 1) throw std::invalid_argument("stem channels must be >= 1");
}

BottleneckParams make_bottleneck(ParamStore& store, const std::string& name,
                                 int in_channels, int out_channels, int stride,
                                 const AttentionConfig& attention, Rng& rng) {
  const int inner = out_channels / 4;
  BottleneckParams p;
  p.reduce = make_conv(store, name + ".reduce", in_channels, inner, 1, 1, Init::kHeUniform, rng);
  p.spatial = make_conv(store, name + ".spatial", inner, inner, 3, stride, Init::kHeUniform, rng);
  p.expand = make_conv(store, name + ".expand", inner, out_channels, 1, 1, Init::kHeUniform, rng);
  if (stride > 1 || in_channels != out_channels) {
    p.projection = make_conv(store, name + ".projection", in_channels, out_channels, 1,
                             stride, Init::kFanInUniform, rng);
  }
  AttentionConfig acfg = attention;
  acfg.channels = out_channels;
  p.attention = make_attention(store, name + ".attn", acfg, rng);
  return p;
}

Var bottleneck_forward(Graph& g, Var x, const BottleneckParams& p) {
  Var r = ops::relu(conv(g, x, p.reduce));
  r = ops::relu(conv(g, r, p.spatial));
  r = conv(g, r, p.expand);
  r = apply_attention(g, r, p.attention);
  Var skip = p.projection ? conv(g, x, *p.projection) : x;
  return ops::relu(ops::add(skip, r));
}

BackboneParams make_backbone(ParamStore& store, const BackboneConfig& cfg, Rng& rng) {
  cfg.stages.validate();
  BackboneParams p;
  p.stem = make_conv(store, "backbone.stem", 3, cfg.stages.stem_channels, 7, 2,
                     Init::kHeUniform, rng);
  AttentionConfig attention;
  attention.variant = cfg.attention;
  attention.reduction = cfg.reduction;
  attention.eca_kernel = cfg.eca_kernel;
  int channels = cfg.stages.stem_channels;
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < cfg.stages.blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const std::string name =
          "backbone.layer" + std::to_string(s + 2) + "." + std::to_string(b);
      p.stages[s].push_back(make_bottleneck(store, name, channels, cfg.stages.widths[s],
                                            stride, attention, rng));
      channels = cfg.stages.widths[s];
    }
  }
  return p;
}

const PyramidLevel& PyramidFeatures::at(int level) const {
  for (const auto& l : levels) {
    if (l.level == level) return l;
  }
  throw std::out_of_range("pyramid level " + std::to_string(level) + " not present");
}

PyramidFeatures backbone_forward(Graph& g, Var image, const BackboneParams& p) {
  const Tensor& img = image.value();
  require_rank(img, 3, "backbone input");
  if (img.channels() != 3) throw std::invalid_argument("backbone expects a 3-channel image");
  if (img.height() % 32 != 0 || img.width() % 32 != 0) {
    throw std::invalid_argument("backbone input extents must be divisible by 32, got " +
                                shape_string(img.shape()));
  }
  Var x = ops::relu(conv(g, image, p.stem));
  x = ops::max_pool2d(x, 3, 2, 1);
  PyramidFeatures out;
  for (int s = 0; s < 4; ++s) {
    for (const auto& block : p.stages[s]) x = bottleneck_forward(g, x, block);
    out.levels.push_back(PyramidLevel{s + 2, 1 << (s + 2), x});
  }
  return out;
}

FpnParams make_fpn(ParamStore& store, const std::array<int, 4>& in_channels,
                   int dim, bool with_p6, Rng& rng) {
  FpnParams p;
  p.dim = dim;
  p.with_p6 = with_p6;
  for (int i = 0; i < 4; ++i) {
    const std::string lvl = std::to_string(i + 2);
    p.lateral[i] = make_conv(store, "fpn.lateral" + lvl, in_channels[i], dim, 1, 1,
                             Init::kFanInUniform, rng);
    p.smooth[i] = make_conv(store, "fpn.smooth" + lvl, dim, dim, 3, 1, Init::kFanInUniform, rng);
  }
  return p;
}

std::array<Var, 4> fpn_merge(Graph& g, const PyramidFeatures& c, const FpnParams& p) {
  if (c.levels.size() != 4) throw std::invalid_argument("fpn expects C2..C5");
  std::array<Var, 4> merged;
  merged[3] = conv(g, c.at(5).map, p.lateral[3]);
  for (int i = 2; i >= 0; --i) {
    Var lateral = conv(g, c.at(i + 2).map, p.lateral[i]);
    Var top_down = ops::upsample_nearest(merged[i + 1], 2);
    if (lateral.shape() != top_down.shape()) {
      throw std::invalid_argument("fpn: lateral " + shape_string(lateral.shape()) +
                                  " and upsampled " + shape_string(top_down.shape()) +
                                  " differ");
    }
    merged[i] = ops::add(lateral, top_down);
  }
  return merged;
}

PyramidFeatures fpn_fuse(Graph& g, const PyramidFeatures& c, const FpnParams& p) {
  const std::array<Var, 4> merged = fpn_merge(g, c, p);
  PyramidFeatures out;
  for (int i = 0; i < 4; ++i) {
    out.levels.push_back(PyramidLevel{i + 2, 1 << (i + 2), conv(g, merged[i], p.smooth[i])});
  }
  if (p.with_p6) {
    out.levels.push_back(PyramidLevel{6, 64, ops::max_pool2d(out.levels[3].map, 1, 2, 0)});
  }
  return out;
}

}  // namespace attnmask
