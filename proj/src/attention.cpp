#include "attnmask/attention.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

#include "attnmask/ops.hpp"

namespace attnmask {

std::string_view to_string(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::kNone: return "none";
    case AttentionVariant::kSe: return "se";
    case AttentionVariant::kEca: return "eca";
    case AttentionVariant::kCbam: return "cbam";
  }
  return "none";
}

AttentionVariant parse_attention_variant(std::string_view name) {
  if (name == "none") return AttentionVariant::kNone;
  if (name == "se") return AttentionVariant::kSe;
  if (name == "eca") return AttentionVariant::kEca;
  if (name == "cbam") return AttentionVariant::kCbam;
  throw std::invalid_argument("unknown attention variant: " + std::string(name));
}

int eca_kernel_size(int channels) {
  if (channels < 1) throw std::invalid_argument("eca: channels must be >= 1");
  const double t = std::abs(std::log2(static_cast<double>(channels)) / 2.0 + 0.5);
  const int k = 2 * static_cast<int>(std::lround((t - 1.0) / 2.0)) + 1;
  return std::max(k, 3);
}

namespace {

ChannelMlpParams make_mlp(ParamStore& store, const std::string& name,
                          const AttentionConfig& cfg, Rng& rng) {
  if (cfg.reduction < 1 || cfg.channels % cfg.reduction != 0) {
    throw std::invalid_argument(
        "attention: channels " + std::to_string(cfg.channels) +
        " not divisible by reduction " + std::to_string(cfg.reduction));
  }
  const int hidden = cfg.channels / cfg.reduction;
  return ChannelMlpParams{
      make_conv(store, name + ".mlp.reduce", cfg.channels, hidden, 1, 1, cfg.init, rng),
      make_conv(store, name + ".mlp.expand", hidden, cfg.channels, 1, 1, cfg.init, rng)};
}

Var mlp(Graph& g, Var pooled, const ChannelMlpParams& p) {
  return conv(g, ops::relu(conv(g, pooled, p.reduce)), p.expand);
}

}  // namespace

AttentionParams make_attention(ParamStore& store, const std::string& name,
                               const AttentionConfig& cfg, Rng& rng) {
  AttentionParams out;
  out.variant = cfg.variant;
  switch (cfg.variant) {
    case AttentionVariant::kNone:
      break;
    case AttentionVariant::kSe:
      out.block = SeParams{make_mlp(store, name + ".se", cfg, rng)};
      break;
    case AttentionVariant::kEca: {
      const int k = cfg.eca_kernel == 0 ? eca_kernel_size(cfg.channels) : cfg.eca_kernel;
      if (k < 1 || k % 2 == 0) {
        throw std::invalid_argument("eca: kernel size must be odd, got " + std::to_string(k));
      }
      out.block = EcaParams{store.add(name + ".eca.kernel", init_tensor({k}, k, cfg.init, rng))};
      break;
    }
    case AttentionVariant::kCbam: {
      CbamParams p;
      p.channel = make_mlp(store, name + ".cbam.channel", cfg, rng);
      p.spatial.conv = make_conv(store, name + ".cbam.spatial", 2, 1, 7, 1, cfg.init, rng);
      out.block = p;
      break;
    }
  }
  return out;
}

Var channel_attention_weights(Graph& g, Var f, const ChannelMlpParams& p) {
  Var avg = mlp(g, ops::global_pool(f, ops::PoolAxis::kSpatial, ops::PoolMode::kAvg), p);
  Var max = mlp(g, ops::global_pool(f, ops::PoolAxis::kSpatial, ops::PoolMode::kMax), p);
  return ops::sigmoid(ops::add(avg, max));
}

Var channel_attention(Graph& g, Var f, const ChannelMlpParams& p) {
  return ops::scale_channels(f, channel_attention_weights(g, f, p));
}

Var spatial_attention_weights(Graph& g, Var f, const SpatialAttentionParams& p) {
  const std::array<Var, 2> pooled{
      ops::global_pool(f, ops::PoolAxis::kChannel, ops::PoolMode::kAvg),
      ops::global_pool(f, ops::PoolAxis::kChannel, ops::PoolMode::kMax)};
  return ops::sigmoid(conv(g, ops::concat_channels(pooled), p.conv));
}

Var spatial_attention(Graph& g, Var f, const SpatialAttentionParams& p) {
  return ops::scale_spatial(f, spatial_attention_weights(g, f, p));
}

Var cbam(Graph& g, Var f, const CbamParams& p) {
  return spatial_attention(g, channel_attention(g, f, p.channel), p.spatial);
}

Var se_block(Graph& g, Var f, const SeParams& p) {
  Var squeeze = ops::global_pool(f, ops::PoolAxis::kSpatial, ops::PoolMode::kAvg);
  return ops::scale_channels(f, ops::sigmoid(mlp(g, squeeze, p.excitation)));
}

Var eca_block(Graph& g, Var f, const EcaParams& p) {
  Var squeeze = ops::global_pool(f, ops::PoolAxis::kSpatial, ops::PoolMode::kAvg);
  Var mixed = ops::channel_conv1d(squeeze, g.param(p.kernel));
  return ops::scale_channels(f, ops::sigmoid(mixed));
}

Var apply_attention(Graph& g, Var f, const AttentionParams& p) {
  switch (p.variant) {
    case AttentionVariant::kNone: return f;
    case AttentionVariant::kSe: return se_block(g, f, std::get<SeParams>(p.block));
    case AttentionVariant::kEca: return eca_block(g, f, std::get<EcaParams>(p.block));
    case AttentionVariant::kCbam: return cbam(g, f, std::get<CbamParams>(p.block));
  }
  return f;
}

}  // namespace attnmask
