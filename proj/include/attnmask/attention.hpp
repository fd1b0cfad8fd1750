#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "attnmask/layers.hpp"

namespace attnmask {

enum class AttentionVariant { kNone, kSe, kEca, kCbam };

std::string_view to_string(AttentionVariant v);
AttentionVariant parse_attention_variant(std::string_view name);

struct AttentionConfig {
  int channels = 0;
  // MLP hidden width is channels / reduction for SE and CBAM.
  int reduction = 16;
  AttentionVariant variant = AttentionVariant::kCbam;
  // 0 selects the adaptive rule, see eca_kernel_size.
  int eca_kernel = 0;
  // kFanInUniform (default) or kZero.
  Init init = Init::kFanInUniform;
};

// Odd kernel nearest to log2(C)/2 + 1/2, never below 3.
int eca_kernel_size(int channels);

// Shared two-layer MLP C -> C/r -> C with ReLU, stored as 1x1 convolutions.
struct ChannelMlpParams {
  ConvParams reduce;
  ConvParams expand;
};

struct SpatialAttentionParams {
  ConvParams conv;  // 2 -> 1 channels, 7x7, padding 3
};

struct CbamParams {
  ChannelMlpParams channel;
  SpatialAttentionParams spatial;
};

struct SeParams {
  ChannelMlpParams excitation;
};

struct EcaParams {
  ParamId kernel;  // shape {k}
};

struct AttentionParams {
  AttentionVariant variant = AttentionVariant::kNone;
  std::variant<std::monostate, SeParams, EcaParams, CbamParams> block;
};

AttentionParams make_attention(ParamStore& store, const std::string& name,
                               const AttentionConfig& cfg, Rng& rng);

// sigmoid(MLP(AP(F)) + MLP(MP(F))), shape C x 1 x 1.
Var channel_attention_weights(Graph& g, Var f, const ChannelMlpParams& p);
// F' = F * channel weights.
Var channel_attention(Graph& g, Var f, const ChannelMlpParams& p);

// sigmoid(Conv7x7([AP_c(F'), MP_c(F')])), shape 1 x H x W.
Var spatial_attention_weights(Graph& g, Var f, const SpatialAttentionParams& p);
// F'' = F' * spatial weights.
Var spatial_attention(Graph& g, Var f, const SpatialAttentionParams& p);

Var cbam(Graph& g, Var f, const CbamParams& p);
Var se_block(Graph& g, Var f, const SeParams& p);
Var eca_block(Graph& g, Var f, const EcaParams& p);

// Dispatches on the variant; kNone is the identity.
Var apply_attention(Graph& g, Var f, const AttentionParams& p);

}  // namespace attnmask
