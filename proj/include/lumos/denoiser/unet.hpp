#pragma once

#include <vector>

#include "lumos/ipfm/ipfm.hpp"
#include "lumos/numcore/nn.hpp"

namespace lumos::denoiser {

struct UNetConfig {
  std::size_t latent_channels = 4;
  std::size_t base_channels = 64;
  std::vector<std::size_t> channel_mults{1, 2, 2};
  /// Levels (0 = full resolution) that cross-attend to p_s.
  std::vector<std::size_t> attention_levels{1, 2};
  std::size_t context_dim = 256;
  std::size_t groups = 8;
};

/// GroupNorm -> SiLU -> conv, twice, with the time embedding added in between.
class ResBlock {
 public:
  ResBlock() = default;
  ResBlock(std::size_t in, std::size_t out, std::size_t temb_dim, std::size_t groups, Rng& rng);
  Tensor forward(const Tensor& x, const Tensor& temb_act) const;
  void collect(const std::string& prefix, ParamList& out);

  GroupNorm norm1, norm2;
  Conv2d conv1, conv2;
  Linear temb_proj;
  Conv2d skip;  // 1x1 when channel counts differ
  bool has_skip = false;
};

/// Residual cross-attention from spatial positions to the p_s tokens.
class CrossAttention {
 public:
  CrossAttention() = default;
  CrossAttention(std::size_t channels, std::size_t context_dim, std::size_t groups, Rng& rng);
  /// x [N, C, H, W], context [N, n_query, context_dim]. Weights [N, H*W, n_query]
  /// are appended to `weights` when given.
  Tensor forward(const Tensor& x, const Tensor& context, std::vector<Tensor>* weights) const;
  void collect(const std::string& prefix, ParamList& out);

  GroupNorm norm;
  Attention attn;
};

/// One resolution level of the encoder path.
struct EncoderLevel {
  ResBlock res;
  bool has_attn = false;
  CrossAttention attn;
  bool has_down = false;
  Conv2d down;  // stride 2
};

struct DecoderLevel {
  ResBlock res;
  bool has_attn = false;
  CrossAttention attn;
};

/// Captured cross-attention maps of one forward pass, in layer order.
struct AttentionTrace {
  std::vector<Tensor> maps;    // [N, H*W, n_query]
  std::vector<std::size_t> levels;
};

/// Compact U-Net predicting noise from (z_t, t, p_s), with optional additive
/// residuals injected at every encoder output (skips and the bottleneck).
class UNet {
 public:
  UNet() = default;
  UNet(const UNetConfig& config, Rng& rng);

  /// SiLU(time MLP(t)) for each sample: [N, temb_dim].
  Tensor time_features(const std::vector<std::size_t>& ts) const;
  /// Encoder outputs per level (the last is the bottleneck).
  std::vector<Tensor> encode(const Tensor& z, const Tensor& temb_act, const Tensor& p_s,
                             AttentionTrace* trace) const;
  /// residuals: empty, or one per level matching encode()'s outputs.
  Tensor decode(std::vector<Tensor> skips, const Tensor& temb_act, const Tensor& p_s,
                const std::vector<Tensor>& residuals, AttentionTrace* trace) const;
  Tensor forward(const Tensor& z_t, const std::vector<std::size_t>& ts, const Tensor& p_s,
                 AttentionTrace* trace = nullptr) const;
  void collect(const std::string& prefix, ParamList& out);
  /// Encoder-side parameters only (the part the control branch copies).
  void collect_encoder(const std::string& prefix, ParamList& out);

  std::size_t temb_dim() const { return 4 * config.base_channels; }
  std::size_t level_channels(std::size_t level) const {
    return config.base_channels * config.channel_mults.at(level);
  }

  UNetConfig config;
  ipfm::TimeEmbedding time;
  Conv2d conv_in;
  std::vector<EncoderLevel> down;
  std::vector<DecoderLevel> up;  // up[i] serves level i (i < levels - 1)
  GroupNorm norm_out;
  Conv2d conv_out;  // zero-initialised
};

/// Trainable copy of the U-Net encoder fed z_t + hint(z_l); zero-initialised
/// 1x1 projections turn each level's output into a residual for the U-Net.
class ControlBranch {
 public:
  ControlBranch() = default;
  /// Copies the current encoder weights of `unet`.
  ControlBranch(const UNet& unet, Rng& rng);
  std::vector<Tensor> forward(const Tensor& z_t, const Tensor& z_l, const Tensor& temb_act,
                              const Tensor& p_s) const;
  void collect(const std::string& prefix, ParamList& out);

  UNet encoder;  // only time, conv_in and down are populated and used
  Conv2d hint;   // zero-initialised projection of z_l onto conv_in's output
  std::vector<Conv2d> zero_convs;
};

/// eps_theta(z_t, t, z_l, p_s). A null control branch runs the plain U-Net.
Tensor eps_theta(const UNet& unet, const ControlBranch* control, const Tensor& z_t,
                 const std::vector<std::size_t>& ts, const Tensor& z_l, const Tensor& p_s,
                 AttentionTrace* trace = nullptr);

}  // namespace lumos::denoiser
