#pragma once

#include <limits>
#include <string>

#include "lumos/codec/codec.hpp"
#include "lumos/denoiser/unet.hpp"
#include "lumos/diffusion/schedule.hpp"
#include "lumos/instruct/text_encoder.hpp"
#include "lumos/instruct/tokenizer.hpp"
#include "lumos/ipfm/ipfm.hpp"
#include "lumos/pipeline/config.hpp"

namespace lumos::pipeline {

/// Diffusion runs on (E(x) - shift) * scale; lo/hi bound the normalised
/// training latents and clamp z0_hat in the sampler.
struct LatentStats {
  double shift = 0.0;
  double scale = 1.0;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

/// Every model component plus the schedule. Parameter names are prefixed by
/// component: codec, image_encoder, unet, control, ipfm, text.
class ModelBundle {
 public:
  /// Fresh initialisation from Rng(config.train.seed).
  explicit ModelBundle(const Config& config);
  ModelBundle(const ModelBundle&) = delete;
  ModelBundle& operator=(const ModelBundle&) = delete;

  ParamList parameters();
  ParamList codec_parameters();
  /// The frozen-backbone partition: U-Net and text encoder.
  ParamList backbone_parameters();
  /// IPFM, control branch and image encoder.
  ParamList adapter_parameters();

  /// Diffusion-stage trainability: codec frozen, adapters trainable, the
  /// backbone trainable unless train.freeze_backbone.
  void apply_diffusion_policy();
  /// Codec-stage trainability: only the codec is trainable.
  void apply_codec_policy();

  /// [N, 3, H, W] -> normalised latent.
  Tensor encode_latent(const Tensor& x) const;
  /// Normalised latent -> image batch clamped to [0, 1].
  Tensor decode_latent(const Tensor& z) const;
  /// e_t [n_tokens, d] of an instruction text.
  Tensor embed_text(const std::string& text) const;
  Tensor embed_ids(const std::vector<std::int32_t>& ids) const;

  /// Latent spatial size for an image side.
  std::size_t latent_side(std::size_t image_side) const { return image_side / config.codec.f; }

  Config config;
  std::string config_hash;
  diffusion::NoiseSchedule schedule;
  instruct::Tokenizer tokenizer;
  codec::Codec codec;
  codec::ImageEncoder image_encoder;
  denoiser::UNet unet;
  denoiser::ControlBranch control;
  ipfm::IpfmStack ipfm;
  instruct::TextEncoder text;
  LatentStats latent;
};

}  // namespace lumos::pipeline
