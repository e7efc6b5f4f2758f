#include "lumos/pipeline/bundle.hpp"

namespace lumos::pipeline {

ModelBundle::ModelBundle(const Config& cfg) : config(cfg) {
  config.validate();
  config_hash = pipeline::config_hash(config);
  schedule = diffusion::make_schedule(config.schedule.kind, config.schedule.T, config.schedule.beta_start,
                                      config.schedule.beta_end);
  Rng rng(config.train.seed);
  codec = codec::Codec(config.codec, rng);
  image_encoder = codec::ImageEncoder(config.codec, rng);
  unet = denoiser::UNet(config.unet_config(), rng);
  control = denoiser::ControlBranch(unet, rng);
  ipfm = ipfm::IpfmStack(config.ipfm, rng);
  instruct::TextEncoderConfig tc;
  tc.vocab = tokenizer.vocab_size();
  tc.d = config.ipfm.d;
  tc.layers = config.instruct.text_layers;
  tc.max_len = instruct::Tokenizer::kMaxLen;
  text = instruct::TextEncoder(tc, rng);
  apply_diffusion_policy();
}

ParamList ModelBundle::codec_parameters() {
  ParamList out;
  codec.collect("codec", out);
  return out;
}

ParamList ModelBundle::backbone_parameters() {
  ParamList out;
  unet.collect("unet", out);
  text.collect("text", out);
  return out;
}

ParamList ModelBundle::adapter_parameters() {
  ParamList out;
  image_encoder.collect("image_encoder", out);
  control.collect("control", out);
  ipfm.collect("ipfm", out);
  return out;
}

ParamList ModelBundle::parameters() {
  ParamList out = codec_parameters();
  for (auto& p : adapter_parameters()) out.push_back(p);
  for (auto& p : backbone_parameters()) out.push_back(p);
  return out;
}

void ModelBundle::apply_diffusion_policy() {
  set_trainable(codec_parameters(), false);
  set_trainable(adapter_parameters(), true);
  set_trainable(backbone_parameters(), !config.train.freeze_backbone);
}

void ModelBundle::apply_codec_policy() {
  set_trainable(parameters(), false);
  set_trainable(codec_parameters(), true);
}

Tensor ModelBundle::encode_latent(const Tensor& x) const {
  Tensor z = codec.encode(x);
  return scale(add_scalar(z, -latent.shift), latent.scale);
}

Tensor ModelBundle::decode_latent(const Tensor& z) const {
  return codec.decode(add_scalar(scale(z, 1.0 / latent.scale), latent.shift));
}

Tensor ModelBundle::embed_ids(const std::vector<std::int32_t>& ids) const { return text.forward(ids); }

Tensor ModelBundle::embed_text(const std::string& s) const { return text.forward(tokenizer.tokenize(s)); }

}  // namespace lumos::pipeline
