#include "lumos/denoiser/unet.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace lumos::denoiser {
namespace {

std::size_t groups_for(std::size_t wanted, std::size_t channels) {
  return std::gcd(wanted, channels);
}

bool contains(const std::vector<std::size_t>& v, std::size_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

ResBlock::ResBlock(std::size_t in, std::size_t out, std::size_t temb_dim, std::size_t groups,
                   Rng& rng)
    : norm1(groups_for(groups, in), in),
      norm2(groups_for(groups, out), out),
      conv1(in, out, 3, 1, 1, rng),
      conv2(out, out, 3, 1, 1, rng),
      temb_proj(temb_dim, out, rng),
      has_skip(in != out) {
  if (has_skip) skip = Conv2d(in, out, 1, 1, 0, rng);
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& temb_act) const {
  Tensor h = conv1.forward(silu(norm1.forward(x)));
  const Tensor t = temb_proj.forward(temb_act);
  h = add(h, reshape(t, {t.dim(0), t.dim(1), 1, 1}));
  h = conv2.forward(silu(norm2.forward(h)));
  return add(has_skip ? skip.forward(x) : x, h);
}

void ResBlock::collect(const std::string& prefix, ParamList& out) {
  norm1.collect(join_name(prefix, "norm1"), out);
  conv1.collect(join_name(prefix, "conv1"), out);
  temb_proj.collect(join_name(prefix, "temb_proj"), out);
  norm2.collect(join_name(prefix, "norm2"), out);
  conv2.collect(join_name(prefix, "conv2"), out);
  if (has_skip) skip.collect(join_name(prefix, "skip"), out);
}

CrossAttention::CrossAttention(std::size_t channels, std::size_t context_dim, std::size_t groups,
                               Rng& rng)
    : norm(groups_for(groups, channels), channels),
      attn(channels, context_dim, channels, rng, false) {}

Tensor CrossAttention::forward(const Tensor& x, const Tensor& context,
                               std::vector<Tensor>* weights) const {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Tensor tokens = reshape(permute(norm.forward(x), {0, 2, 3, 1}), {n, h * w, c});
  const AttentionOutput a = attn.forward(tokens, context);
  if (weights) weights->push_back(a.weights);
  const Tensor back = permute(reshape(a.out, {n, h, w, c}), {0, 3, 1, 2});
  return add(x, back);
}

void CrossAttention::collect(const std::string& prefix, ParamList& out) {
  norm.collect(join_name(prefix, "norm"), out);
  attn.collect(join_name(prefix, "attn"), out);
}

UNet::UNet(const UNetConfig& cfg, Rng& rng) : config(cfg) {
  const std::size_t levels = cfg.channel_mults.size();
  if (levels == 0) throw std::invalid_argument("unet: need at least one level");
  bool any_attn = false;
  for (std::size_t l : cfg.attention_levels) {
    if (l >= levels) throw std::invalid_argument("unet: attention level out of range");
    any_attn = true;
  }
  if (!any_attn) throw std::invalid_argument("unet: at least one level must cross-attend to p_s");

  const std::size_t B = cfg.base_channels, T = temb_dim();
  time = ipfm::TimeEmbedding(B, T, rng);
  conv_in = Conv2d(cfg.latent_channels, level_channels(0), 3, 1, 1, rng);
  std::size_t ch = level_channels(0);
  for (std::size_t l = 0; l < levels; ++l) {
    EncoderLevel lv;
    lv.res = ResBlock(ch, level_channels(l), T, cfg.groups, rng);
    ch = level_channels(l);
    lv.has_attn = contains(cfg.attention_levels, l);
    if (lv.has_attn) lv.attn = CrossAttention(ch, cfg.context_dim, cfg.groups, rng);
    lv.has_down = l + 1 < levels;
    if (lv.has_down) lv.down = Conv2d(ch, ch, 3, 2, 1, rng);
    down.push_back(std::move(lv));
  }
  for (std::size_t l = 0; l + 1 < levels; ++l) {
    DecoderLevel lv;
    const std::size_t from = level_channels(l + 1);
    lv.res = ResBlock(from + level_channels(l), level_channels(l), T, cfg.groups, rng);
    lv.has_attn = contains(cfg.attention_levels, l);
    if (lv.has_attn) lv.attn = CrossAttention(level_channels(l), cfg.context_dim, cfg.groups, rng);
    up.push_back(std::move(lv));
  }
  norm_out = GroupNorm(groups_for(cfg.groups, level_channels(0)), level_channels(0));
  conv_out = Conv2d(level_channels(0), cfg.latent_channels, 3, 1, 1, rng, Init::zero);
}

Tensor UNet::time_features(const std::vector<std::size_t>& ts) const { return silu(time.forward(ts)); }

std::vector<Tensor> UNet::encode(const Tensor& z, const Tensor& temb_act, const Tensor& p_s,
                                 AttentionTrace* trace) const {
  std::vector<Tensor> outs;
  Tensor h = conv_in.forward(z);
  for (std::size_t l = 0; l < down.size(); ++l) {
    const EncoderLevel& lv = down[l];
    if (l > 0) h = down[l - 1].down.forward(h);
    h = lv.res.forward(h, temb_act);
    if (lv.has_attn) {
      h = lv.attn.forward(h, p_s, trace ? &trace->maps : nullptr);
      if (trace) trace->levels.push_back(l);
    }
    outs.push_back(h);
  }
  return outs;
}

Tensor UNet::decode(std::vector<Tensor> skips, const Tensor& temb_act, const Tensor& p_s,
                    const std::vector<Tensor>& residuals, AttentionTrace* trace) const {
  if (!residuals.empty()) {
    if (residuals.size() != skips.size()) throw ShapeError("unet: one residual per level expected");
    for (std::size_t l = 0; l < skips.size(); ++l) skips[l] = add(skips[l], residuals[l]);
  }
  Tensor h = skips.back();
  for (std::size_t l = up.size(); l-- > 0;) {
    const DecoderLevel& lv = up[l];
    h = concat({upsample_nearest2x(h), skips[l]}, 1);
    h = lv.res.forward(h, temb_act);
    if (lv.has_attn) {
      h = lv.attn.forward(h, p_s, trace ? &trace->maps : nullptr);
      if (trace) trace->levels.push_back(l);
    }
  }
  return conv_out.forward(silu(norm_out.forward(h)));
}

Tensor UNet::forward(const Tensor& z_t, const std::vector<std::size_t>& ts, const Tensor& p_s,
                     AttentionTrace* trace) const {
  return eps_theta(*this, nullptr, z_t, ts, Tensor(), p_s, trace);
}

void UNet::collect(const std::string& prefix, ParamList& out) {
  collect_encoder(prefix, out);
  for (std::size_t l = 0; l < up.size(); ++l) {
    const std::string p = join_name(prefix, "up." + std::to_string(l));
    up[l].res.collect(join_name(p, "res"), out);
    if (up[l].has_attn) up[l].attn.collect(join_name(p, "attn"), out);
  }
  norm_out.collect(join_name(prefix, "norm_out"), out);
  conv_out.collect(join_name(prefix, "conv_out"), out);
}

void UNet::collect_encoder(const std::string& prefix, ParamList& out) {
  if (time.base_dim > 0) time.collect(join_name(prefix, "time"), out);
  conv_in.collect(join_name(prefix, "conv_in"), out);
  for (std::size_t l = 0; l < down.size(); ++l) {
    const std::string p = join_name(prefix, "down." + std::to_string(l));
    down[l].res.collect(join_name(p, "res"), out);
    if (down[l].has_attn) down[l].attn.collect(join_name(p, "attn"), out);
    if (down[l].has_down) down[l].down.collect(join_name(p, "down"), out);
  }
}

ControlBranch::ControlBranch(const UNet& unet, Rng& rng) {
  encoder.config = unet.config;
  encoder.conv_in = unet.conv_in;
  encoder.down = unet.down;
  // The struct copies above alias the U-Net's tensors; give the branch its own.
  ParamList params;
  encoder.collect_encoder("", params);
  for (const auto& [name, p] : params) {
    p->tensor = p->tensor.detach();
    p->tensor.set_requires_grad(p->trainable);
  }
  hint = Conv2d(unet.config.latent_channels, unet.level_channels(0), 3, 1, 1, rng, Init::zero);
  for (std::size_t l = 0; l < unet.down.size(); ++l) {
    const std::size_t ch = unet.level_channels(l);
    zero_convs.emplace_back(ch, ch, 1, 1, 0, rng, Init::zero);
  }
}

std::vector<Tensor> ControlBranch::forward(const Tensor& z_t, const Tensor& z_l,
                                           const Tensor& temb_act, const Tensor& p_s) const {
  if (z_l.shape() != z_t.shape()) {
    throw ShapeError("control: z_l " + shape_str(z_l.shape()) + " does not match z_t " +
                     shape_str(z_t.shape()));
  }
  Tensor h = add(encoder.conv_in.forward(z_t), hint.forward(z_l));
  std::vector<Tensor> res;
  for (std::size_t l = 0; l < encoder.down.size(); ++l) {
    const EncoderLevel& lv = encoder.down[l];
    if (l > 0) h = encoder.down[l - 1].down.forward(h);
    h = lv.res.forward(h, temb_act);
    if (lv.has_attn) h = lv.attn.forward(h, p_s, nullptr);
    res.push_back(zero_convs[l].forward(h));
  }
  return res;
}

void ControlBranch::collect(const std::string& prefix, ParamList& out) {
  encoder.collect_encoder(join_name(prefix, "encoder"), out);
  hint.collect(join_name(prefix, "hint"), out);
  for (std::size_t l = 0; l < zero_convs.size(); ++l) {
    zero_convs[l].collect(join_name(prefix, "zero." + std::to_string(l)), out);
  }
}

Tensor eps_theta(const UNet& unet, const ControlBranch* control, const Tensor& z_t,
                 const std::vector<std::size_t>& ts, const Tensor& z_l, const Tensor& p_s,
                 AttentionTrace* trace) {
  const std::size_t levels = unet.down.size();
  const std::size_t div = std::size_t{1} << (levels - 1);
  if (z_t.rank() != 4 || z_t.dim(1) != unet.config.latent_channels || z_t.dim(2) % div != 0 ||
      z_t.dim(3) % div != 0) {
    throw ShapeError("unet: latent " + shape_str(z_t.shape()) + " needs " +
                     std::to_string(unet.config.latent_channels) + " channels and spatial dims divisible by " +
                     std::to_string(div));
  }
  if (ts.size() != z_t.dim(0)) throw ShapeError("unet: one timestep per sample expected");
  if (p_s.rank() != 3 || p_s.dim(0) != z_t.dim(0) || p_s.dim(2) != unet.config.context_dim) {
    throw ShapeError("unet: p_s " + shape_str(p_s.shape()) + " must be [N, n_query, " +
                     std::to_string(unet.config.context_dim) + "]");
  }
  const Tensor temb = unet.time_features(ts);
  std::vector<Tensor> residuals;
  if (control) residuals = control->forward(z_t, z_l, temb, p_s);
  return unet.decode(unet.encode(z_t, temb, p_s, trace), temb, p_s, residuals, trace);
}

}  // namespace lumos::denoiser
