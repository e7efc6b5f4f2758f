#include "lumos/codec/codec.hpp"

#include <stdexcept>

#include "lumos/numcore/ops.hpp"

namespace lumos::codec {
namespace {

std::size_t log2_exact(std::size_t f) {
  std::size_t n = 0;
  while ((std::size_t{1} << n) < f) ++n;
  if ((std::size_t{1} << n) != f) throw std::invalid_argument("codec: f must be a power of two");
  return n;
}

void collect_list(std::vector<Conv2d>& convs, const std::string& prefix, ParamList& out) {
  for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect(join_name(prefix, std::to_string(i)), out);
}

}  // namespace

void check_image_batch(const char* op, const Tensor& x, std::size_t f) {
  if (x.rank() != 4 || x.dim(1) != 3 || x.dim(2) % f != 0 || x.dim(3) % f != 0) {
    throw ShapeError(std::string(op) + ": expected [N, 3, H, W] with H, W divisible by " +
                     std::to_string(f) + ", got " + shape_str(x.shape()));
  }
}

Codec::Codec(const CodecConfig& cfg, Rng& rng) : config(cfg) {
  if (cfg.mode == "identity") {
    if (cfg.f != 1 || cfg.c != 3) throw std::invalid_argument("identity codec needs f=1, c=3");
    return;
  }
  if (cfg.mode != "learned") throw std::invalid_argument("unknown codec mode '" + cfg.mode + "'");
  const std::size_t levels = log2_exact(cfg.f);
  const std::size_t w = cfg.width;
  enc.emplace_back(3, w, 3, 1, 1, rng);
  for (std::size_t i = 0; i < levels; ++i) enc.emplace_back(w, w, 3, 2, 1, rng);
  enc.emplace_back(w, cfg.c, 3, 1, 1, rng);
  dec.emplace_back(cfg.c, w, 3, 1, 1, rng);
  for (std::size_t i = 0; i < levels; ++i) dec.emplace_back(w, w, 3, 1, 1, rng);
  dec.emplace_back(w, 3, 3, 1, 1, rng);
}

Tensor Codec::encode(const Tensor& x) const {
  check_image_batch("encode", x, config.f);
  if (identity()) return x;
  Tensor h = x;
  for (std::size_t i = 0; i + 1 < enc.size(); ++i) h = silu(enc[i].forward(h));
  return enc.back().forward(h);
}

Tensor Codec::decode_raw(const Tensor& z) const {
  if (z.rank() != 4 || z.dim(1) != config.c) {
    throw ShapeError("decode: expected [N, " + std::to_string(config.c) + ", h, w], got " +
                     shape_str(z.shape()));
  }
  if (identity()) return z;
  Tensor h = silu(dec.front().forward(z));
  for (std::size_t i = 1; i + 1 < dec.size(); ++i) h = silu(dec[i].forward(upsample_nearest2x(h)));
  return dec.back().forward(h);
}

Tensor Codec::decode(const Tensor& z) const { return clamp(decode_raw(z), 0.0, 1.0); }

void Codec::collect(const std::string& prefix, ParamList& out) {
  collect_list(enc, join_name(prefix, "enc"), out);
  collect_list(dec, join_name(prefix, "dec"), out);
}

ImageEncoder::ImageEncoder(const CodecConfig& cfg, Rng& rng) : f(cfg.f) {
  const std::size_t strided = log2_exact(cfg.f);
  // At least four layers; every stride-2 layer beyond the middle two adds one.
  const std::size_t n = std::max<std::size_t>(4, strided + 2);
  std::size_t ch = 16;
  layers.emplace_back(3, ch, 3, 1, 1, rng);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const std::size_t next = std::min<std::size_t>(2 * ch, 64);
    layers.emplace_back(ch, next, 3, i <= strided ? 2 : 1, 1, rng);
    ch = next;
  }
  layers.emplace_back(ch, cfg.c, 3, 1, 1, rng);
}

Tensor ImageEncoder::forward(const Tensor& y) const {
  check_image_batch("image_encode", y, f);
  Tensor h = y;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) h = silu(layers[i].forward(h));
  return layers.back().forward(h);
}

void ImageEncoder::collect(const std::string& prefix, ParamList& out) {
  collect_list(layers, join_name(prefix, "layers"), out);
}

}  // namespace lumos::codec
