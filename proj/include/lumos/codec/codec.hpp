#pragma once

#include <string>
#include <vector>

#include "lumos/numcore/nn.hpp"

namespace lumos::codec {

struct CodecConfig {
  std::string mode = "learned";  // identity | learned
  std::size_t f = 4;             // spatial downscale, power of two
  std::size_t c = 4;             // latent channels
  std::size_t width = 32;        // conv width of the learned codec
};

/// Deterministic autoencoder standing in for the VAE. Identity mode passes
/// images through unchanged (f = 1, c = 3).
class Codec {
 public:
  Codec() = default;
  Codec(const CodecConfig& config, Rng& rng);

  /// [N, 3, H, W] -> [N, c, H/f, W/f]
  Tensor encode(const Tensor& x) const;
  /// Unclamped reconstruction, for training.
  Tensor decode_raw(const Tensor& z) const;
  /// Reconstruction clamped to [0, 1].
  Tensor decode(const Tensor& z) const;
  void collect(const std::string& prefix, ParamList& out);
  bool identity() const { return config.mode == "identity"; }

  CodecConfig config;
  std::vector<Conv2d> enc, dec;
};

/// Trainable low-light image encoder: a strided conv stack producing z_l with
/// the latent shape of Codec::encode.
class ImageEncoder {
 public:
  ImageEncoder() = default;
  ImageEncoder(const CodecConfig& config, Rng& rng);
  Tensor forward(const Tensor& y) const;
  void collect(const std::string& prefix, ParamList& out);

  std::size_t f = 1;
  std::vector<Conv2d> layers;
};

/// Throws ShapeError unless x is [N, 3, H, W] with H and W divisible by f.
void check_image_batch(const char* op, const Tensor& x, std::size_t f);

}  // namespace lumos::codec
