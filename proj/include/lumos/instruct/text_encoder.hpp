#pragma once

#include <cstdint>
#include <vector>

#include "lumos/numcore/nn.hpp"

namespace lumos::instruct {

struct TextEncoderConfig {
  std::size_t vocab = 0;
  std::size_t d = 256;
  std::size_t layers = 2;
  std::size_t max_len = 77;
  std::size_t ffn_mult = 2;
};

/// Token embedding plus learned positions, pre-LN bidirectional self-attention
/// layers and a final LayerNorm. Maps ids [n] to e_t [n, d].
class TextEncoder {
 public:
  struct Layer {
    LayerNorm ln1, ln2;
    Attention attn;
    FeedForward ffn;
  };

  TextEncoder() = default;
  TextEncoder(const TextEncoderConfig& config, Rng& rng);
  Tensor forward(const std::vector<std::int32_t>& ids) const;
  void collect(const std::string& prefix, ParamList& out);

  TextEncoderConfig config;
  Parameter table;      // [vocab, d]
  Parameter positions;  // [max_len, d]
  std::vector<Layer> layers;
  LayerNorm final_norm;
};

}  // namespace lumos::instruct
