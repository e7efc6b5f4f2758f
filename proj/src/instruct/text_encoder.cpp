#include "lumos/instruct/text_encoder.hpp"

#include <stdexcept>

namespace lumos::instruct {

TextEncoder::TextEncoder(const TextEncoderConfig& cfg, Rng& rng)
    : config(cfg),
      table(rng.normal_tensor({cfg.vocab, cfg.d}, DType::f32, 0.5)),
      positions(rng.normal_tensor({cfg.max_len, cfg.d}, DType::f32, 0.1)),
      final_norm(cfg.d) {
  if (cfg.vocab == 0 || cfg.d == 0) throw std::invalid_argument("text encoder: empty vocab or width");
  for (std::size_t i = 0; i < cfg.layers; ++i) {
    layers.push_back({LayerNorm(cfg.d), LayerNorm(cfg.d), Attention(cfg.d, cfg.d, cfg.d, rng, false),
                      FeedForward(cfg.d, cfg.ffn_mult * cfg.d, rng, false)});
  }
}

Tensor TextEncoder::forward(const std::vector<std::int32_t>& ids) const {
  if (ids.size() > config.max_len) {
    throw std::length_error("text encoder: " + std::to_string(ids.size()) + " tokens exceed " +
                            std::to_string(config.max_len));
  }
  Tensor x = add(embedding(table.tensor, ids), slice(positions.tensor, 0, 0, ids.size()));
  for (const Layer& l : layers) {
    const Tensor h = l.ln1.forward(x);
    x = add(x, l.attn.forward(h, h).out);
    x = add(x, l.ffn.forward(l.ln2.forward(x)));
  }
  return final_norm.forward(x);
}

void TextEncoder::collect(const std::string& prefix, ParamList& out) {
  out.emplace_back(join_name(prefix, "table"), &table);
  out.emplace_back(join_name(prefix, "positions"), &positions);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = join_name(prefix, "layers." + std::to_string(i));
    layers[i].ln1.collect(join_name(p, "ln1"), out);
    layers[i].ln2.collect(join_name(p, "ln2"), out);
    layers[i].attn.collect(join_name(p, "attn"), out);
    layers[i].ffn.collect(join_name(p, "ffn"), out);
  }
  final_norm.collect(join_name(prefix, "final_norm"), out);
}

}  // namespace lumos::instruct
