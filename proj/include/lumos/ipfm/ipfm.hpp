#pragma once

#include <string>
#include <vector>

#include "lumos/numcore/nn.hpp"

namespace lumos::ipfm {

/// [sin(t f_0) .. sin(t f_{h-1}), cos(t f_0) .. cos(t f_{h-1})] with h = dim/2 and
/// f_i = exp(-ln(10000) i / h). dim must be even.
std::vector<double> sinusoid(double t, std::size_t dim);
/// Rows of sinusoid() for each timestep: [ts.size(), dim].
Tensor sinusoid_batch(const std::vector<std::size_t>& ts, std::size_t dim, DType dtype);

/// Sinusoidal base followed by Linear -> SiLU -> Linear.
class TimeEmbedding {
 public:
  TimeEmbedding() = default;
  TimeEmbedding(std::size_t base_dim, std::size_t out_dim, Rng& rng, Init out_init = Init::normal);
  /// [ts.size(), out_dim]
  Tensor forward(const std::vector<std::size_t>& ts) const;
  void collect(const std::string& prefix, ParamList& out);

  std::size_t base_dim = 0;
  Linear fc1, fc2;
};

/// LayerNorm without affine, modulated as LN(x) * (1 + scale) + shift where
/// [scale, shift] = W SiLU(cond) + b. W and b start at zero.
class AdaLN {
 public:
  AdaLN() = default;
  AdaLN(std::size_t dim, std::size_t cond_dim, Rng& rng);
  /// x [N, dim], cond [1, cond_dim].
  Tensor forward(const Tensor& x, const Tensor& cond) const;
  void collect(const std::string& prefix, ParamList& out);

  std::size_t dim = 0;
  Linear modulation;
};

enum class Mode { none, mlp, ln, adaln };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

struct IpfmConfig {
  Mode mode = Mode::adaln;
  std::size_t n_blocks = 4;
  std::size_t n_query = 8;
  std::size_t d = 256;
  std::size_t ffn_mult = 2;
};

/// One fusion block. Depending on the mode:
///   adaln: p = q + temb; pb = AdaLN1(p); pt = p + CA(pb, [pb; e_t]);
///          out = pt + FFN(AdaLN2(pt))
///   ln:    as adaln with affine LayerNorm and no time input
///   mlp:   out = q + FFN(LN(q + mean_rows(e_t)))
class IpfmBlock {
 public:
  IpfmBlock() = default;
  IpfmBlock(Mode mode, std::size_t d, std::size_t ffn_mult, Rng& rng);
  /// q [n_query, d], e_t [n_text, d] (n_text may be 0), temb [1, d].
  Tensor forward(const Tensor& q, const Tensor& e_t, const Tensor& temb,
                 Tensor* attention = nullptr) const;
  void collect(const std::string& prefix, ParamList& out);

  Mode mode = Mode::adaln;
  AdaLN ada1, ada2;
  LayerNorm ln1, ln2;
  Attention attn;
  FeedForward ffn;
};

/// Learnable queries threaded through n_blocks fusion blocks, all conditioned
/// on the same timestep.
class IpfmStack {
 public:
  IpfmStack() = default;
  IpfmStack(const IpfmConfig& config, Rng& rng);
  /// e_t [n_text, d] -> p_s [n_query, d]
  Tensor forward(const Tensor& e_t, std::size_t t) const;
  /// Per-sample forward, stacked: [B, n_query, d].
  Tensor forward_batch(const std::vector<Tensor>& e_ts, const std::vector<std::size_t>& ts) const;
  void collect(const std::string& prefix, ParamList& out);

  IpfmConfig config;
  Parameter queries;  // [n_query, d]
  TimeEmbedding time;
  std::vector<IpfmBlock> blocks;
};

}  // namespace lumos::ipfm
