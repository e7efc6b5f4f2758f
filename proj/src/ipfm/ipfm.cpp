#include "lumos/ipfm/ipfm.hpp"

#include <cmath>
#include <stdexcept>

namespace lumos::ipfm {

std::vector<double> sinusoid(double t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw std::invalid_argument("sinusoid: dim must be even");
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[i] = std::sin(t * freq);
    out[half + i] = std::cos(t * freq);
  }
  return out;
}

Tensor sinusoid_batch(const std::vector<std::size_t>& ts, std::size_t dim, DType dtype) {
  std::vector<double> all;
  all.reserve(ts.size() * dim);
  for (std::size_t t : ts) {
    const auto row = sinusoid(static_cast<double>(t), dim);
    all.insert(all.end(), row.begin(), row.end());
  }
  return Tensor::from_values({ts.size(), dim}, all, dtype);
}

TimeEmbedding::TimeEmbedding(std::size_t base, std::size_t out_dim, Rng& rng, Init out_init)
    : base_dim(base), fc1(base, out_dim, rng), fc2(out_dim, out_dim, rng, out_init) {}

Tensor TimeEmbedding::forward(const std::vector<std::size_t>& ts) const {
  const Tensor base = sinusoid_batch(ts, base_dim, fc1.weight.tensor.dtype());
  return fc2.forward(silu(fc1.forward(base)));
}

void TimeEmbedding::collect(const std::string& prefix, ParamList& out) {
  fc1.collect(join_name(prefix, "fc1"), out);
  fc2.collect(join_name(prefix, "fc2"), out);
}

AdaLN::AdaLN(std::size_t dim_, std::size_t cond_dim, Rng& rng)
    : dim(dim_), modulation(cond_dim, 2 * dim_, rng, Init::zero) {}

Tensor AdaLN::forward(const Tensor& x, const Tensor& cond) const {
  const Tensor mod = modulation.forward(silu(cond));
  const Tensor scale_part = slice(mod, mod.rank() - 1, 0, dim);
  const Tensor shift_part = slice(mod, mod.rank() - 1, dim, dim);
  const Tensor normed = layer_norm(x, Tensor(), Tensor());
  return add(mul(normed, add_scalar(scale_part, 1.0)), shift_part);
}

void AdaLN::collect(const std::string& prefix, ParamList& out) {
  modulation.collect(join_name(prefix, "modulation"), out);
}

Mode parse_mode(const std::string& name) {
  if (name == "none") return Mode::none;
  if (name == "mlp") return Mode::mlp;
  if (name == "ln") return Mode::ln;
  if (name == "adaln") return Mode::adaln;
  throw std::invalid_argument("unknown ipfm mode '" + name + "' (none|mlp|ln|adaln)");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::none: return "none";
    case Mode::mlp: return "mlp";
    case Mode::ln: return "ln";
    case Mode::adaln: return "adaln";
  }
  return "?";
}

IpfmBlock::IpfmBlock(Mode mode_, std::size_t d, std::size_t ffn_mult, Rng& rng) : mode(mode_) {
  switch (mode) {
    case Mode::none:
      throw std::invalid_argument("IpfmBlock: mode none has no blocks");
    case Mode::mlp:
      ln1 = LayerNorm(d);
      break;
    case Mode::ln:
      ln1 = LayerNorm(d);
      ln2 = LayerNorm(d);
      attn = Attention(d, d, d, rng, true);
      break;
    case Mode::adaln:
      ada1 = AdaLN(d, d, rng);
      ada2 = AdaLN(d, d, rng);
      attn = Attention(d, d, d, rng, true);
      break;
  }
  ffn = FeedForward(d, ffn_mult * d, rng, true);
}

Tensor IpfmBlock::forward(const Tensor& q, const Tensor& e_t, const Tensor& temb,
                          Tensor* attention) const {
  if (e_t.rank() != 2 || e_t.dim(1) != q.dim(1)) {
    throw ShapeError("ipfm block: text embedding " + shape_str(e_t.shape()) +
                     " does not match query width " + std::to_string(q.dim(1)));
  }
  if (mode == Mode::mlp) {
    Tensor pooled = e_t.dim(0) == 0 ? Tensor::zeros({1, q.dim(1)}, q.dtype())
                                    : mean_axis(e_t, 0, true);
    return add(q, ffn.forward(ln1.forward(add(q, pooled))));
  }
  const bool ada = mode == Mode::adaln;
  const Tensor p = ada ? add(q, temb) : q;
  const Tensor pb = ada ? ada1.forward(p, temb) : ln1.forward(p);
  const AttentionOutput a = attn.forward(pb, concat({pb, e_t}, 0));
  if (attention) *attention = a.weights;
  const Tensor pt = add(p, a.out);
  const Tensor normed = ada ? ada2.forward(pt, temb) : ln2.forward(pt);
  return add(pt, ffn.forward(normed));
}

void IpfmBlock::collect(const std::string& prefix, ParamList& out) {
  if (mode == Mode::adaln) {
    ada1.collect(join_name(prefix, "ada1"), out);
    ada2.collect(join_name(prefix, "ada2"), out);
  } else {
    ln1.collect(join_name(prefix, "ln1"), out);
    if (mode == Mode::ln) ln2.collect(join_name(prefix, "ln2"), out);
  }
  if (mode != Mode::mlp) attn.collect(join_name(prefix, "attn"), out);
  ffn.collect(join_name(prefix, "ffn"), out);
}

IpfmStack::IpfmStack(const IpfmConfig& cfg, Rng& rng)
    : config(cfg), queries(rng.normal_tensor({cfg.n_query, cfg.d}, DType::f32, 1.0)) {
  if (cfg.n_query == 0 || cfg.d == 0) throw std::invalid_argument("ipfm: n_query and d must be > 0");
  if (cfg.mode == Mode::none) return;
  if (cfg.mode == Mode::adaln) time = TimeEmbedding(cfg.d, cfg.d, rng, Init::zero);
  for (std::size_t i = 0; i < cfg.n_blocks; ++i) blocks.emplace_back(cfg.mode, cfg.d, cfg.ffn_mult, rng);
}

Tensor IpfmStack::forward(const Tensor& e_t, std::size_t t) const {
  Tensor q = queries.tensor;
  if (blocks.empty()) return q;
  const Tensor temb = config.mode == Mode::adaln ? time.forward({t}) : Tensor();
  for (const IpfmBlock& b : blocks) q = b.forward(q, e_t, temb);
  return q;
}

Tensor IpfmStack::forward_batch(const std::vector<Tensor>& e_ts,
                                const std::vector<std::size_t>& ts) const {
  if (e_ts.size() != ts.size() || e_ts.empty()) {
    throw ShapeError("ipfm: need one timestep per text embedding");
  }
  std::vector<Tensor> rows;
  rows.reserve(e_ts.size());
  for (std::size_t i = 0; i < e_ts.size(); ++i) rows.push_back(forward(e_ts[i], ts[i]));
  return stack(rows);
}

void IpfmStack::collect(const std::string& prefix, ParamList& out) {
  out.emplace_back(join_name(prefix, "queries"), &queries);
  if (config.mode == Mode::adaln) time.collect(join_name(prefix, "time"), out);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].collect(join_name(prefix, "blocks." + std::to_string(i)), out);
  }
}

}  // namespace lumos::ipfm
