#include "lumos/numcore/nn.hpp"

#include <cmath>

namespace lumos {

Parameter::Parameter(Tensor t, bool train) : tensor(std::move(t)), trainable(train) {
  tensor.set_requires_grad(trainable);
}

void Parameter::set_trainable(bool on) {
  trainable = on;
  if (tensor.defined()) tensor.set_requires_grad(on);
}

void Parameter::convert(DType dtype) {
  if (!tensor.defined() || tensor.dtype() == dtype) return;
  tensor = tensor.to(dtype);
  tensor.set_requires_grad(trainable);
}

void set_trainable(const ParamList& params, bool on) {
  for (const auto& [name, p] : params) p->set_trainable(on);
}

void convert_params(const ParamList& params, DType dtype) {
  for (const auto& [name, p] : params) p->convert(dtype);
}

std::size_t count_elements(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& [name, p] : params) n += p->tensor.numel();
  return n;
}

namespace {

Tensor init_tensor(const Shape& shape, std::size_t fan_in, Rng& rng, Init init) {
  if (init == Init::zero) return Tensor::zeros(shape);
  return rng.normal_tensor(shape, DType::f32, 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

void add_param(ParamList& out, const std::string& prefix, const std::string& name, Parameter& p) {
  if (p.tensor.defined()) out.emplace_back(join_name(prefix, name), &p);
}

}  // namespace

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, Init init, bool with_bias)
    : weight(init_tensor({in, out}, in, rng, init)) {
  if (with_bias) bias = Parameter(Tensor::zeros({out}));
}

Tensor Linear::forward(const Tensor& x) const { return linear(x, weight.tensor, bias.tensor); }

void Linear::collect(const std::string& prefix, ParamList& out) {
  add_param(out, prefix, "weight", weight);
  add_param(out, prefix, "bias", bias);
}

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_,
               std::size_t padding_, Rng& rng, Init init)
    : weight(init_tensor({out, in, kernel, kernel}, in * kernel * kernel, rng, init)),
      bias(Tensor::zeros({out})),
      stride(stride_),
      padding(padding_) {}

Tensor Conv2d::forward(const Tensor& x) const {
  return conv2d(x, weight.tensor, bias.tensor, stride, padding);
}

void Conv2d::collect(const std::string& prefix, ParamList& out) {
  add_param(out, prefix, "weight", weight);
  add_param(out, prefix, "bias", bias);
}

GroupNorm::GroupNorm(std::size_t groups_, std::size_t channels)
    : gain(Tensor::full({channels}, 1.0)), bias(Tensor::zeros({channels})), groups(groups_) {}

Tensor GroupNorm::forward(const Tensor& x) const {
  return group_norm(x, groups, gain.tensor, bias.tensor);
}

void GroupNorm::collect(const std::string& prefix, ParamList& out) {
  add_param(out, prefix, "gain", gain);
  add_param(out, prefix, "bias", bias);
}

LayerNorm::LayerNorm(std::size_t dim) : gain(Tensor::full({dim}, 1.0)), bias(Tensor::zeros({dim})) {}

Tensor LayerNorm::forward(const Tensor& x) const { return layer_norm(x, gain.tensor, bias.tensor); }

void LayerNorm::collect(const std::string& prefix, ParamList& out) {
  add_param(out, prefix, "gain", gain);
  add_param(out, prefix, "bias", bias);
}

Attention::Attention(std::size_t query_dim, std::size_t context_dim, std::size_t inner_dim,
                     Rng& rng, bool zero_out)
    : to_q(query_dim, inner_dim, rng, Init::normal, false),
      to_k(context_dim, inner_dim, rng, Init::normal, false),
      to_v(context_dim, inner_dim, rng, Init::normal, false),
      to_out(inner_dim, query_dim, rng, zero_out ? Init::zero : Init::normal) {}

AttentionOutput Attention::forward(const Tensor& x, const Tensor& context) const {
  AttentionOutput a =
      scaled_dot_attention(to_q.forward(x), to_k.forward(context), to_v.forward(context));
  return {to_out.forward(a.out), a.weights};
}

void Attention::collect(const std::string& prefix, ParamList& out) {
  to_q.collect(join_name(prefix, "to_q"), out);
  to_k.collect(join_name(prefix, "to_k"), out);
  to_v.collect(join_name(prefix, "to_v"), out);
  to_out.collect(join_name(prefix, "to_out"), out);
}

FeedForward::FeedForward(std::size_t dim, std::size_t hidden, Rng& rng, bool zero_out)
    : fc1(dim, hidden, rng), fc2(hidden, dim, rng, zero_out ? Init::zero : Init::normal) {}

Tensor FeedForward::forward(const Tensor& x) const { return fc2.forward(gelu(fc1.forward(x))); }

void FeedForward::collect(const std::string& prefix, ParamList& out) {
  fc1.collect(join_name(prefix, "fc1"), out);
  fc2.collect(join_name(prefix, "fc2"), out);
}

}  // namespace lumos
