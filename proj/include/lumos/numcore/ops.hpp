#pragma once

#include <cstdint>
#include <vector>

#include "lumos/numcore/tensor.hpp"

namespace lumos {

// Elementwise binary ops broadcast numpy-style (right-aligned shapes, size-1
// axes stretch).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
/// Gradient passes where lo < x < hi.
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor silu(const Tensor& x);
/// tanh approximation
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = false);
Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim = false);
/// Mean of squared differences over all elements.
Tensor mse_loss(const Tensor& prediction, const Tensor& target);

/// [..., M, K] x [..., K, N] with identical leading axes, or [..., M, K] x [K, N].
Tensor matmul(const Tensor& a, const Tensor& b);
/// a x transpose(b) over the last two axes: [..., M, K] x [..., N, K] -> [..., M, N].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
/// x[..., in] * w[in, out] + bias[out]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Cross-correlation of x [N, C, H, W] with w [O, C, K, K]; bias [O] optional.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, std::size_t stride,
              std::size_t padding);

/// Normalises over the last axis; gain and bias (shape [last]) may be undefined.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
/// x [N, C, ...]: statistics over each group of C/groups channels.
Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
/// Softmax over the last axis.
Tensor softmax(const Tensor& x);

struct AttentionOutput {
  Tensor out;
  /// Row-stochastic attention weights [..., Nq, Nk].
  Tensor weights;
};

/// softmax(q k^T / sqrt(d)) v over the last two axes.
AttentionOutput scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

Tensor reshape(const Tensor& x, const Shape& shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);
/// Stacks equally shaped tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);
/// Nearest-neighbour 2x upsampling of [N, C, H, W].
Tensor upsample_nearest2x(const Tensor& x);
/// Rows of table [V, D] selected by ids -> [ids.size(), D].
Tensor embedding(const Tensor& table, const std::vector<std::int32_t>& ids);

}  // namespace lumos
