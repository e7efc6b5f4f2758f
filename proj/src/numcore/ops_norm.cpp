#include <cmath>
#include <memory>

#include "lumos/numcore/ops.hpp"

namespace lumos {
namespace {

using detail::Node;

// Normalises `rows` contiguous runs of `len` elements. Element j of row r uses
// affine channel channel_of(r, j).
template <class ChannelOf>
Tensor normalize(const char* op, const Tensor& x, std::size_t rows, std::size_t len,
                 ChannelOf channel_of, const Tensor& gain, const Tensor& bias, double eps) {
  if (eps <= 0.0) throw std::invalid_argument(std::string(op) + ": eps must be positive");
  if (len == 0) throw ShapeError(std::string(op) + ": empty normalisation axis");
  if (gain.defined()) detail::require_same_dtype(op, x, gain);
  if (bias.defined()) detail::require_same_dtype(op, x, bias);
  return dispatch(x.dtype(), [&]<class T>() {
    const auto xv = x.data<T>();
    auto xhat = std::make_shared<std::vector<T>>(xv.size());
    auto rstd = std::make_shared<std::vector<T>>(rows);
    std::vector<T> out(xv.size());
    const T* gv = gain.defined() ? gain.data<T>().data() : nullptr;
    const T* bv = bias.defined() ? bias.data<T>().data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      const T* src = xv.data() + r * len;
      double m = 0.0;
      for (std::size_t j = 0; j < len; ++j) m += src[j];
      m /= static_cast<double>(len);
      double v = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double d = src[j] - m;
        v += d * d;
      }
      v /= static_cast<double>(len);
      const double rs = 1.0 / std::sqrt(v + eps);
      (*rstd)[r] = static_cast<T>(rs);
      T* xh = xhat->data() + r * len;
      T* dst = out.data() + r * len;
      for (std::size_t j = 0; j < len; ++j) {
        xh[j] = static_cast<T>((src[j] - m) * rs);
        const std::size_t c = channel_of(r, j);
        dst[j] = xh[j] * (gv ? gv[c] : T(1)) + (bv ? bv[c] : T(0));
      }
    }
    std::vector<Tensor> inputs{x};
    if (gain.defined()) inputs.push_back(gain);
    if (bias.defined()) inputs.push_back(bias);
    return detail::make_result(op, x.shape(), std::move(out), inputs,
                               [x, gain, bias, xhat, rstd, rows, len, channel_of](Node& self) {
      const auto& g = self.grad<T>();
      const T* gv = gain.defined() ? gain.data<T>().data() : nullptr;
      T* ggain = gain.defined() && gain.requires_grad() ? gain.node().grad_buffer<T>().data() : nullptr;
      T* gbias = bias.defined() && bias.requires_grad() ? bias.node().grad_buffer<T>().data() : nullptr;
      T* gx = x.requires_grad() ? x.node().grad_buffer<T>().data() : nullptr;
      std::vector<T> dxhat(len);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = g.data() + r * len;
        const T* xh = xhat->data() + r * len;
        double mean_d = 0.0, mean_dx = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t c = channel_of(r, j);
          if (ggain) ggain[c] += gr[j] * xh[j];
          if (gbias) gbias[c] += gr[j];
          dxhat[j] = gr[j] * (gv ? gv[c] : T(1));
          mean_d += dxhat[j];
          mean_dx += static_cast<double>(dxhat[j]) * xh[j];
        }
        if (!gx) continue;
        mean_d /= static_cast<double>(len);
        mean_dx /= static_cast<double>(len);
        const double rs = (*rstd)[r];
        T* dst = gx + r * len;
        for (std::size_t j = 0; j < len; ++j) {
          dst[j] += static_cast<T>(rs * (dxhat[j] - mean_d - xh[j] * mean_dx));
        }
      }
    });
  });
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t len = x.shape().back();
  for (const Tensor* p : {&gain, &bias}) {
    if (p->defined() && (p->rank() != 1 || p->dim(0) != len)) {
      throw ShapeError("layer_norm: affine shape " + shape_str(p->shape()) + " for input " +
                       shape_str(x.shape()));
    }
  }
  return normalize("layer_norm", x, x.numel() / len, len,
                   [](std::size_t, std::size_t j) { return j; }, gain, bias, eps);
}

Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (x.rank() < 2) throw ShapeError("group_norm: expected [N, C, ...], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1);
  if (groups == 0 || c % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible into " +
                     std::to_string(groups) + " groups");
  }
  for (const Tensor* p : {&gain, &bias}) {
    if (p->defined() && (p->rank() != 1 || p->dim(0) != c)) {
      throw ShapeError("group_norm: affine shape " + shape_str(p->shape()) + " for " +
                       std::to_string(c) + " channels");
    }
  }
  const std::size_t spatial = x.numel() / (n * c);
  const std::size_t per_group = c / groups;
  return normalize(
      "group_norm", x, n * groups, per_group * spatial,
      [groups, per_group, spatial](std::size_t r, std::size_t j) {
        return (r % groups) * per_group + j / spatial;
      },
      gain, bias, eps);
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0) throw ShapeError("softmax: scalar input");
  const std::size_t len = x.shape().back();
  if (len == 0) throw ShapeError("softmax: empty axis");
  const std::size_t rows = x.numel() / len;
  return dispatch(x.dtype(), [&]<class T>() {
    const auto xv = x.data<T>();
    std::vector<T> out(xv.size());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* src = xv.data() + r * len;
      T* dst = out.data() + r * len;
      T mx = src[0];
      for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, src[j]);
      double s = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        dst[j] = static_cast<T>(std::exp(static_cast<double>(src[j] - mx)));
        s += dst[j];
      }
      const T inv = static_cast<T>(1.0 / s);
      for (std::size_t j = 0; j < len; ++j) dst[j] *= inv;
    }
    return detail::make_result("softmax", x.shape(), std::move(out), {x},
                               [x, rows, len](Node& self) {
      const auto& g = self.grad<T>();
      const auto& y = self.values<T>();
      auto& gx = x.node().grad_buffer<T>();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gr = g.data() + r * len;
        const T* yr = y.data() + r * len;
        double dotp = 0.0;
        for (std::size_t j = 0; j < len; ++j) dotp += static_cast<double>(gr[j]) * yr[j];
        T* dst = gx.data() + r * len;
        for (std::size_t j = 0; j < len; ++j) dst[j] += static_cast<T>(yr[j] * (gr[j] - dotp));
      }
    });
  });
}

AttentionOutput scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() < 2 || k.rank() != q.rank() || v.rank() != q.rank()) {
    throw ShapeError("attention: q, k, v must share rank >= 2, got " + shape_str(q.shape()) + ", " +
                     shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  if (q.shape().back() != k.shape().back()) {
    throw ShapeError("attention: q and k feature widths differ: " + shape_str(q.shape()) + " vs " +
                     shape_str(k.shape()));
  }
  if (k.dim(k.rank() - 2) != v.dim(v.rank() - 2)) {
    throw ShapeError("attention: k and v sequence lengths differ: " + shape_str(k.shape()) +
                     " vs " + shape_str(v.shape()));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.shape().back()));
  Tensor weights = softmax(scale(matmul_nt(q, k), inv_sqrt_d));
  return {matmul(weights, v), weights};
}

}  // namespace lumos
