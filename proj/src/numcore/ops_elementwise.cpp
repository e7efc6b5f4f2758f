#include <algorithm>
#include <cmath>

#include "lumos/numcore/ops.hpp"

namespace lumos {
namespace {

using detail::Node;

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                       shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// For each output element, the flat index of the corresponding operand element.
std::vector<std::size_t> broadcast_index(const Shape& operand, const Shape& out) {
  const std::size_t n = numel_of(out);
  std::vector<std::size_t> idx(n);
  const std::size_t rank = out.size();
  const std::size_t lead = rank - operand.size();
  if (operand == out) {
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  // Trailing-suffix broadcast, e.g. [C] against [N, C].
  bool suffix = true;
  for (std::size_t i = 0; i < operand.size(); ++i) suffix = suffix && operand[i] == out[lead + i];
  if (suffix) {
    const std::size_t m = numel_of(operand);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i % m;
    return idx;
  }
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = operand.size(); i-- > 0;) {
    stride[lead + i] = operand[i] == 1 ? 0 : s;
    s *= operand[i];
  }
  std::vector<std::size_t> counter(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = offset;
    for (std::size_t ax = rank; ax-- > 0;) {
      ++counter[ax];
      offset += stride[ax];
      if (counter[ax] < out[ax]) break;
      offset -= stride[ax] * counter[ax];
      counter[ax] = 0;
    }
  }
  return idx;
}

enum class BinOp { add, sub, mul };

Tensor binary(const char* name, BinOp op, const Tensor& a, const Tensor& b) {
  detail::require_same_dtype(name, a, b);
  return dispatch(a.dtype(), [&]<class T>() {
    const Shape out_shape = broadcast_shape(name, a.shape(), b.shape());
    const std::size_t n = numel_of(out_shape);
    const auto av = a.data<T>();
    const auto bv = b.data<T>();
    std::vector<T> out(n);
    const bool same = a.shape() == out_shape && b.shape() == out_shape;
    auto ia = std::make_shared<std::vector<std::size_t>>();
    auto ib = std::make_shared<std::vector<std::size_t>>();
    if (same) {
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = op == BinOp::add ? av[i] + bv[i] : op == BinOp::sub ? av[i] - bv[i] : av[i] * bv[i];
      }
    } else {
      *ia = broadcast_index(a.shape(), out_shape);
      *ib = broadcast_index(b.shape(), out_shape);
      for (std::size_t i = 0; i < n; ++i) {
        const T x = av[(*ia)[i]];
        const T y = bv[(*ib)[i]];
        out[i] = op == BinOp::add ? x + y : op == BinOp::sub ? x - y : x * y;
      }
    }
    return detail::make_result(name, out_shape, std::move(out), {a, b},
                               [a, b, op, same, ia, ib](Node& self) {
      const auto& g = self.grad<T>();
      const std::size_t n = g.size();
      auto at_a = [&](std::size_t i) { return same ? i : (*ia)[i]; };
      auto at_b = [&](std::size_t i) { return same ? i : (*ib)[i]; };
      if (a.requires_grad()) {
        auto& ga = a.node().grad_buffer<T>();
        const auto bv = b.data<T>();
        for (std::size_t i = 0; i < n; ++i) {
          ga[at_a(i)] += op == BinOp::mul ? g[i] * bv[at_b(i)] : g[i];
        }
      }
      if (b.requires_grad()) {
        auto& gb = b.node().grad_buffer<T>();
        const auto av = a.data<T>();
        for (std::size_t i = 0; i < n; ++i) {
          gb[at_b(i)] += op == BinOp::mul ? g[i] * av[at_a(i)] : op == BinOp::sub ? -g[i] : g[i];
        }
      }
    });
  });
}

// Pointwise unary op given value and derivative functions of the input.
template <class F, class DF>
Tensor unary(const char* name, const Tensor& x, F f, DF df) {
  return dispatch(x.dtype(), [&]<class T>() {
    const auto xv = x.data<T>();
    std::vector<T> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = static_cast<T>(f(xv[i]));
    return detail::make_result(name, x.shape(), std::move(out), {x}, [x, df](Node& self) {
      const auto& g = self.grad<T>();
      auto& gx = x.node().grad_buffer<T>();
      const auto xv = x.data<T>();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * static_cast<T>(df(xv[i]));
    });
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinOp::mul, a, b); }

Tensor scale(const Tensor& x, double factor) {
  return unary("scale", x, [factor](auto v) { return v * factor; },
               [factor](auto) { return factor; });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary("add_scalar", x, [value](auto v) { return v + value; }, [](auto) { return 1.0; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary(
      "clamp", x, [lo, hi](auto v) { return std::clamp(static_cast<double>(v), lo, hi); },
      [lo, hi](auto v) { return v > lo && v < hi ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& x) {
  return unary(
      "silu", x,
      [](auto v) {
        const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(v)));
        return v * s;
      },
      [](auto v) {
        const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(v)));
        return s * (1.0 + v * (1.0 - s));
      });
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

Tensor gelu(const Tensor& x) {
  return unary(
      "gelu", x,
      [](auto v) {
        const double u = kGeluC * (v + 0.044715 * v * v * v);
        return 0.5 * v * (1.0 + std::tanh(u));
      },
      [](auto v) {
        const double u = kGeluC * (v + 0.044715 * v * v * v);
        const double th = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
        return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x, [](auto v) { return 1.0 / (1.0 + std::exp(-static_cast<double>(v))); },
      [](auto v) {
        const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(v)));
        return s * (1.0 - s);
      });
}

Tensor sum(const Tensor& x) {
  return dispatch(x.dtype(), [&]<class T>() {
    double s = 0.0;
    for (const T v : x.data<T>()) s += v;
    std::vector<T> out{static_cast<T>(s)};
    return detail::make_result("sum", {}, std::move(out), {x}, [x](Node& self) {
      const T g = self.grad<T>()[0];
      for (T& v : x.node().grad_buffer<T>()) v += g;
    });
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  if (axis >= x.rank()) throw ShapeError("sum_axis: axis out of range for " + shape_str(x.shape()));
  const Shape& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  Shape out_shape = s;
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return dispatch(x.dtype(), [&]<class T>() {
    const auto xv = x.data<T>();
    std::vector<T> out(outer * inner, T(0));
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t l = 0; l < len; ++l) {
        const T* src = xv.data() + (o * len + l) * inner;
        T* dst = out.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    }
    return detail::make_result("sum_axis", out_shape, std::move(out), {x},
                               [x, outer, inner, len](Node& self) {
      const auto& g = self.grad<T>();
      auto& gx = x.node().grad_buffer<T>();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t l = 0; l < len; ++l) {
          T* dst = gx.data() + (o * len + l) * inner;
          const T* src = g.data() + o * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
      }
    });
  });
}

Tensor mean_axis(const Tensor& x, std::size_t axis, bool keepdim) {
  const std::size_t len = x.dim(axis);
  if (len == 0) throw ShapeError("mean_axis over empty axis");
  return scale(sum_axis(x, axis, keepdim), 1.0 / static_cast<double>(len));
}

Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("mse_loss: shape mismatch " + shape_str(prediction.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  detail::require_same_dtype("mse_loss", prediction, target);
  return dispatch(prediction.dtype(), [&]<class T>() {
    const auto p = prediction.data<T>();
    const auto t = target.data<T>();
    const std::size_t n = p.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
      acc += d * d;
    }
    std::vector<T> out{static_cast<T>(acc / static_cast<double>(n))};
    return detail::make_result("mse_loss", {}, std::move(out), {prediction, target},
                               [prediction, target](Node& self) {
      const T g = self.grad<T>()[0];
      const auto p = prediction.data<T>();
      const auto t = target.data<T>();
      const T c = static_cast<T>(2.0) * g / static_cast<T>(p.size());
      if (prediction.requires_grad()) {
        auto& gp = prediction.node().grad_buffer<T>();
        for (std::size_t i = 0; i < p.size(); ++i) gp[i] += c * (p[i] - t[i]);
      }
      if (target.requires_grad()) {
        auto& gt = target.node().grad_buffer<T>();
        for (std::size_t i = 0; i < p.size(); ++i) gt[i] -= c * (p[i] - t[i]);
      }
    });
  });
}

}  // namespace lumos
